use fdctmc::lang::{elaborate_with_warnings, export_model, parse, parse_model};
use fdctmc::{models, Error, EventRef, StateId};

fn err(src: &str) -> Error {
    parse_model(src).expect_err("model should be rejected")
}

#[test]
fn dpm_state_space_grows_with_buffer() {
    for (name, n) in [("dpm2", 2), ("dpm4", 4), ("dpm6", 6), ("dpm8", 8)] {
        let m = models::load(name).unwrap().unwrap();
        let reachable = fdctmc::model::reachable_states(&m);
        assert_eq!(reachable.len(), 2 * n + 3, "{name}");
        assert_eq!(m.events().len(), 2);
    }
}

#[test]
fn dpm2_reads_as_written() {
    let m = models::load("dpm2").unwrap().unwrap();
    let f1 = m.event_by_name("f1").unwrap();
    let f2 = m.event_by_name("f2").unwrap();
    assert_eq!(m.event(f1).delay, 1.0);
    assert_eq!(m.event(f2).delay, 2.0);
    let s0 = m.initial();
    assert_eq!(m.active_events(s0), &[f1]);
    assert!((m.exit_rate(s0) - 1.39).abs() < 1e-15);
    assert!((m.rewards().rate(s0) - 0.95).abs() < 1e-15);
    let (sleep, _) = m.event(f1).kernel(s0).unwrap().iter().next().unwrap();
    assert_eq!(m.active_events(sleep), &[f2]);
    assert!((m.rewards().impulse(s0, EventRef::Fd(f1), sleep) - 0.006).abs() < 1e-15);
}

#[test]
fn constants_and_arithmetic_in_updates() {
    let m = parse_model(
        "fdctmc
const int K = 3;
const double r = 2 * 1.5;
module m
  x : [0..K] init 0;
  [] x<K -> r : (x'=min(x+2, K));
endmodule
label \"target\" = x=K;
rewards
  x<K : 1;
endrewards
",
    )
    .unwrap();
    assert_eq!(m.num_states(), 3);
    assert_eq!(m.rates().row(StateId(0)), &[(StateId(1), 3.0)]);
}

#[test]
fn syntax_errors_point_at_the_token() {
    match err("fdctmc\nmodule m\n  s : [0..1] init 0;\n  [] s=0 -> 1.0 (s'=1);\nendmodule\n") {
        Error::Syntax { line, column, message } => {
            assert_eq!((line, column), (4, 17));
            assert!(message.contains("expected ':'"), "{message}");
        }
        e => panic!("unexpected {e}"),
    }
}

#[test]
fn unknown_identifiers_are_rejected() {
    let e = err("fdctmc\nmodule m\n  s : [0..1] init 0;\n  [] t=0 -> 1.0 : (s'=1);\nendmodule\n");
    assert!(e.to_string().contains('t'), "{e}");
}

#[test]
fn updates_out_of_range_are_rejected() {
    let e = err("fdctmc\nmodule m\n  s : [0..1] init 0;\n  [] s=0 -> 1.0 : (s'=2);\nendmodule\n");
    assert!(matches!(e, Error::Elaboration(_)), "{e}");
}

#[test]
fn undeclared_fd_event_is_rejected() {
    let e = err("fdctmc\nmodule m\n  s : [0..1] init 0;\n  [] s=0 --g-> (s'=1);\nendmodule\n");
    assert!(e.to_string().contains('g'), "{e}");
}

#[test]
fn fd_probabilities_must_sum_to_one() {
    let e = err("fdctmc
module m
  fdelay f = 1;
  s : [0..2] init 0;
  [] s=0 --f-> 0.5 : (s'=1) + 0.4 : (s'=2);
endmodule
");
    assert!(e.to_string().contains("probabilities sum to 0.9"), "{e}");
}

#[test]
fn duplicate_event_names_are_rejected() {
    let e = err("fdctmc
module a
  fdelay f = 1;
  s : [0..1] init 0;
  [] s=0 --f-> (s'=1);
endmodule
module b
  fdelay f = 2;
  t : [0..1] init 0;
  [] t=0 --f-> (t'=1);
endmodule
");
    assert!(e.to_string().contains('f'), "{e}");
}

#[test]
fn unused_event_produces_a_warning() {
    let ast = parse(
        "fdctmc
module m
  fdelay f = 1;
  fdelay g = 1;
  s : [0..1] init 0;
  [] s=0 --f-> (s'=1);
endmodule
",
    )
    .unwrap();
    let (_, warnings) = elaborate_with_warnings(&ast).unwrap();
    assert!(warnings.iter().any(|w| w.contains('g')), "{warnings:?}");
}

#[test]
fn exported_models_parse_back_identically() {
    for &(name, _) in models::ALL {
        let m = models::load(name).unwrap().unwrap();
        let text = export_model(&m).unwrap();
        let back = parse_model(&text).unwrap();
        assert_eq!(back.num_states(), m.num_states(), "{name}");
        assert_eq!(back.delays(), m.delays(), "{name}");
        for s in m.states() {
            assert_eq!(back.rates().row(s), m.rates().row(s), "{name}");
            assert_eq!(back.rewards().rate(s), m.rewards().rate(s), "{name}");
            assert_eq!(back.is_target(s), m.is_target(s), "{name}");
        }
        let body = |t: &str| t.lines().filter(|l| !l.trim_start().starts_with("//")).collect::<Vec<_>>().join("\n");
        assert_eq!(body(&export_model(&back).unwrap()), body(&text), "{name}");
    }
}
