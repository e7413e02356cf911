use fdctmc::lang::parse_model;
use fdctmc::model::ModelBuilder;
use fdctmc::reward::{expected_reward, ExpectedRewardOptions};
use fdctmc::sim::{estimate_expected_reward, run_rng, run_with, simulate_run, RunEnd, ScriptedSampler, DEFAULT_STEP_CAP};
use fdctmc::{models, EventRef, FdctmcModel, StateId};
use rand::Rng;

fn dpm2() -> FdctmcModel {
    models::load("dpm2").unwrap().unwrap()
}

fn state_of(model: &FdctmcModel, mode: i64, q: i64) -> StateId {
    let meta = model.metadata();
    let idx = meta.valuations.iter().position(|v| v == &vec![mode, q]).unwrap();
    StateId(idx)
}

#[test]
fn dpm_trace_keeps_wake_timer_running() {
    let m = dpm2();
    let f1 = m.event_by_name("f1").unwrap();
    let f2 = m.event_by_name("f2").unwrap();
    let mut sampler = ScriptedSampler::new([1.18, 1.5], []);
    let mut trace = Vec::new();
    run_with(&m, &mut sampler, 2, Some(&mut trace));
    assert_eq!(trace.len(), 2);
    assert_eq!(trace[0].state, state_of(&m, 0, 0));
    assert_eq!(trace[0].event, EventRef::Fd(f1));
    assert_eq!(trace[0].dwell, 1.0);
    assert_eq!(trace[1].state, state_of(&m, 2, 0));
    assert_eq!(trace[1].event, EventRef::Exponential);
    assert_eq!(trace[1].dwell, 1.5);

    let mut sampler = ScriptedSampler::new([1.18, 1.5, 10.0], []);
    let mut trace = Vec::new();
    run_with(&m, &mut sampler, 3, Some(&mut trace));
    assert_eq!(trace[2].state, state_of(&m, 2, 1));
    assert_eq!(trace[2].timers, vec![(f2, 0.5)]);
    assert_eq!(trace[2].event, EventRef::Fd(f2));
    assert_eq!(trace[2].dwell, 0.5);
}

#[test]
fn timers_persist_along_traces() {
    let m = dpm2();
    for run in 0..200 {
        let r = simulate_run(&m, 11, run, DEFAULT_STEP_CAP);
        assert!(r.reached_target());
        for w in r.steps.windows(2) {
            for &(f, t) in &w[1].timers {
                let before = w[0].timers.iter().find(|&&(g, _)| g == f);
                match before {
                    Some(&(_, t0)) if w[0].event != EventRef::Fd(f) => {
                        assert!((t - (t0 - w[0].dwell)).abs() < 1e-12)
                    }
                    _ => assert_eq!(t, m.event(f).delay),
                }
            }
        }
    }
}

#[test]
fn same_seed_same_estimate() {
    let m = dpm2();
    let a = estimate_expected_reward(&m, 20_000, 5, DEFAULT_STEP_CAP).unwrap();
    let b = estimate_expected_reward(&m, 20_000, 5, DEFAULT_STEP_CAP).unwrap();
    assert_eq!(a, b);
    let c = estimate_expected_reward(&m, 20_000, 6, DEFAULT_STEP_CAP).unwrap();
    assert_ne!(a.mean, c.mean);
}

#[test]
fn unit_reward_toy_matches_at_a_million_runs() {
    let mut b = ModelBuilder::new(2);
    b.rate(StateId(0), StateId(1), 1.0).rate_reward(StateId(0), 1.0).target(StateId(1));
    let m = b.build().unwrap();
    let est = estimate_expected_reward(&m, 1_000_000, 1, DEFAULT_STEP_CAP).unwrap();
    assert_eq!(est.runs, 1_000_000);
    assert!((est.mean - 1.0).abs() <= 3.0 * est.std_error, "{est:?}");
}

#[test]
fn dpm2_matches_reward_engine() {
    let m = dpm2();
    let exact = expected_reward(&m, &ExpectedRewardOptions::default()).unwrap().value;
    let est = estimate_expected_reward(&m, 200_000, 2, DEFAULT_STEP_CAP).unwrap();
    assert!((est.mean - exact).abs() <= 3.0 * est.std_error, "{exact} vs {est:?}");
}

#[test]
fn standard_error_shrinks_by_root_two() {
    let m = dpm2();
    let mut ratios = Vec::new();
    for seed in 0..8 {
        let small = estimate_expected_reward(&m, 10_000, seed, DEFAULT_STEP_CAP).unwrap();
        let big = estimate_expected_reward(&m, 20_000, seed + 100, DEFAULT_STEP_CAP).unwrap();
        ratios.push(small.std_error / big.std_error);
    }
    let mean = ratios.iter().sum::<f64>() / ratios.len() as f64;
    assert!((mean - 2f64.sqrt()).abs() < 0.07, "{ratios:?}");
}

const CHAIN: &str = "fdctmc
module m
  s : [0..2] init 0;
  [] s=0 -> 1.0 : (s'=1) + 2.0 : (s'=2);
  [] s=1 -> 3.0 : (s'=2) + 0.5 : (s'=0);
endmodule
label \"target\" = s=2;
rewards
  s<2 : 1;
endrewards
";

fn competing_clocks(model: &FdctmcModel, seed: u64) -> f64 {
    let mut rng = run_rng(seed, 0);
    let mut s = model.initial();
    let mut t = 0.0;
    while !model.is_target(s) {
        let (mut best, mut next) = (f64::INFINITY, s);
        for &(d, q) in model.rates().row(s) {
            let u: f64 = rng.gen();
            let x = -(1.0 - u).ln() / q;
            if x < best {
                best = x;
                next = d;
            }
        }
        t += best;
        s = next;
    }
    t
}

fn kolmogorov_p(d: f64, n: usize, m: usize) -> f64 {
    let ne = (n * m) as f64 / (n + m) as f64;
    let l = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    let mut p = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        p += 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * l * l).exp();
    }
    p.clamp(0.0, 1.0)
}

#[test]
fn resampled_clock_matches_competing_clocks() {
    let m = parse_model(CHAIN).unwrap();
    let n = 5000;
    let mut a: Vec<f64> = (0..n)
        .map(|i| {
            let (r, end, _) = run_with(&m, &mut run_rng(42, i), DEFAULT_STEP_CAP, None);
            assert_eq!(end, RunEnd::Target);
            r
        })
        .collect();
    let mut b: Vec<f64> = (0..n).map(|i| competing_clocks(&m, 1000 + i)).collect();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0f64);
    while i < a.len() && j < b.len() {
        if a[i] <= b[j] {
            i += 1;
        } else {
            j += 1;
        }
        d = d.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    let p = kolmogorov_p(d, a.len(), b.len());
    assert!(p > 0.01, "D={d} p={p}");
}
