//! Canonical flat model files: a single variable `s` numbering the states.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::model::{EventRef, FdctmcModel, StateId};

/// Shortest decimal form that parses back to the same `f64`.
fn num(x: f64) -> String {
    format!("{x:?}")
}

/// Writes `model` as a flat model file with one state per value of `s`.
///
/// Re-elaborating the output gives back the same rates, kernels, rewards and
/// targets when every state is reachable from the initial state (always the
/// case for elaborated models). Impulses on an fd event must not depend on
/// the successor state, since reward items only constrain the source.
pub fn export_model(model: &FdctmcModel) -> Result<String> {
    let n = model.num_states();
    let mut out = String::new();
    let w = &mut out;
    writeln!(w, "fdctmc").unwrap();
    writeln!(w).unwrap();
    writeln!(w, "module flat").unwrap();
    for ev in model.events() {
        writeln!(w, "  fdelay {} = {};", ev.name, num(ev.delay)).unwrap();
    }
    writeln!(w, "  s : [0..{}] init {};", n.saturating_sub(1), model.initial().0).unwrap();
    if !model.metadata().variables.is_empty() {
        for s in model.states() {
            writeln!(w, "  // s={} {}", s.0, model.metadata().describe(s)).unwrap();
        }
    }

    let mut impulses = Vec::new();
    let mut next_label = 0usize;
    for s in model.states() {
        for &(d, q) in model.rates().row(s) {
            let imp = model.rewards().impulse(s, EventRef::Exponential, d);
            let label = if imp != 0.0 {
                let l = format!("t{next_label}");
                next_label += 1;
                impulses.push((l.clone(), s, imp));
                l
            } else {
                String::new()
            };
            writeln!(w, "  [{label}] s={} -> {} : (s'={});", s.0, num(q), d.0).unwrap();
        }
    }
    for (e, ev) in model.event_ids().zip(model.events()) {
        for (s, kernel) in ev.kernel_rows() {
            let mut imp = None;
            for (d, p) in kernel.iter() {
                if p <= 0.0 {
                    continue;
                }
                let v = model.rewards().impulse(s, EventRef::Fd(e), d);
                match imp {
                    None => imp = Some(v),
                    Some(u) if u != v => {
                        return Err(Error::Export(format!(
                            "impulse of fd event {} in state {} depends on the successor",
                            ev.name, s.0
                        )))
                    }
                    _ => {}
                }
            }
            let label = match imp {
                Some(v) if v != 0.0 => {
                    let l = format!("t{next_label}");
                    next_label += 1;
                    impulses.push((l.clone(), s, v));
                    l
                }
                _ => String::new(),
            };
            let branches: Vec<String> = kernel.iter().map(|(d, p)| format!("{} : (s'={})", num(p), d.0)).collect();
            writeln!(w, "  [{label}] s={} --{}-> {};", s.0, ev.name, branches.join(" + ")).unwrap();
        }
    }
    writeln!(w, "endmodule").unwrap();

    if let Some(target) = model.target() {
        let states: Vec<String> = target.iter().map(|s: StateId| format!("s={}", s.0)).collect();
        let guard = if states.is_empty() { "false".to_string() } else { states.join(" | ") };
        writeln!(w).unwrap();
        writeln!(w, "label \"target\" = {guard};").unwrap();
    }

    let rates: Vec<(StateId, f64)> = model
        .states()
        .map(|s| (s, model.rewards().rate(s)))
        .filter(|&(_, r)| r != 0.0)
        .collect();
    if !rates.is_empty() || !impulses.is_empty() {
        writeln!(w).unwrap();
        writeln!(w, "rewards").unwrap();
        for (s, r) in rates {
            writeln!(w, "  s={} : {};", s.0, num(r)).unwrap();
        }
        for (l, s, v) in impulses {
            writeln!(w, "  [{l}] s={} : {};", s.0, num(v)).unwrap();
        }
        writeln!(w, "endrewards").unwrap();
    }
    Ok(out)
}
