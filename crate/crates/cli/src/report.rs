use std::collections::BTreeMap;
use std::fmt::{self, Write};

use serde::Serialize;

use crate::Format;

/// Bumped whenever a field is renamed or removed.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct EventInfo {
    pub name: String,
    pub delay: f64,
    pub active_states: usize,
    pub setting_state: Option<String>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DiagnosticInfo {
    pub kind: String,
    pub restriction: Option<u8>,
    pub message: String,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ValidateReport {
    pub schema: String,
    pub ok: bool,
    pub states: usize,
    pub transitions: usize,
    pub target_states: Option<usize>,
    pub events: Vec<EventInfo>,
    pub warnings: Vec<String>,
    pub diagnostics: Vec<DiagnosticInfo>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ExpRewardReport {
    pub schema: String,
    pub value: f64,
    pub epsilon: f64,
    pub residual: f64,
    pub iterations: usize,
    pub infinite_states: usize,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BoundsInfo {
    pub event: String,
    pub steps: usize,
    pub step: f64,
    pub upper_delay: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub bound_steps: f64,
    pub d1: f64,
    pub raw_step: f64,
    pub lambda: f64,
    pub min_branching: f64,
    pub min_reward: f64,
    pub max_reward: f64,
    pub min_step_reward: f64,
    pub decision_states: usize,
    pub region_size: usize,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SynthesizeReport {
    pub schema: String,
    pub epsilon: f64,
    pub delays: BTreeMap<String, f64>,
    pub grid_indices: BTreeMap<String, usize>,
    pub value: f64,
    pub achieved: f64,
    pub val_upper: f64,
    pub solver: String,
    pub iterations: usize,
    pub products: u64,
    pub action_counts: BTreeMap<String, usize>,
    pub bounds: Vec<BoundsInfo>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulateReport {
    pub schema: String,
    pub mean: f64,
    pub std_error: f64,
    pub runs: usize,
    pub truncated_runs: usize,
    pub deadlocked_runs: usize,
    pub requested_runs: usize,
    pub seed: u64,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StrategyCost {
    pub products: u64,
    pub seconds: f64,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PrecomputedCost {
    /// One product per grid point.
    pub products: u64,
    /// Sparse matrix-matrix products spent building the step matrix.
    pub matrix_products: u64,
    pub seconds: f64,
    pub density: f64,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BenchReport {
    pub schema: String,
    pub states: usize,
    pub delta: f64,
    pub steps: usize,
    pub lambda: f64,
    pub kappa: f64,
    pub jumps_per_step: usize,
    pub kernel_density: f64,
    pub naive: StrategyCost,
    pub iterative: StrategyCost,
    pub precomputed: PrecomputedCost,
    pub naive_over_iterative: f64,
}

#[derive(Debug)]
pub enum Report {
    Validate(ValidateReport),
    ExpReward(ExpRewardReport),
    Synthesize(SynthesizeReport),
    Simulate(SimulateReport),
    Bench(BenchReport),
}

/// Plain decimal for moderate magnitudes, scientific notation otherwise; both
/// parse back to the same `f64`.
pub struct Num(pub f64);

impl fmt::Display for Num {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.0.abs();
        if a == 0.0 || !a.is_finite() || (1e-4..1e15).contains(&a) {
            write!(f, "{}", self.0)
        } else {
            write!(f, "{:e}", self.0)
        }
    }
}

pub fn schema(verb: &str) -> String {
    format!("fdctmc/{verb}/v{SCHEMA_VERSION}")
}

impl Report {
    pub fn exit_code(&self) -> u8 {
        match self {
            Report::Validate(r) if !r.ok => 1,
            _ => 0,
        }
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Json => {
                let mut s = match self {
                    Report::Validate(r) => serde_json::to_string_pretty(r),
                    Report::ExpReward(r) => serde_json::to_string_pretty(r),
                    Report::Synthesize(r) => serde_json::to_string_pretty(r),
                    Report::Simulate(r) => serde_json::to_string_pretty(r),
                    Report::Bench(r) => serde_json::to_string_pretty(r),
                }
                .expect("reports serialize");
                s.push('\n');
                s
            }
            Format::Text => {
                let mut out = String::new();
                self.text(&mut out).expect("writing to a string");
                out
            }
        }
    }

    fn text(&self, w: &mut String) -> fmt::Result {
        match self {
            Report::Validate(r) => {
                writeln!(w, "states: {}", r.states)?;
                writeln!(w, "transitions: {}", r.transitions)?;
                match r.target_states {
                    Some(n) => writeln!(w, "target states: {n}")?,
                    None => writeln!(w, "target: none")?,
                }
                for e in &r.events {
                    writeln!(
                        w,
                        "fd event {}: delay {}, active in {} states, set in {}",
                        e.name,
                        Num(e.delay),
                        e.active_states,
                        e.setting_state.as_deref().unwrap_or("no state")
                    )?;
                }
                for warning in &r.warnings {
                    writeln!(w, "warning: {warning}")?;
                }
                for d in &r.diagnostics {
                    writeln!(w, "{}", d.message)?;
                }
                writeln!(w, "{}", if r.ok { "ok" } else { "invalid" })
            }
            Report::ExpReward(r) => {
                writeln!(w, "value: {}", Num(r.value))?;
                writeln!(w, "residual: {}", Num(r.residual))?;
                writeln!(w, "iterations: {}", r.iterations)?;
                writeln!(w, "infinite states: {}", r.infinite_states)
            }
            Report::Synthesize(r) => {
                for (name, &d) in &r.delays {
                    writeln!(w, "delay {name}: {}", Num(d))?;
                }
                writeln!(w, "value: {}", Num(r.value))?;
                writeln!(w, "achieved: {}", Num(r.achieved))?;
                writeln!(w, "value at declared delays: {}", Num(r.val_upper))?;
                writeln!(w, "epsilon: {}", Num(r.epsilon))?;
                writeln!(w, "solver: {}", r.solver)?;
                writeln!(w, "iterations: {}", r.iterations)?;
                writeln!(w, "products: {}", r.products)?;
                for b in &r.bounds {
                    writeln!(
                        w,
                        "grid {}: {} points of {} up to {}, kappa {}",
                        b.event, b.steps, Num(b.step), Num(b.upper_delay), Num(b.kappa)
                    )?;
                }
                Ok(())
            }
            Report::Simulate(r) => {
                writeln!(w, "mean: {}", Num(r.mean))?;
                writeln!(w, "std error: {}", Num(r.std_error))?;
                writeln!(w, "runs: {}", r.runs)?;
                writeln!(w, "truncated runs: {}", r.truncated_runs)?;
                writeln!(w, "deadlocked runs: {}", r.deadlocked_runs)
            }
            Report::Bench(r) => {
                writeln!(
                    w,
                    "chain: {} states, lambda {}, delta {}, {} steps, kappa {}",
                    r.states, Num(r.lambda), Num(r.delta), r.steps, Num(r.kappa)
                )?;
                writeln!(w, "jumps per step: {}", r.jumps_per_step)?;
                writeln!(w, "naive: {} products in {:.6} s", r.naive.products, r.naive.seconds)?;
                writeln!(
                    w,
                    "iterative: {} products in {:.6} s",
                    r.iterative.products, r.iterative.seconds
                )?;
                writeln!(
                    w,
                    "precomputed: {} products plus {} matrix products in {:.6} s",
                    r.precomputed.products, r.precomputed.matrix_products, r.precomputed.seconds
                )?;
                writeln!(
                    w,
                    "density: kernel {}, precomputed {}",
                    Num(r.kernel_density), Num(r.precomputed.density)
                )?;
                writeln!(w, "naive/iterative: {}", Num(r.naive_over_iterative))
            }
        }
    }
}
