//! Discrete-event simulation of runs with persistent fd timers.
//!
//! Every run draws from its own ChaCha8 substream: the generator is seeded
//! with `seed` and switched to the run number as stream, so an estimate depends only
//! on the seed and the number of runs, never on the thread count.

use std::io;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution as _, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Distribution, EventId, EventRef, FdctmcModel, StateId};

pub const DEFAULT_STEP_CAP: usize = 1_000_000;

const CHUNK: usize = 4096;

/// Source of the random draws a run consumes.
pub trait Sampler {
    /// Waiting time of an exponential clock with positive `rate`.
    fn exponential(&mut self, rate: f64) -> f64;
    /// Uniform draw from `[0, 1)`.
    fn uniform(&mut self) -> f64;
}

impl Sampler for ChaCha8Rng {
    fn exponential(&mut self, rate: f64) -> f64 {
        Exp::new(rate).expect("positive rate").sample(self)
    }

    fn uniform(&mut self) -> f64 {
        self.gen::<f64>()
    }
}

/// Replays fixed draws. Exponential draws are returned as given regardless of
/// the rate; uniform draws default to 0 once the script runs out.
#[derive(Debug, Clone, Default)]
pub struct ScriptedSampler {
    exponentials: std::collections::VecDeque<f64>,
    uniforms: std::collections::VecDeque<f64>,
}

impl ScriptedSampler {
    pub fn new(exponentials: impl IntoIterator<Item = f64>, uniforms: impl IntoIterator<Item = f64>) -> Self {
        Self {
            exponentials: exponentials.into_iter().collect(),
            uniforms: uniforms.into_iter().collect(),
        }
    }
}

impl Sampler for ScriptedSampler {
    fn exponential(&mut self, _rate: f64) -> f64 {
        self.exponentials.pop_front().unwrap_or(f64::INFINITY)
    }

    fn uniform(&mut self) -> f64 {
        self.uniforms.pop_front().unwrap_or(0.0)
    }
}

/// Generator for run `run` of a batch seeded with `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run);
    rng
}

/// One step of a run: the state, the fd timers on entry, the event that
/// fired after `dwell` time units and the reward collected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunStep {
    pub state: StateId,
    pub timers: Vec<(EventId, f64)>,
    pub event: EventRef,
    pub dwell: f64,
    pub reward: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunEnd {
    Target,
    /// No event is active in the final state.
    Deadlock,
    /// The step cap was hit.
    Truncated,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub reward: f64,
    pub steps: Vec<RunStep>,
    pub end: RunEnd,
    pub final_state: StateId,
}

impl Run {
    pub fn reached_target(&self) -> bool {
        self.end == RunEnd::Target
    }
}

fn pick(dist: impl Iterator<Item = (StateId, f64)>, total: f64, u: f64) -> StateId {
    let goal = u * total;
    let mut acc = 0.0;
    let mut last = None;
    for (s, w) in dist {
        acc += w;
        last = Some(s);
        if goal < acc {
            return s;
        }
    }
    last.expect("non-empty distribution")
}

fn pick_fd(kernel: &Distribution, u: f64) -> StateId {
    pick(kernel.iter(), kernel.total(), u)
}

/// Simulates one run, recording the steps into `trace` when given.
///
/// Needs only a well-formed model: several fd events may be active at once.
pub fn run_with<S: Sampler>(
    model: &FdctmcModel,
    sampler: &mut S,
    step_cap: usize,
    mut trace: Option<&mut Vec<RunStep>>,
) -> (f64, RunEnd, StateId) {
    let mut state = model.initial();
    let mut timers: Vec<Option<f64>> = vec![None; model.events().len()];
    for &f in model.active_events(state) {
        timers[f.index()] = Some(model.event(f).delay);
    }
    let mut kept = timers.clone();
    let mut reward = 0.0;
    let mut steps = 0usize;
    loop {
        if model.is_target(state) {
            return (reward, RunEnd::Target, state);
        }
        if steps >= step_cap {
            return (reward, RunEnd::Truncated, state);
        }
        let mut fired: Option<(EventId, f64)> = None;
        for &f in model.active_events(state) {
            let t = timers[f.index()].expect("active event has a timer");
            if fired.map_or(true, |(_, best)| t < best) {
                fired = Some((f, t));
            }
        }
        let rate = model.exit_rate(state);
        let exp_time = if rate > 0.0 { sampler.exponential(rate) } else { f64::INFINITY };
        let (event, dwell) = match fired {
            Some((f, t)) if t <= exp_time => (EventRef::Fd(f), t),
            _ if exp_time.is_finite() => (EventRef::Exponential, exp_time),
            _ => return (reward, RunEnd::Deadlock, state),
        };
        let u = sampler.uniform();
        let next = match event {
            EventRef::Exponential => pick(model.rates().row(state).iter().copied(), rate, u),
            EventRef::Fd(f) => pick_fd(model.event(f).kernel(state).expect("active"), u),
        };
        let gained = dwell * model.rewards().rate(state) + model.rewards().impulse(state, event, next);
        reward += gained;
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(RunStep {
                state,
                timers: model
                    .active_events(state)
                    .iter()
                    .map(|&f| (f, timers[f.index()].unwrap()))
                    .collect(),
                event,
                dwell,
                reward: gained,
            });
        }
        for &f in model.active_events(state) {
            timers[f.index()] = timers[f.index()].map(|t| t - dwell);
        }
        kept.iter_mut().for_each(|t| *t = None);
        for &f in model.active_events(next) {
            let persists = model.event(f).is_active(state) && event != EventRef::Fd(f);
            kept[f.index()] = Some(if persists {
                timers[f.index()].unwrap()
            } else {
                model.event(f).delay
            });
        }
        std::mem::swap(&mut timers, &mut kept);
        state = next;
        steps += 1;
    }
}

/// Simulates run number `run` of a batch seeded with `seed`, keeping the trace.
pub fn simulate_run(model: &FdctmcModel, seed: u64, run: u64, step_cap: usize) -> Run {
    let mut steps = Vec::new();
    let (reward, end, final_state) = run_with(model, &mut run_rng(seed, run), step_cap, Some(&mut steps));
    Run {
        reward,
        steps,
        end,
        final_state,
    }
}

/// Sample mean of the reward over the runs that reached the target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Estimate {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(runs)`.
    pub std_error: f64,
    /// Runs that reached the target.
    pub runs: usize,
    /// Runs stopped by the step cap.
    pub truncated_runs: usize,
    /// Runs stuck in a state without events.
    pub deadlocked_runs: usize,
}

#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    n: usize,
    mean: f64,
    m2: f64,
    truncated: usize,
    deadlocked: usize,
}

impl Tally {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let d = x - self.mean;
        self.mean += d / self.n as f64;
        self.m2 += d * (x - self.mean);
    }

    fn merge(self, o: Tally) -> Tally {
        let n = self.n + o.n;
        let (mean, m2) = if n == 0 {
            (0.0, 0.0)
        } else {
            let d = o.mean - self.mean;
            let w = o.n as f64 / n as f64;
            (self.mean + d * w, self.m2 + o.m2 + d * d * self.n as f64 * w)
        };
        Tally {
            n,
            mean,
            m2,
            truncated: self.truncated + o.truncated,
            deadlocked: self.deadlocked + o.deadlocked,
        }
    }
}

/// Monte Carlo estimate of the expected reward until the target.
///
/// Runs are simulated in parallel in fixed chunks and merged in chunk order,
/// so equal inputs give bit-identical estimates.
pub fn estimate_expected_reward(model: &FdctmcModel, runs: usize, seed: u64, step_cap: usize) -> Result<Estimate> {
    model.require_target()?;
    if runs == 0 {
        return Err(Error::AllRunsTruncated(0));
    }
    let chunks = runs.div_ceil(CHUNK);
    let tallies: Vec<Tally> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut t = Tally::default();
            for run in c * CHUNK..((c + 1) * CHUNK).min(runs) {
                let (reward, end, _) = run_with(model, &mut run_rng(seed, run as u64), step_cap, None);
                match end {
                    RunEnd::Target => t.push(reward),
                    RunEnd::Truncated => t.truncated += 1,
                    RunEnd::Deadlock => t.deadlocked += 1,
                }
            }
            t
        })
        .collect();
    let total = tallies.into_iter().fold(Tally::default(), Tally::merge);
    if total.n == 0 {
        return Err(Error::AllRunsTruncated(runs));
    }
    let var = if total.n > 1 { total.m2 / (total.n - 1) as f64 } else { 0.0 };
    Ok(Estimate {
        mean: total.mean,
        std_error: (var / total.n as f64).sqrt(),
        runs: total.n,
        truncated_runs: total.truncated,
        deadlocked_runs: total.deadlocked,
    })
}

/// Writes a trace as CSV with columns `step,state,event,dwell,reward`.
pub fn write_trace_csv<W: io::Write>(model: &FdctmcModel, steps: &[RunStep], out: W) -> io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "state", "event", "dwell", "reward"])?;
    for (i, st) in steps.iter().enumerate() {
        let state = if model.metadata().variables.is_empty() {
            st.state.0.to_string()
        } else {
            model.metadata().describe(st.state)
        };
        let event = match st.event {
            EventRef::Exponential => "exp".to_string(),
            EventRef::Fd(f) => model.event(f).name.clone(),
        };
        w.write_record([
            i.to_string(),
            state,
            event,
            st.dwell.to_string(),
            st.reward.to_string(),
        ])?;
    }
    w.flush()
}
