//! Per-event discretization bounds: grid extent `d̄`, grid step `δ` and
//! per-action numerical precision `κ`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{EventId, FdctmcModel};
use crate::reward::{NodeKind, StepGraph};
use crate::subordinated::SubordinatedChain;

/// Model quantities entering the bound formulas for one fd event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundInputs {
    /// Share of the overall precision allotted to this event.
    pub epsilon: f64,
    /// Upper bound `V̄al` on the optimal expected reward.
    pub val_upper: f64,
    /// Uniformization rate `λ` of the subordinated chain.
    pub lambda: f64,
    /// Smallest positive branching probability `minP` of the subordinated chain.
    pub min_branching: f64,
    /// Number of states `|S_fd|` of the subordinated chain.
    pub region_size: usize,
    /// Smallest rate reward `minR` in the subordinated chain.
    pub min_reward: f64,
    /// Largest reward rate `maxR` in the subordinated chain.
    pub max_reward: f64,
    /// Number of decision states `|S'|` of the discretized MDP.
    pub decision_states: usize,
    /// Lower bound on the expected reward of any single MDP step.
    pub min_step_reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscretizationBounds {
    pub event: EventId,
    pub event_name: String,
    pub inputs: BoundInputs,
    /// `Bound[#] = V̄al / min_step_reward`, a bound on the expected number of MDP steps.
    pub bound_steps: f64,
    pub alpha: f64,
    pub d1: f64,
    /// `δ = α / D1` before rounding to the grid.
    pub raw_step: f64,
    /// Largest delay considered, `d̄`.
    pub upper_delay: f64,
    /// `κ`, evaluated with the unrounded step.
    pub kappa: f64,
    /// Number of grid points `K = ⌈d̄ / δ⌉`.
    pub steps: usize,
    /// Grid step `d̄ / K ≤ δ`; action `i` is delay `i · step`, `i = 1..=K`.
    pub step: f64,
}

impl DiscretizationBounds {
    pub fn delay(&self, index: usize) -> f64 {
        index as f64 * self.step
    }

    /// Grid index (1-based) nearest to `delay`.
    pub fn nearest_index(&self, delay: f64) -> usize {
        ((delay / self.step).round() as usize).clamp(1, self.steps)
    }

    /// Replaces the grid by `steps` points up to `upper_delay` (default `d̄`).
    pub fn with_grid(mut self, upper_delay: Option<f64>, steps: usize) -> Self {
        let steps = steps.max(1);
        self.upper_delay = upper_delay.unwrap_or(self.upper_delay);
        self.steps = steps;
        self.step = self.upper_delay / steps as f64;
        self
    }
}

/// Largest grid size accepted before the bounds are considered degenerate.
const MAX_GRID_POINTS: f64 = 1e15;

/// Evaluates the bound formulas:
///
/// ```text
/// Bound[#] = V̄al / min_step_reward
/// α  = min{ ε / (Bound[#]·(1+V̄al)·|S'|) ; 1 / (2·Bound[#]·|S'|) }
/// D1 = max{ 2λ ; 1·(λ+1)·maxR }
/// δ  = α / D1
/// d̄  = max{ V̄al / (minP^|S_fd| · minR) ; e·|ln(α/2)| / (λ·minP) }
/// κ  = ε·δ·minR / (2·|S'|·(1+V̄al))
/// ```
///
/// `D1 = max(2λ, 1·(λ+1)·maxR)`.
pub fn bounds_from_inputs(event: EventId, event_name: &str, inputs: BoundInputs) -> Result<DiscretizationBounds> {
    let degenerate = |reason: String| Error::DegenerateBounds {
        event: event_name.to_string(),
        reason,
    };
    let BoundInputs {
        epsilon,
        val_upper,
        lambda,
        min_branching,
        region_size,
        min_reward,
        max_reward,
        decision_states,
        min_step_reward,
    } = inputs;
    if !val_upper.is_finite() {
        return Err(Error::InfiniteUpperBound);
    }
    if !(epsilon > 0.0) {
        return Err(degenerate(format!("precision must be positive, got {epsilon}")));
    }
    if !(min_branching > 0.0) {
        return Err(degenerate("minimal branching probability is zero".into()));
    }
    if !(min_reward > 0.0) {
        return Err(degenerate("minimal rate reward in the region is zero".into()));
    }
    if !(min_step_reward > 0.0) {
        return Err(degenerate("minimal one-step reward is zero".into()));
    }
    let s_prime = decision_states.max(1) as f64;
    let bound_steps = val_upper / min_step_reward;
    let alpha = (epsilon / (bound_steps * (1.0 + val_upper) * s_prime)).min(1.0 / (2.0 * bound_steps * s_prime));
    let d1 = (2.0 * lambda).max(1.0 * (lambda + 1.0) * max_reward);
    let raw_step = alpha / d1;
    let upper_delay = (val_upper / (min_branching.powi(region_size as i32) * min_reward))
        .max(std::f64::consts::E * (alpha / 2.0).ln().abs() / (lambda * min_branching));
    let kappa = epsilon * raw_step * min_reward / (2.0 * s_prime * (1.0 + val_upper));
    let points = (upper_delay / raw_step).ceil();
    if !(points.is_finite() && points <= MAX_GRID_POINTS && raw_step > 0.0) {
        return Err(degenerate(format!("grid of {points:e} points")));
    }
    let steps = (points as usize).max(1);
    Ok(DiscretizationBounds {
        event,
        event_name: event_name.to_string(),
        inputs,
        bound_steps,
        alpha,
        d1,
        raw_step,
        upper_delay,
        kappa,
        steps,
        step: upper_delay / steps as f64,
    })
}

/// Lower bound on the expected reward of one step of the discretized MDP,
/// for any choice of delays.
///
/// An exponential step from `s` earns at least `ℛ(s)/E(s)`. An fd step with
/// delay `t` whose region is left at rate at most `λ` earns at least
/// `minR·E[min(τ, t)] + c·P(τ ≥ t) ≥ minR/λ + e^{-λt}·(c - minR/λ)`, where
/// `c` is the smallest fd impulse; over all `t` this is at least `min(c, minR/λ)`.
pub(crate) fn min_step_reward(model: &FdctmcModel, graph: &StepGraph) -> f64 {
    let mut best = f64::INFINITY;
    for (i, &s) in graph.states.iter().enumerate() {
        match graph.kinds[i] {
            NodeKind::Exponential => best = best.min(model.rewards().rate(s) / model.exit_rate(s)),
            NodeKind::Fd(e) => {
                let sub = &graph.chains[&e];
                best = best
                    .min(sub.min_fire_impulse(model))
                    .min(sub.stats.min_reward / sub.stats.lambda);
            }
            NodeKind::Target | NodeKind::Deadlock => {}
        }
    }
    best
}

pub(crate) fn inputs_for(
    sub: &SubordinatedChain,
    epsilon: f64,
    val_upper: f64,
    decision_states: usize,
    min_step_reward: f64,
) -> BoundInputs {
    BoundInputs {
        epsilon,
        val_upper,
        lambda: sub.stats.lambda,
        min_branching: sub.stats.min_branching,
        region_size: sub.stats.size,
        min_reward: sub.stats.min_reward,
        max_reward: sub.stats.max_reward,
        decision_states,
        min_step_reward,
    }
}

/// Discretization bounds for `event` at precision `epsilon` given the upper bound `val_upper`.
///
/// `epsilon` is used as is; splitting a global precision across events is up to the caller.
pub fn compute_bounds(model: &FdctmcModel, event: EventId, epsilon: f64, val_upper: f64) -> Result<DiscretizationBounds> {
    let graph = StepGraph::build(model)?;
    let sub = graph
        .chains
        .get(&event)
        .ok_or_else(|| Error::NoSettingState(model.event(event).name.clone()))?;
    let inputs = inputs_for(sub, epsilon, val_upper, graph.len(), min_step_reward(model, &graph));
    bounds_from_inputs(event, &model.event(event).name, inputs)
}
