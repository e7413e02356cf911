//! The discretized MDP: one action per grid delay at every fd setting state.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{EventId, FdctmcModel, StateId};
use crate::reward::{exponential_step, LinearSystem, NodeKind, StepGraph};
use crate::subordinated::SubordinatedChain;
use crate::synthesis::bounds::DiscretizationBounds;
use crate::transient::{sweep_plan, GridStepper, TransientStrategy};

/// All delay choices of one fd setting state, stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    pub event: EventId,
    pub step: f64,
    /// MDP states the actions can lead to; columns of `probabilities`.
    pub outcomes: Vec<usize>,
    probabilities: Vec<f64>,
    rewards: Vec<f64>,
    /// Vector-matrix products spent building the grid.
    pub products: u64,
}

impl ActionGrid {
    /// `probabilities` holds `rewards.len()` rows of `outcomes.len()` entries.
    pub fn new(event: EventId, step: f64, outcomes: Vec<usize>, probabilities: Vec<f64>, rewards: Vec<f64>) -> Self {
        assert_eq!(probabilities.len(), outcomes.len() * rewards.len());
        ActionGrid {
            event,
            step,
            outcomes,
            probabilities,
            rewards,
            products: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// Delay of action `index`, counted from 1.
    pub fn delay(&self, index: usize) -> f64 {
        index as f64 * self.step
    }

    /// Outcome probabilities and expected reward of action `index` (from 1).
    pub fn action(&self, index: usize) -> (&[f64], f64) {
        let n = self.outcomes.len();
        let row = index - 1;
        (&self.probabilities[row * n..(row + 1) * n], self.rewards[row])
    }

    fn value(&self, index: usize, x: &[f64]) -> f64 {
        let (p, r) = self.action(index);
        r + self.outcomes.iter().zip(p).map(|(&o, &p)| p * x[o]).sum::<f64>()
    }

    /// Best action (smallest index on ties) and its value.
    fn best(&self, x: &[f64]) -> (usize, f64) {
        let mut best = (1, f64::INFINITY);
        for i in 1..=self.len() {
            let v = self.value(i, x);
            if v < best.1 {
                best = (i, v);
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Choice {
    Target,
    /// No policy reaches the target almost surely from here.
    Infinite,
    Single { transitions: Vec<(usize, f64)>, reward: f64 },
    Grid(ActionGrid),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedMdp {
    /// Model state of every MDP state.
    pub states: Vec<StateId>,
    pub choices: Vec<Choice>,
    pub initial: usize,
}

impl DiscretizedMdp {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn action_counts(&self) -> BTreeMap<EventId, usize> {
        self.grids().map(|g| (g.event, g.len())).collect()
    }

    pub fn grids(&self) -> impl Iterator<Item = &ActionGrid> {
        self.choices.iter().filter_map(|c| match c {
            Choice::Grid(g) => Some(g),
            _ => None,
        })
    }

    pub fn products(&self) -> u64 {
        self.grids().map(|g| g.products).sum()
    }
}

/// Vector-matrix products a single sweep over the grid of `bounds` costs.
pub fn sweep_cost(sub: &SubordinatedChain, bounds: &DiscretizationBounds) -> u128 {
    let plan = sweep_plan(&sub.chain, bounds.step, bounds.steps, bounds.kappa / 2.0);
    bounds.steps as u128 * plan.jumps.max(1) as u128
}

pub(crate) fn check_budget(required: u128, budget: u128) -> Result<()> {
    if required > budget {
        Err(Error::BudgetExceeded { required, budget })
    } else {
        Ok(())
    }
}

/// Builds the discretized MDP for the given per-event bounds.
pub fn build_discretized_mdp(
    model: &FdctmcModel,
    bounds: &[DiscretizationBounds],
    strategy: TransientStrategy,
    budget: u128,
) -> Result<DiscretizedMdp> {
    let graph = StepGraph::build(model)?;
    from_graph(model, &graph, bounds, strategy, budget)
}

pub(crate) fn from_graph(
    model: &FdctmcModel,
    graph: &StepGraph,
    bounds: &[DiscretizationBounds],
    strategy: TransientStrategy,
    budget: u128,
) -> Result<DiscretizedMdp> {
    let by_event: BTreeMap<EventId, &DiscretizationBounds> = bounds.iter().map(|b| (b.event, b)).collect();
    let mut required = 0u128;
    for (&e, sub) in &graph.chains {
        let b = by_event.get(&e).ok_or(Error::MissingDelay(e))?;
        required += sweep_cost(sub, b);
    }
    check_budget(required, budget)?;

    let infinite = graph.infinite_nodes();
    let choices: Vec<Choice> = (0..graph.len())
        .into_par_iter()
        .map(|i| -> Result<Choice> {
            if infinite[i] {
                return Ok(Choice::Infinite);
            }
            let s = graph.states[i];
            Ok(match graph.kinds[i] {
                NodeKind::Target => Choice::Target,
                NodeKind::Deadlock => Choice::Infinite,
                NodeKind::Exponential => {
                    let k = exponential_step(model, s)?;
                    Choice::Single {
                        transitions: k.transitions.iter().map(|(d, p)| (graph.index[&d], p)).collect(),
                        reward: k.expected_reward,
                    }
                }
                NodeKind::Fd(e) => Choice::Grid(sweep_grid(graph, &graph.chains[&e], by_event[&e], strategy)),
            })
        })
        .collect::<Result<_>>()?;
    Ok(DiscretizedMdp {
        states: graph.states.clone(),
        choices,
        initial: 0,
    })
}

/// All `K` actions of one fd setting state from a single incremental sweep.
fn sweep_grid(
    graph: &StepGraph,
    sub: &SubordinatedChain,
    bounds: &DiscretizationBounds,
    strategy: TransientStrategy,
) -> ActionGrid {
    let plan = sweep_plan(&sub.chain, bounds.step, bounds.steps, bounds.kappa / 2.0);
    let jumps = plan.jumps as u64;
    let outcomes: Vec<usize> = sub.outcomes().iter().map(|s| graph.index[s]).collect();
    let mut probabilities = Vec::with_capacity(bounds.steps * outcomes.len());
    let mut rewards = Vec::with_capacity(bounds.steps);
    let mut stepper = GridStepper::new(&sub.chain, bounds.step, plan, strategy);
    for _ in 0..bounds.steps {
        stepper.advance();
        let out = sub.step_outcome(stepper.pi(), stepper.accumulated_reward());
        probabilities.extend(out.probabilities);
        rewards.push(out.reward);
    }
    let mut grid = ActionGrid::new(sub.event, bounds.step, outcomes, probabilities, rewards);
    grid.products = jumps * bounds.steps as u64;
    grid
}

#[derive(Debug, Clone, PartialEq)]
pub struct MdpSolution {
    pub values: Vec<f64>,
    /// Chosen action (from 1) per MDP state with a grid choice.
    pub policy: BTreeMap<usize, usize>,
    pub iterations: usize,
    /// Largest Bellman residual of `values` at termination.
    pub residual: f64,
}

/// Minimal expected total reward by Gauss-Seidel value iteration from zero,
/// stopping once a sweep changes no value by more than `convergence`.
pub fn solve_mdp(mdp: &DiscretizedMdp, convergence: f64, max_iterations: usize) -> Result<MdpSolution> {
    let n = mdp.len();
    let mut x: Vec<f64> = mdp
        .choices
        .iter()
        .map(|c| if matches!(c, Choice::Infinite) { f64::INFINITY } else { 0.0 })
        .collect();
    let mut iterations = 0;
    loop {
        let mut change: f64 = 0.0;
        for i in 0..n {
            let new = match &mdp.choices[i] {
                Choice::Target | Choice::Infinite => continue,
                Choice::Single { transitions, reward } => {
                    reward + transitions.iter().map(|&(j, p)| p * x[j]).sum::<f64>()
                }
                Choice::Grid(g) => g.best(&x).1,
            };
            change = change.max((new - x[i]).abs());
            x[i] = new;
        }
        iterations += 1;
        if change <= convergence {
            break;
        }
        if iterations >= max_iterations {
            return Err(Error::NoConvergence {
                iterations,
                residual: change,
            });
        }
    }
    let mut policy = BTreeMap::new();
    let mut residual: f64 = 0.0;
    for i in 0..n {
        let v = match &mdp.choices[i] {
            Choice::Target | Choice::Infinite => continue,
            Choice::Single { transitions, reward } => reward + transitions.iter().map(|&(j, p)| p * x[j]).sum::<f64>(),
            Choice::Grid(g) => {
                let (a, v) = g.best(&x);
                policy.insert(i, a);
                v
            }
        };
        residual = residual.max((v - x[i]).abs());
    }
    Ok(MdpSolution {
        values: x,
        policy,
        iterations,
        residual,
    })
}

/// Expected total reward of every MDP state under a fixed `policy`.
pub fn evaluate_policy(
    mdp: &DiscretizedMdp,
    policy: &BTreeMap<usize, usize>,
    tolerance: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, f64)> {
    let n = mdp.len();
    let mut rewards = vec![0.0; n];
    let mut rows = vec![Vec::new(); n];
    let mut solve = vec![false; n];
    let mut x = vec![0.0; n];
    for (i, c) in mdp.choices.iter().enumerate() {
        match c {
            Choice::Target => {}
            Choice::Infinite => x[i] = f64::INFINITY,
            Choice::Single { transitions, reward } => {
                rewards[i] = *reward;
                rows[i] = transitions.clone();
                solve[i] = true;
            }
            Choice::Grid(g) => {
                let a = policy.get(&i).copied().unwrap_or(1);
                let (p, r) = g.action(a);
                rewards[i] = r;
                rows[i] = g.outcomes.iter().copied().zip(p.iter().copied()).collect();
                solve[i] = true;
            }
        }
    }
    let system = LinearSystem {
        rewards: &rewards,
        rows: &rows,
        solve: &solve,
    };
    let (residual, _) = system.gauss_seidel(&mut x, tolerance, max_iterations)?;
    Ok((x, residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelBuilder;
    use crate::reward::{expected_reward, ExpectedRewardOptions};
    use crate::synthesis::bounds::{bounds_from_inputs, BoundInputs};
    use crate::transient::transient_at;

    fn two_action(r: f64, c: f64, delta: f64) -> DiscretizedMdp {
        let grid = ActionGrid::new(
            EventId(0),
            delta,
            vec![1],
            vec![1.0, 1.0],
            vec![r * delta + c, r * 2.0 * delta + c],
        );
        DiscretizedMdp {
            states: vec![StateId(0), StateId(1)],
            choices: vec![Choice::Grid(grid), Choice::Target],
            initial: 0,
        }
    }

    #[test]
    fn monotone_cost_picks_smallest_delay() {
        let mdp = two_action(2.0, 0.1, 0.5);
        let sol = solve_mdp(&mdp, 1e-12, 100).unwrap();
        assert_eq!(sol.policy[&0], 1);
        assert!((sol.values[0] - 1.1).abs() < 1e-12);
    }

    /// Fd timer in state 0 with exponential escape to 1 (rate 1, reward 1 per
    /// time); firing goes to the target with impulse 0.5; state 1 returns to 0
    /// at rate 2 with reward 3.
    fn trade_off_model(delay: f64) -> FdctmcModel {
        let mut b = ModelBuilder::new(3);
        let f = b.fd_event("f", delay);
        b.rate(StateId(0), StateId(1), 1.0)
            .rate(StateId(1), StateId(0), 2.0)
            .fd_transition(f, StateId(0), [(StateId(2), 1.0)])
            .rate_reward(StateId(0), 1.0)
            .rate_reward(StateId(1), 3.0)
            .impulse(StateId(0), crate::model::EventRef::Fd(f), StateId(2), 0.5)
            .target(StateId(2));
        b.build().unwrap()
    }

    fn coarse_bounds(steps: usize, upper: f64) -> DiscretizationBounds {
        let inputs = BoundInputs {
            epsilon: 0.01,
            val_upper: 1.0,
            lambda: 1.0,
            min_branching: 1.0,
            region_size: 1,
            min_reward: 1.0,
            max_reward: 1.0,
            decision_states: 3,
            min_step_reward: 0.5,
        };
        bounds_from_inputs(EventId(0), "f", inputs).unwrap().with_grid(Some(upper), steps)
    }

    #[test]
    fn single_action_matches_reward_engine() {
        let m = trade_off_model(0.4);
        let b = coarse_bounds(1, 0.4);
        let kappa = b.kappa;
        let mdp = build_discretized_mdp(&m, &[b], TransientStrategy::Iterative, u128::MAX).unwrap();
        let sol = solve_mdp(&mdp, 1e-13, 1_000_000).unwrap();
        let exact = expected_reward(&m, &ExpectedRewardOptions::default()).unwrap().value;
        assert!((sol.values[0] - exact).abs() < kappa, "{} vs {exact}", sol.values[0]);
    }

    #[test]
    fn trade_off_matches_brute_force() {
        let b = coarse_bounds(12, 3.0);
        let m = trade_off_model(1.0);
        let mdp = build_discretized_mdp(&m, &[b.clone()], TransientStrategy::Iterative, u128::MAX).unwrap();
        let sol = solve_mdp(&mdp, 1e-13, 1_000_000).unwrap();
        let (best_i, best_v) = (1..=b.steps)
            .map(|i| {
                let v = expected_reward(&trade_off_model(b.delay(i)), &ExpectedRewardOptions::default())
                    .unwrap()
                    .value;
                (i, v)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        assert_eq!(sol.policy[&0], best_i);
        assert!((sol.values[0] - best_v).abs() < 1e-6);
    }

    #[test]
    fn sweep_kernels_match_pointwise_transients() {
        let b = coarse_bounds(40, 2.0);
        let m = trade_off_model(1.0);
        let mdp = build_discretized_mdp(&m, &[b.clone()], TransientStrategy::Iterative, u128::MAX).unwrap();
        let graph = StepGraph::build(&m).unwrap();
        let sub = &graph.chains[&EventId(0)];
        let Choice::Grid(grid) = &mdp.choices[0] else { panic!() };
        for i in 1..=b.steps {
            let t = transient_at(&sub.chain, b.delay(i), b.kappa / 2.0);
            let direct = sub.step_outcome(&t.pi, t.accumulated_reward);
            let (p, r) = grid.action(i);
            assert!((r - direct.reward).abs() <= 2.0 * b.kappa);
            for (a, d) in p.iter().zip(&direct.probabilities) {
                assert!((a - d).abs() <= 2.0 * b.kappa);
            }
            assert!((p.iter().sum::<f64>() - 1.0).abs() <= b.kappa);
        }
    }

    #[test]
    fn budget_is_checked_before_sweeping() {
        let m = trade_off_model(1.0);
        let b = coarse_bounds(1000, 2.0);
        let err = build_discretized_mdp(&m, &[b], TransientStrategy::Iterative, 10).unwrap_err();
        assert!(matches!(err, Error::BudgetExceeded { budget: 10, .. }));
    }
}
