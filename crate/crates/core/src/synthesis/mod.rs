//! ε-optimal synthesis of fd event delays.
//!
//! The upper bound `V̄al` is the expected reward at the model's declared
//! delays. From it each fd event gets a delay grid `δ, 2δ, …, Kδ` whose
//! spacing and extent guarantee that the best grid delay vector is within
//! `ε` of the optimum. Each grid is explored by one incremental transient
//! sweep of the event's subordinated chain. Small problems materialize the
//! discretized MDP and solve it by value iteration; problems whose grids do
//! not fit in memory are solved by policy iteration that re-sweeps the grids
//! to improve the policy instead of storing them.

mod bounds;
mod mdp;

pub use bounds::{bounds_from_inputs, compute_bounds, BoundInputs, DiscretizationBounds};
pub use mdp::{build_discretized_mdp, evaluate_policy, solve_mdp, sweep_cost, ActionGrid, Choice, DiscretizedMdp, MdpSolution};

use std::collections::BTreeMap;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{EventId, FdctmcModel};
use crate::reward::{expected_reward, exponential_step, ExpectedRewardOptions, LinearSystem, NodeKind, StepGraph};
use crate::subordinated::{FdStepOutcome, SubordinatedChain};
use crate::transient::{sweep_plan, transient_at, GridStepper, TransientStrategy, DEFAULT_PRODUCT_BUDGET};
use crate::validate::{validate_basic, validate_restrictions, Restrictions};

/// Replaces the derived grid of every event by `steps` points up to `upper_delay`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridOverride {
    /// Grid extent; the derived `d̄` when `None`.
    pub upper_delay: Option<f64>,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolverKind {
    /// Materialize when the grids fit within the materialization limit.
    #[default]
    Auto,
    /// Store every action and run value iteration.
    ValueIteration,
    /// Re-sweep the grids on every improvement step.
    PolicyIteration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisOptions {
    pub epsilon: f64,
    /// Maximal number of vector-matrix products.
    pub budget: u128,
    /// Largest number of stored action entries for value iteration.
    pub materialize_limit: usize,
    pub solver: SolverKind,
    pub strategy: TransientStrategy,
    pub grid: Option<GridOverride>,
    pub max_iterations: usize,
    pub max_policy_iterations: usize,
    /// Options of the expected-reward computations for `V̄al` and the achieved value.
    pub reward: ExpectedRewardOptions,
}

impl SynthesisOptions {
    pub fn new(epsilon: f64) -> Self {
        SynthesisOptions {
            epsilon,
            budget: DEFAULT_PRODUCT_BUDGET,
            materialize_limit: 5_000_000,
            solver: SolverKind::Auto,
            strategy: TransientStrategy::Iterative,
            grid: None,
            max_iterations: 10_000_000,
            max_policy_iterations: 100,
            reward: ExpectedRewardOptions::from_epsilon(epsilon),
        }
    }
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self::new(1e-3)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthesisResult {
    /// Delay per fd event; events never set keep their declared delay.
    pub delays: BTreeMap<EventId, f64>,
    /// Chosen grid index per synthesized event, `delays[f] = index · step`.
    pub grid_indices: BTreeMap<EventId, usize>,
    /// Optimal value of the discretized MDP.
    pub value: f64,
    /// Expected reward at the synthesized delays, recomputed on the model.
    pub achieved: f64,
    pub val_upper: f64,
    pub epsilon: f64,
    pub bounds: Vec<DiscretizationBounds>,
    pub action_counts: BTreeMap<EventId, usize>,
    pub solver: SolverKind,
    pub iterations: usize,
    pub products: u64,
    pub elapsed_seconds: f64,
}

impl SynthesisResult {
    /// The synthesized delays as a model.
    pub fn apply(&self, model: &FdctmcModel) -> Result<FdctmcModel> {
        model.apply_delays(&self.delays)
    }
}

/// Per-event bounds for precision `epsilon` split evenly over the events set in the model.
fn derive_bounds(
    model: &FdctmcModel,
    graph: &StepGraph,
    val_upper: f64,
    options: &SynthesisOptions,
) -> Result<Vec<DiscretizationBounds>> {
    let events = graph.chains.len().max(1);
    let min_step = bounds::min_step_reward(model, graph);
    graph
        .chains
        .iter()
        .map(|(&e, sub)| {
            let inputs = bounds::inputs_for(sub, options.epsilon / events as f64, val_upper, graph.len(), min_step);
            let b = bounds_from_inputs(e, &model.event(e).name, inputs)?;
            Ok(match options.grid {
                Some(o) => b.with_grid(o.upper_delay, o.steps),
                None => b,
            })
        })
        .collect()
}

pub fn synthesize(model: &FdctmcModel, options: &SynthesisOptions) -> Result<SynthesisResult> {
    let started = Instant::now();
    model.require_target()?;
    let mut diagnostics = validate_basic(model);
    diagnostics.extend(validate_restrictions(model, Restrictions::All).diagnostics);
    if !diagnostics.is_empty() {
        return Err(Error::Invalid(diagnostics));
    }
    let graph = StepGraph::build(model)?;
    let val_upper = expected_reward(model, &options.reward)?.value;
    if !val_upper.is_finite() {
        return Err(Error::InfiniteUpperBound);
    }
    let bounds = derive_bounds(model, &graph, val_upper, options)?;
    let convergence = bounds.iter().map(|b| b.kappa).fold(f64::INFINITY, f64::min) / 10.0;
    let convergence = if convergence.is_finite() { convergence } else { options.reward.solve_tolerance };

    let stored: u128 = graph
        .chains
        .values()
        .zip(&bounds)
        .map(|(sub, b)| b.steps as u128 * (sub.outcomes().len() as u128 + 1))
        .sum();
    let solver = match options.solver {
        SolverKind::Auto if stored <= options.materialize_limit as u128 => SolverKind::ValueIteration,
        SolverKind::Auto => SolverKind::PolicyIteration,
        s => s,
    };

    let outcome = match solver {
        SolverKind::PolicyIteration => policy_iteration(model, &graph, &bounds, convergence, options)?,
        _ => {
            let mdp = mdp::from_graph(model, &graph, &bounds, options.strategy, options.budget)?;
            let sol = solve_mdp(&mdp, convergence, options.max_iterations)?;
            let (values, _) = evaluate_policy(&mdp, &sol.policy, convergence, options.max_iterations)?;
            let indices = sol
                .policy
                .iter()
                .map(|(&i, &a)| match &mdp.choices[i] {
                    Choice::Grid(g) => (g.event, a),
                    _ => unreachable!("policy only on grid states"),
                })
                .collect();
            Solved {
                value: values[mdp.initial],
                indices,
                iterations: sol.iterations,
                products: mdp.products(),
            }
        }
    };

    let mut delays = model.delays();
    for b in &bounds {
        if let Some(&i) = outcome.indices.get(&b.event) {
            delays.insert(b.event, b.delay(i));
        }
    }
    let achieved = expected_reward(&model.apply_delays(&delays)?, &options.reward)?.value;
    Ok(SynthesisResult {
        delays,
        grid_indices: outcome.indices,
        value: outcome.value,
        achieved,
        val_upper,
        epsilon: options.epsilon,
        action_counts: bounds.iter().map(|b| (b.event, b.steps)).collect(),
        bounds,
        solver,
        iterations: outcome.iterations,
        products: outcome.products,
        elapsed_seconds: started.elapsed().as_secs_f64(),
    })
}

struct Solved {
    value: f64,
    indices: BTreeMap<EventId, usize>,
    iterations: usize,
    products: u64,
}

/// Policy state of one fd setting state during policy iteration.
struct FdNode<'a> {
    node: usize,
    sub: &'a SubordinatedChain,
    bounds: &'a DiscretizationBounds,
    outcome_nodes: Vec<usize>,
    choice: usize,
    kernel: FdStepOutcome,
}

impl FdNode<'_> {
    /// Sweeps the whole grid scoring every delay against the successor values
    /// `x`; returns the best index, its step outcome and whether it improves
    /// on the current choice by more than `tolerance`.
    fn improve(&self, x: &[f64], strategy: TransientStrategy, tolerance: f64) -> (usize, Option<FdStepOutcome>, u64) {
        let g = self.sub.scoring_vector(|o| x[self.outcome_nodes[o]]);
        let plan = sweep_plan(&self.sub.chain, self.bounds.step, self.bounds.steps, self.bounds.kappa / 2.0);
        let products = plan.jumps as u64 * self.bounds.steps as u64;
        let mut stepper = GridStepper::new(&self.sub.chain, self.bounds.step, plan, strategy);
        let mut best = (0, f64::INFINITY);
        let mut current = f64::INFINITY;
        let mut best_outcome = None;
        for i in 1..=self.bounds.steps {
            stepper.advance();
            let pi = stepper.pi();
            let score = stepper.accumulated_reward() + pi.iter().zip(&g).map(|(p, v)| p * v).sum::<f64>();
            if i == self.choice {
                current = score;
            }
            if score < best.1 {
                best = (i, score);
                best_outcome = Some(self.sub.step_outcome(pi, stepper.accumulated_reward()));
            }
        }
        if best.0 != self.choice && best.1 < current - tolerance {
            (best.0, best_outcome, products)
        } else {
            (self.choice, None, products)
        }
    }
}

/// Grid size of the materialized coarse problem that seeds policy iteration.
const WARM_START_POINTS: usize = 20_000;

/// Delays solving the problem on coarser grids over the same ranges.
fn warm_start(
    model: &FdctmcModel,
    graph: &StepGraph,
    bounds: &[DiscretizationBounds],
    convergence: f64,
    options: &SynthesisOptions,
) -> Result<(BTreeMap<EventId, f64>, u64)> {
    let coarse: Vec<DiscretizationBounds> = bounds
        .iter()
        .map(|b| b.clone().with_grid(None, b.steps.min(WARM_START_POINTS)))
        .collect();
    let mdp = mdp::from_graph(model, graph, &coarse, options.strategy, options.budget)?;
    let sol = solve_mdp(&mdp, convergence, options.max_iterations)?;
    let delays = sol
        .policy
        .iter()
        .filter_map(|(&i, &a)| match &mdp.choices[i] {
            Choice::Grid(g) => Some((g.event, g.delay(a))),
            _ => None,
        })
        .collect();
    Ok((delays, mdp.products()))
}

/// Policy iteration over the discretized MDP without storing its actions.
fn policy_iteration(
    model: &FdctmcModel,
    graph: &StepGraph,
    bounds: &[DiscretizationBounds],
    convergence: f64,
    options: &SynthesisOptions,
) -> Result<Solved> {
    let n = graph.len();
    let by_event: BTreeMap<EventId, &DiscretizationBounds> = bounds.iter().map(|b| (b.event, b)).collect();
    let sweep: u128 = graph.chains.values().map(|sub| sweep_cost(sub, by_event[&sub.event])).sum();
    mdp::check_budget(sweep, options.budget)?;
    let (start, mut products) = if bounds.iter().any(|b| b.steps > WARM_START_POINTS) {
        warm_start(model, graph, bounds, convergence, options)?
    } else {
        (model.delays(), 0)
    };

    let infinite = graph.infinite_nodes();
    let mut rewards = vec![0.0; n];
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    let mut solve = vec![false; n];
    let mut fd_nodes = Vec::new();
    for i in 0..n {
        if infinite[i] {
            continue;
        }
        match graph.kinds[i] {
            NodeKind::Exponential => {
                let k = exponential_step(model, graph.states[i])?;
                rewards[i] = k.expected_reward;
                rows[i] = k.transitions.iter().map(|(d, p)| (graph.index[&d], p)).collect();
                solve[i] = true;
            }
            NodeKind::Fd(e) => {
                let sub = &graph.chains[&e];
                let b = by_event[&e];
                let choice = b.nearest_index(start.get(&e).copied().unwrap_or(model.event(e).delay));
                let t = transient_at(&sub.chain, b.delay(choice), b.kappa / 2.0);
                fd_nodes.push(FdNode {
                    node: i,
                    sub,
                    bounds: b,
                    outcome_nodes: sub.outcomes().iter().map(|s| graph.index[s]).collect(),
                    choice,
                    kernel: sub.step_outcome(&t.pi, t.accumulated_reward),
                });
                solve[i] = true;
            }
            NodeKind::Target | NodeKind::Deadlock => {}
        }
    }

    let mut x: Vec<f64> = infinite.iter().map(|&inf| if inf { f64::INFINITY } else { 0.0 }).collect();
    for iteration in 1..=options.max_policy_iterations {
        for f in &fd_nodes {
            rewards[f.node] = f.kernel.reward;
            rows[f.node] = f.outcome_nodes.iter().copied().zip(f.kernel.probabilities.iter().copied()).collect();
        }
        let system = LinearSystem {
            rewards: &rewards,
            rows: &rows,
            solve: &solve,
        };
        system.gauss_seidel(&mut x, convergence, options.max_iterations)?;

        if (products as u128) + sweep > options.budget {
            return Err(Error::BudgetExceeded {
                required: products as u128 + sweep,
                budget: options.budget,
            });
        }
        let updates: Vec<_> = fd_nodes
            .par_iter()
            .map(|f| f.improve(&x, options.strategy, convergence))
            .collect();
        let mut changed = false;
        for (f, (choice, outcome, p)) in fd_nodes.iter_mut().zip(updates) {
            products += p;
            if let Some(kernel) = outcome {
                f.choice = choice;
                f.kernel = kernel;
                changed = true;
            }
        }
        if !changed {
            return Ok(Solved {
                value: x[0],
                indices: fd_nodes.iter().map(|f| (f.sub.event, f.choice)).collect(),
                iterations: iteration,
                products,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: options.max_policy_iterations,
        residual: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{EventRef, ModelBuilder, StateId};

    /// The only fd event fires straight to the target; waiting only costs.
    fn straight_to_target() -> FdctmcModel {
        let mut b = ModelBuilder::new(2);
        let f = b.fd_event("f", 1.0);
        b.fd_transition(f, StateId(0), [(StateId(1), 1.0)])
            .rate_reward(StateId(0), 1.0)
            .impulse(StateId(0), EventRef::Fd(f), StateId(1), 0.1)
            .target(StateId(1));
        b.build().unwrap()
    }

    #[test]
    fn increasing_cost_picks_first_grid_point() {
        let m = straight_to_target();
        let mut opts = SynthesisOptions::new(0.01);
        opts.grid = Some(GridOverride {
            upper_delay: None,
            steps: 100,
        });
        let r = synthesize(&m, &opts).unwrap();
        let b = &r.bounds[0];
        assert_eq!(r.grid_indices[&EventId(0)], 1);
        assert!((r.value - (b.step + 0.1)).abs() < b.kappa);
        assert!((r.achieved - r.value).abs() < b.kappa);
        assert!((r.val_upper - 1.1).abs() < 1e-7);
    }

    #[test]
    fn derived_grid_on_trivial_model() {
        let m = straight_to_target();
        let r = synthesize(&m, &SynthesisOptions::new(0.1)).unwrap();
        assert_eq!(r.solver, SolverKind::ValueIteration);
        assert_eq!(r.grid_indices[&EventId(0)], 1);
        assert!(r.achieved <= r.val_upper);
        assert!(r.value <= 0.1 + r.bounds[0].step + 1e-9);
    }

    #[test]
    fn solvers_agree() {
        let mut b = ModelBuilder::new(3);
        let f = b.fd_event("f", 1.0);
        b.rate(StateId(0), StateId(1), 1.0)
            .rate(StateId(1), StateId(0), 2.0)
            .fd_transition(f, StateId(0), [(StateId(2), 1.0)])
            .rate_reward(StateId(0), 1.0)
            .rate_reward(StateId(1), 3.0)
            .impulse(StateId(0), EventRef::Fd(f), StateId(2), 0.5)
            .target(StateId(2));
        let m = b.build().unwrap();
        let mut opts = SynthesisOptions::new(0.01);
        opts.grid = Some(GridOverride {
            upper_delay: Some(4.0),
            steps: 400,
        });
        opts.solver = SolverKind::ValueIteration;
        let vi = synthesize(&m, &opts).unwrap();
        opts.solver = SolverKind::PolicyIteration;
        let pi = synthesize(&m, &opts).unwrap();
        assert_eq!(vi.grid_indices, pi.grid_indices);
        assert!((vi.value - pi.value).abs() < 1e-7);
    }

    #[test]
    fn infinite_declared_delay_is_refused() {
        // firing leads to a trap, escaping needs the exponential move
        let mut b = ModelBuilder::new(3);
        let f = b.fd_event("f", 1.0);
        b.rate(StateId(0), StateId(2), 1.0)
            .fd_transition(f, StateId(0), [(StateId(1), 1.0)])
            .rate(StateId(1), StateId(1), 1.0)
            .rate_reward(StateId(0), 1.0)
            .rate_reward(StateId(1), 1.0)
            .impulse(StateId(0), EventRef::Fd(f), StateId(1), 1.0)
            .target(StateId(2));
        let m = b.build().unwrap();
        let err = synthesize(&m, &SynthesisOptions::new(0.1)).unwrap_err();
        assert!(matches!(err, Error::InfiniteUpperBound), "{err}");
        assert!(err.to_string().contains("specify better initial delays"));
    }
}
