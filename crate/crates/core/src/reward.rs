//! Expected total reward until the target set, for a fixed delay vector.
//!
//! Under restrictions R1 and R2 every run decomposes into *steps* between
//! decision points: states with no active fd event take one exponential jump,
//! and the setting state of an fd event starts a timer whose whole episode
//! (exponential moves inside the event's region until the timer expires or a
//! jump leaves the region) is a single step computed by transient analysis
//! of the subordinated chain. The step chain is a discrete-time Markov chain
//! with expected one-step rewards, solved as a linear system.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Distribution, EventId, EventRef, FdctmcModel, StateId};
use crate::subordinated::SubordinatedChain;
use crate::transient::transient_at;
use crate::validate::{validate_basic, validate_restrictions, Restrictions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepKind {
    Exponential,
    Fd { event: EventId, delay: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepKernel {
    pub source: StateId,
    pub transitions: Distribution,
    pub expected_reward: f64,
    pub kind: StepKind,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpectedRewardOptions {
    /// Truncation error allowed in each transient analysis.
    pub transient_tolerance: f64,
    /// Stop when one Gauss-Seidel sweep changes no value by more than this.
    pub solve_tolerance: f64,
    pub max_iterations: usize,
}

impl Default for ExpectedRewardOptions {
    fn default() -> Self {
        ExpectedRewardOptions {
            transient_tolerance: 1e-12,
            solve_tolerance: 1e-12,
            max_iterations: 1_000_000,
        }
    }
}

impl ExpectedRewardOptions {
    /// Tolerances derived from a user-facing precision `epsilon`.
    pub fn from_epsilon(epsilon: f64) -> Self {
        let tol = (epsilon * 1e-6).clamp(1e-14, 1e-6);
        ExpectedRewardOptions {
            transient_tolerance: tol,
            solve_tolerance: tol,
            ..Default::default()
        }
    }
}

/// One exponential step: jump probabilities `Q(s,·)/E(s)` and reward
/// `(ℛ(s) + Σ Q(s,s')·ℐ(s,𝓔,s')) / E(s)`.
pub(crate) fn exponential_step(model: &FdctmcModel, state: StateId) -> Result<StepKernel> {
    let exit = model.exit_rate(state);
    if !(exit > 0.0) {
        return Err(Error::Elaboration(format!(
            "deadlock: state {} has no active event",
            model.metadata().describe(state)
        )));
    }
    let row = model.rates().row(state);
    let impulse: f64 = row
        .iter()
        .map(|&(d, q)| q * model.rewards().impulse(state, EventRef::Exponential, d))
        .sum();
    Ok(StepKernel {
        source: state,
        transitions: Distribution::new(row.iter().map(|&(d, q)| (d, q / exit))),
        expected_reward: (model.rewards().rate(state) + impulse) / exit,
        kind: StepKind::Exponential,
    })
}

fn fd_step(sub: &SubordinatedChain, delay: f64, tolerance: f64) -> StepKernel {
    let t = transient_at(&sub.chain, delay, tolerance);
    let out = sub.step_outcome(&t.pi, t.accumulated_reward);
    StepKernel {
        source: sub.setting_state,
        transitions: Distribution::new(sub.outcomes().iter().copied().zip(out.probabilities)),
        expected_reward: out.reward,
        kind: StepKind::Fd {
            event: sub.event,
            delay,
        },
    }
}

/// Step kernel of `state`: an exponential step when no fd event is active,
/// otherwise the fd step started in `state` with the model's delay or `delay_override`.
pub fn build_step_kernel(
    model: &FdctmcModel,
    state: StateId,
    delay_override: Option<f64>,
    tolerance: f64,
) -> Result<StepKernel> {
    match model.active_events(state) {
        [] => exponential_step(model, state),
        [event] => {
            let delay = delay_override.unwrap_or(model.event(*event).delay);
            if !(delay > 0.0) {
                return Err(Error::NonPositiveDelay { event: *event, delay });
            }
            let sub = SubordinatedChain::rooted_at(model, *event, state)?;
            Ok(fd_step(&sub, delay, tolerance))
        }
        _ => Err(Error::Invalid(validate_restrictions(model, Restrictions::Structural).diagnostics)),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum NodeKind {
    Target,
    Exponential,
    Fd(EventId),
    Deadlock,
}

/// Decision-point structure of a model: which states start a step and which
/// states each step can end in. Independent of the delay vector.
#[derive(Debug, Clone)]
pub(crate) struct StepGraph {
    pub states: Vec<StateId>,
    pub index: HashMap<StateId, usize>,
    pub kinds: Vec<NodeKind>,
    pub successors: Vec<Vec<usize>>,
    /// Subordinated chain per fd event whose setting state is a step state.
    pub chains: BTreeMap<EventId, SubordinatedChain>,
}

impl StepGraph {
    pub fn build(model: &FdctmcModel) -> Result<Self> {
        model.require_target()?;
        let basic = validate_basic(model);
        if !basic.is_empty() {
            return Err(Error::Invalid(basic));
        }
        let report = validate_restrictions(model, Restrictions::Structural);
        if !report.is_ok() {
            return Err(Error::Invalid(report.diagnostics));
        }
        let mut chains = BTreeMap::new();
        let mut graph = StepGraph {
            states: Vec::new(),
            index: HashMap::new(),
            kinds: Vec::new(),
            successors: Vec::new(),
            chains: BTreeMap::new(),
        };
        let mut queue = VecDeque::new();
        let visit = |s: StateId, g: &mut StepGraph, q: &mut VecDeque<StateId>| -> usize {
            *g.index.entry(s).or_insert_with(|| {
                g.states.push(s);
                q.push_back(s);
                g.states.len() - 1
            })
        };
        visit(model.initial(), &mut graph, &mut queue);
        while let Some(s) = queue.pop_front() {
            let (kind, succ): (NodeKind, Vec<StateId>) = if model.is_target(s) {
                (NodeKind::Target, vec![])
            } else {
                match model.active_events(s) {
                    [] if model.exit_rate(s) > 0.0 => (
                        NodeKind::Exponential,
                        model.rates().row(s).iter().map(|&(d, _)| d).collect(),
                    ),
                    [] => (NodeKind::Deadlock, vec![]),
                    [e] => {
                        let sub = match chains.get(e) {
                            Some(sub) => sub,
                            None => {
                                let root = report.setting_state(*e).unwrap_or(s);
                                chains.insert(*e, SubordinatedChain::rooted_at(model, *e, root)?);
                                &chains[e]
                            }
                        };
                        debug_assert_eq!(sub.setting_state, s, "fd steps start at setting states");
                        (NodeKind::Fd(*e), sub.outcomes().to_vec())
                    }
                    _ => unreachable!("R1 checked above"),
                }
            };
            let succ_idx = succ.into_iter().map(|d| visit(d, &mut graph, &mut queue)).collect();
            graph.kinds.push(kind);
            graph.successors.push(succ_idx);
        }
        graph.chains = chains;
        Ok(graph)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    /// Nodes from which the target is not reached with probability one.
    pub fn infinite_nodes(&self) -> Vec<bool> {
        infinite_nodes(&self.successors, |i| self.kinds[i] == NodeKind::Target)
    }
}

/// Almost-sure reachability on a Markov chain graph: a node reaches the target
/// with probability one iff no node reachable from it has lost all paths to the target.
fn infinite_nodes(successors: &[Vec<usize>], is_target: impl Fn(usize) -> bool) -> Vec<bool> {
    let n = successors.len();
    let mut preds = vec![Vec::new(); n];
    for (i, succ) in successors.iter().enumerate() {
        for &j in succ {
            preds[j].push(i);
        }
    }
    let backward = |seeds: Vec<usize>| {
        let mut mark = vec![false; n];
        let mut stack = seeds;
        for &s in &stack {
            mark[s] = true;
        }
        while let Some(j) = stack.pop() {
            for &i in &preds[j] {
                if !mark[i] && !is_target(i) {
                    mark[i] = true;
                    stack.push(i);
                }
            }
        }
        mark
    };
    let can_reach = backward((0..n).filter(|&i| is_target(i)).collect());
    backward((0..n).filter(|&i| !can_reach[i]).collect())
}

/// States of the step chain from which the target is not almost surely reached.
pub fn infinite_reward_states(kernels: &[StepKernel], target: impl Fn(StateId) -> bool) -> BTreeSet<StateId> {
    let mut ids: BTreeMap<StateId, usize> = BTreeMap::new();
    let mut nodes: Vec<StateId> = Vec::new();
    let mut id = |s: StateId, nodes: &mut Vec<StateId>| {
        *ids.entry(s).or_insert_with(|| {
            nodes.push(s);
            nodes.len() - 1
        })
    };
    let mut succ: Vec<Vec<usize>> = Vec::new();
    for k in kernels {
        let i = id(k.source, &mut nodes);
        let out: Vec<usize> = k
            .transitions
            .iter()
            .filter(|&(_, p)| p > 0.0)
            .map(|(d, _)| id(d, &mut nodes))
            .collect();
        succ.resize(nodes.len(), Vec::new());
        succ[i] = out;
    }
    succ.resize(nodes.len(), Vec::new());
    let inf = infinite_nodes(&succ, |i| target(nodes[i]));
    nodes
        .iter()
        .zip(inf)
        .filter(|(_, f)| *f)
        .map(|(&s, _)| s)
        .collect()
}

/// Solution of `x = r + P·x` on the nodes flagged `solve`, all other nodes
/// held at their initial value.
pub(crate) struct LinearSystem<'a> {
    pub rewards: &'a [f64],
    pub rows: &'a [Vec<(usize, f64)>],
    pub solve: &'a [bool],
}

impl LinearSystem<'_> {
    /// Gauss-Seidel sweeps until no value moves by more than `tolerance`;
    /// returns the final residual `max |x - (r + P·x)|` and the number of sweeps.
    pub fn gauss_seidel(&self, x: &mut [f64], tolerance: f64, max_iterations: usize) -> Result<(f64, usize)> {
        let n = x.len();
        let mut iterations = 0;
        loop {
            let mut change: f64 = 0.0;
            for i in 0..n {
                if !self.solve[i] {
                    continue;
                }
                let mut diag = 0.0;
                let mut acc = self.rewards[i];
                for &(j, p) in &self.rows[i] {
                    if j == i {
                        diag += p;
                    } else {
                        acc += p * x[j];
                    }
                }
                let new = acc / (1.0 - diag);
                change = change.max((new - x[i]).abs());
                x[i] = new;
            }
            iterations += 1;
            if change <= tolerance {
                return Ok((self.residual(x), iterations));
            }
            if iterations >= max_iterations {
                return Err(Error::NoConvergence {
                    iterations,
                    residual: self.residual(x),
                });
            }
        }
    }

    pub fn residual(&self, x: &[f64]) -> f64 {
        (0..x.len())
            .filter(|&i| self.solve[i])
            .map(|i| {
                let rhs = self.rewards[i] + self.rows[i].iter().map(|&(j, p)| p * x[j]).sum::<f64>();
                (x[i] - rhs).abs()
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExpectedRewardResult {
    /// Expected reward from the initial state; `+∞` when the target is not reached almost surely.
    pub value: f64,
    /// Value per step state (setting states, exponential states, reached targets).
    pub per_state: BTreeMap<StateId, f64>,
    pub infinite_states: BTreeSet<StateId>,
    pub residual: f64,
    pub iterations: usize,
}

/// Step kernels of every step state reachable from the initial state.
pub fn step_kernels(model: &FdctmcModel, options: &ExpectedRewardOptions) -> Result<Vec<StepKernel>> {
    let graph = StepGraph::build(model)?;
    kernels_for(model, &graph, options)
}

fn kernels_for(model: &FdctmcModel, graph: &StepGraph, options: &ExpectedRewardOptions) -> Result<Vec<StepKernel>> {
    let mut out = Vec::new();
    for (i, &s) in graph.states.iter().enumerate() {
        match graph.kinds[i] {
            NodeKind::Exponential => out.push(exponential_step(model, s)?),
            NodeKind::Fd(e) => out.push(fd_step(&graph.chains[&e], model.event(e).delay, options.transient_tolerance)),
            NodeKind::Target | NodeKind::Deadlock => {}
        }
    }
    Ok(out)
}

pub fn expected_reward(model: &FdctmcModel, options: &ExpectedRewardOptions) -> Result<ExpectedRewardResult> {
    let graph = StepGraph::build(model)?;
    let kernels = kernels_for(model, &graph, options)?;
    let n = graph.len();
    let infinite = graph.infinite_nodes();
    let mut rewards = vec![0.0; n];
    let mut rows = vec![Vec::new(); n];
    for k in &kernels {
        let i = graph.index[&k.source];
        rewards[i] = k.expected_reward;
        rows[i] = k.transitions.iter().map(|(d, p)| (graph.index[&d], p)).collect();
    }
    let solve: Vec<bool> = (0..n)
        .map(|i| !infinite[i] && graph.kinds[i] != NodeKind::Target)
        .collect();
    let mut x: Vec<f64> = (0..n).map(|i| if infinite[i] { f64::INFINITY } else { 0.0 }).collect();
    let system = LinearSystem {
        rewards: &rewards,
        rows: &rows,
        solve: &solve,
    };
    let (residual, iterations) = system.gauss_seidel(&mut x, options.solve_tolerance, options.max_iterations)?;
    Ok(ExpectedRewardResult {
        value: x[0],
        per_state: graph.states.iter().copied().zip(x.iter().copied()).collect(),
        infinite_states: (0..n).filter(|&i| infinite[i]).map(|i| graph.states[i]).collect(),
        residual,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelBuilder;

    #[test]
    fn exponential_step_reward() {
        let mut b = ModelBuilder::new(2);
        b.rate(StateId(0), StateId(1), 4.0)
            .rate_reward(StateId(0), 2.0)
            .impulse(StateId(0), EventRef::Exponential, StateId(1), 0.5)
            .target(StateId(1));
        let m = b.build().unwrap();
        let k = build_step_kernel(&m, StateId(0), None, 1e-12).unwrap();
        assert_eq!(k.expected_reward, 1.0);
        assert_eq!(k.transitions.get(StateId(1)), 1.0);
        assert_eq!(expected_reward(&m, &Default::default()).unwrap().value, 1.0);
    }

    #[test]
    fn deterministic_fd_sojourn() {
        let (r, t, c) = (3.0, 0.7, 0.25);
        let mut b = ModelBuilder::new(2);
        let f = b.fd_event("f", t);
        b.fd_transition(f, StateId(0), [(StateId(1), 1.0)])
            .rate_reward(StateId(0), r)
            .impulse(StateId(0), EventRef::Fd(f), StateId(1), c)
            .target(StateId(1));
        let m = b.build().unwrap();
        let k = build_step_kernel(&m, StateId(0), None, 1e-12).unwrap();
        assert!((k.expected_reward - (r * t + c)).abs() < 1e-12);
        assert!((k.transitions.get(StateId(1)) - 1.0).abs() < 1e-12);
        let k2 = build_step_kernel(&m, StateId(0), Some(2.0), 1e-12).unwrap();
        assert!((k2.expected_reward - (r * 2.0 + c)).abs() < 1e-12);
    }

    #[test]
    fn absorbing_non_target_is_infinite() {
        let mut b = ModelBuilder::new(3);
        b.rate(StateId(0), StateId(1), 1.0)
            .rate(StateId(0), StateId(2), 1.0)
            .rate_reward(StateId(0), 1.0)
            .target(StateId(2));
        let m = b.build().unwrap();
        let res = expected_reward(&m, &Default::default()).unwrap();
        assert!(res.value.is_infinite());
        assert_eq!(res.infinite_states, BTreeSet::from([StateId(0), StateId(1)]));
    }

    #[test]
    fn cycle_with_escape_is_finite() {
        // 0 <-> 1, 1 -> 2 (target)
        let k = |s, t: &[(usize, f64)]| StepKernel {
            source: StateId(s),
            transitions: Distribution::new(t.iter().map(|&(d, p)| (StateId(d), p))),
            expected_reward: 1.0,
            kind: StepKind::Exponential,
        };
        let kernels = vec![k(0, &[(1, 1.0)]), k(1, &[(0, 0.5), (2, 0.5)])];
        assert!(infinite_reward_states(&kernels, |s| s == StateId(2)).is_empty());
        let trap = vec![k(0, &[(1, 1.0)]), k(1, &[(1, 1.0)])];
        assert_eq!(
            infinite_reward_states(&trap, |s| s == StateId(2)),
            BTreeSet::from([StateId(0), StateId(1)])
        );
    }

    #[test]
    fn missing_target_is_an_error() {
        let mut b = ModelBuilder::new(2);
        b.rate(StateId(0), StateId(1), 1.0);
        let m = b.build().unwrap();
        assert!(matches!(expected_reward(&m, &Default::default()), Err(Error::MissingTarget)));
    }
}
