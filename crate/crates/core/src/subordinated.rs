//! The CTMC subordinated to one fd event: the exponential dynamics inside the
//! region where the event stays active, from the moment its timer is set until
//! the timer expires or an exponential jump leaves the region.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{Distribution, EventId, EventRef, FdctmcModel, StateId};
use crate::transient::UniformizedChain;
use crate::validate::setting_states;

/// Quantities of a subordinated chain that enter the discretization bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubordinatedStats {
    /// Number of region states.
    pub size: usize,
    /// Smallest positive branching probability (embedded exponential jumps and fd kernel).
    pub min_branching: f64,
    /// Smallest rate reward over the region.
    pub min_reward: f64,
    /// Largest effective reward rate (rate reward plus exponential impulse rate) over the region.
    pub max_reward: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone)]
pub struct SubordinatedChain {
    pub event: EventId,
    pub setting_state: StateId,
    /// Region states; local index `i` is `region[i]`, the setting state first.
    pub region: Vec<StateId>,
    /// Absorbing exit states; local index `region.len() + i`.
    pub exits: Vec<StateId>,
    pub chain: UniformizedChain,
    /// Successor distribution when the event fires, per region state.
    pub fire: Vec<Distribution>,
    /// Expected fd impulse when the event fires, per region state.
    pub fire_impulse: Vec<f64>,
    pub stats: SubordinatedStats,
    outcomes: Vec<StateId>,
    exit_outcome: Vec<usize>,
    fire_outcome: Vec<Vec<(usize, f64)>>,
}

/// Outcome distribution and expected reward of one fd step.
#[derive(Debug, Clone, PartialEq)]
pub struct FdStepOutcome {
    /// Probability per entry of [`SubordinatedChain::outcomes`].
    pub probabilities: Vec<f64>,
    pub reward: f64,
}

impl SubordinatedChain {
    /// Subordinated chain of `event`, rooted at its unique setting state.
    pub fn build(model: &FdctmcModel, event: EventId) -> Result<Self> {
        let ev = model.event(event);
        if ev.active_states().next().is_none() {
            return Err(Error::EmptyRegion(ev.name.clone()));
        }
        let sets = setting_states(model);
        let set = &sets[event.0];
        match set.len() {
            1 => Self::rooted_at(model, event, *set.iter().next().unwrap()),
            0 => Err(Error::NoSettingState(ev.name.clone())),
            _ => Err(Error::Invalid(
                crate::validate::validate_restrictions(model, crate::validate::Restrictions::Structural)
                    .diagnostics,
            )),
        }
    }

    /// Subordinated chain of `event` with the timer set in `root`.
    pub fn rooted_at(model: &FdctmcModel, event: EventId, root: StateId) -> Result<Self> {
        let ev = model.event(event);
        if !ev.is_active(root) {
            return Err(Error::EmptyRegion(ev.name.clone()));
        }
        let in_region = |s: StateId| ev.is_active(s) && !model.is_target(s);

        let mut region = vec![root];
        let mut local: BTreeMap<StateId, usize> = BTreeMap::from([(root, 0)]);
        let mut queue = VecDeque::from([root]);
        let mut exit_set = BTreeSet::new();
        while let Some(s) = queue.pop_front() {
            for &(d, _) in model.rates().row(s) {
                if in_region(d) {
                    if !local.contains_key(&d) {
                        local.insert(d, region.len());
                        region.push(d);
                        queue.push_back(d);
                    }
                } else {
                    exit_set.insert(d);
                }
            }
        }
        let exits: Vec<StateId> = exit_set.into_iter().collect();
        let m = region.len();
        for (i, &x) in exits.iter().enumerate() {
            local.insert(x, m + i);
        }

        let mut rows = vec![Vec::new(); m + exits.len()];
        let mut rate_reward = vec![0.0; m + exits.len()];
        let mut impulse_rate = vec![0.0; m + exits.len()];
        let mut fire = Vec::with_capacity(m);
        let mut fire_impulse = Vec::with_capacity(m);
        let mut min_branching = f64::INFINITY;
        for (i, &s) in region.iter().enumerate() {
            let exit_rate = model.exit_rate(s);
            for &(d, q) in model.rates().row(s) {
                rows[i].push((local[&d], q));
                impulse_rate[i] += q * model.rewards().impulse(s, EventRef::Exponential, d);
                if q > 0.0 {
                    min_branching = min_branching.min(q / exit_rate);
                }
            }
            rate_reward[i] = model.rewards().rate(s);
            let kernel = ev.kernel(s).cloned().unwrap_or_default();
            let mut eta = 0.0;
            for (d, p) in kernel.iter() {
                eta += p * model.rewards().impulse(s, EventRef::Fd(event), d);
                if p > 0.0 {
                    min_branching = min_branching.min(p);
                }
            }
            fire.push(kernel);
            fire_impulse.push(eta);
        }
        if !min_branching.is_finite() {
            min_branching = 1.0;
        }
        let chain = UniformizedChain::from_rates(&rows, rate_reward.clone(), impulse_rate, 0)?;
        let region_rewards = &rate_reward[..m];
        let stats = SubordinatedStats {
            size: m,
            min_branching,
            min_reward: region_rewards.iter().copied().fold(f64::INFINITY, f64::min),
            max_reward: chain.reward_rate()[..m].iter().copied().fold(0.0, f64::max),
            lambda: chain.rate(),
        };

        let outcome_set: BTreeSet<StateId> = exits
            .iter()
            .copied()
            .chain(fire.iter().flat_map(|k| k.iter().map(|(d, _)| d)))
            .collect();
        let outcomes: Vec<StateId> = outcome_set.into_iter().collect();
        let pos = |s: StateId| outcomes.binary_search(&s).expect("outcome present");
        let exit_outcome = exits.iter().map(|&x| pos(x)).collect();
        let fire_outcome = fire
            .iter()
            .map(|k| k.iter().map(|(d, p)| (pos(d), p)).collect())
            .collect();

        Ok(SubordinatedChain {
            event,
            setting_state: root,
            region,
            exits,
            chain,
            fire,
            fire_impulse,
            stats,
            outcomes,
            exit_outcome,
            fire_outcome,
        })
    }

    /// States an fd step can end in: exit states and fd kernel successors.
    pub fn outcomes(&self) -> &[StateId] {
        &self.outcomes
    }

    /// Maps the transient vector at the timer expiry (and the reward
    /// accumulated until then) to the fd step's outcome distribution and
    /// total expected reward, fd impulses included.
    pub fn step_outcome(&self, pi: &[f64], accumulated_reward: f64) -> FdStepOutcome {
        let m = self.region.len();
        let mut probabilities = vec![0.0; self.outcomes.len()];
        let mut reward = accumulated_reward;
        for i in 0..m {
            let mass = pi[i];
            if mass == 0.0 {
                continue;
            }
            reward += mass * self.fire_impulse[i];
            for &(o, p) in &self.fire_outcome[i] {
                probabilities[o] += mass * p;
            }
        }
        for (k, &o) in self.exit_outcome.iter().enumerate() {
            probabilities[o] += pi[m + k];
        }
        FdStepOutcome { probabilities, reward }
    }

    /// Per local state, the value contribution used to score an fd step
    /// against successor values: `fire_impulse + N·V` on region states,
    /// `V(exit)` on exit states.
    pub fn scoring_vector(&self, outcome_value: impl Fn(usize) -> f64) -> Vec<f64> {
        let m = self.region.len();
        let mut g = Vec::with_capacity(self.chain.len());
        for i in 0..m {
            let v: f64 = self.fire_outcome[i].iter().map(|&(o, p)| p * outcome_value(o)).sum();
            g.push(self.fire_impulse[i] + v);
        }
        for &o in &self.exit_outcome {
            g.push(outcome_value(o));
        }
        g
    }

    /// Smallest fd impulse over the event's transitions with positive probability.
    pub fn min_fire_impulse(&self, model: &FdctmcModel) -> f64 {
        self.region
            .iter()
            .zip(&self.fire)
            .flat_map(|(&s, k)| {
                k.iter()
                    .filter(|&(_, p)| p > 0.0)
                    .map(move |(d, _)| model.rewards().impulse(s, EventRef::Fd(self.event), d))
            })
            .fold(f64::INFINITY, f64::min)
    }
}
