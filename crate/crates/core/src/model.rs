//! In-memory representation of a fixed-delay CTMC with rewards and a target set.
//!
//! A model is a finite state space with an exponential rate matrix, a list of
//! fixed-delay (fd) events, each active in a subset of states and firing
//! through its own probability kernel once its deterministic timer expires,
//! an initial state, a reward structure and the set of goal states.
//!
//! Models are built with [`ModelBuilder`] (or elaborated from source by
//! [`crate::lang`]) and are immutable afterwards.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on probability sums.
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StateId(pub usize);

impl StateId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for StateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Index of an fd event. Also its tie-break priority: lower ids win ties.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub usize);

impl EventId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// The event that caused a change of state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum EventRef {
    Exponential,
    Fd(EventId),
}

/// Sparse discrete distribution over states, sorted by state, no zero entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Distribution {
    entries: Vec<(StateId, f64)>,
}

impl Distribution {
    /// Builds a distribution, merging duplicate states and dropping zero entries.
    /// The sum is not checked here; see [`crate::validate::validate_basic`].
    pub fn new(entries: impl IntoIterator<Item = (StateId, f64)>) -> Self {
        let mut merged: BTreeMap<StateId, f64> = BTreeMap::new();
        for (s, p) in entries {
            *merged.entry(s).or_insert(0.0) += p;
        }
        Distribution {
            entries: merged.into_iter().filter(|&(_, p)| p != 0.0).collect(),
        }
    }

    pub fn point(state: StateId) -> Self {
        Distribution {
            entries: vec![(state, 1.0)],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (StateId, f64)> + '_ {
        self.entries.iter().copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|&(_, p)| p).sum()
    }

    pub fn get(&self, state: StateId) -> f64 {
        self.entries
            .binary_search_by_key(&state, |&(s, _)| s)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }
}

/// Sparse exponential rate matrix, one sorted row per source state.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RateMatrix {
    rows: Vec<Vec<(StateId, f64)>>,
}

impl RateMatrix {
    pub fn new(num_states: usize) -> Self {
        RateMatrix {
            rows: vec![Vec::new(); num_states],
        }
    }

    /// Adds `rate` to the entry `(from, to)`. Rates of parallel transitions add up.
    pub fn add(&mut self, from: StateId, to: StateId, rate: f64) {
        let row = &mut self.rows[from.0];
        match row.binary_search_by_key(&to, |&(s, _)| s) {
            Ok(i) => row[i].1 += rate,
            Err(i) => row.insert(i, (to, rate)),
        }
    }

    pub fn row(&self, from: StateId) -> &[(StateId, f64)] {
        &self.rows[from.0]
    }

    pub fn rate(&self, from: StateId, to: StateId) -> f64 {
        let row = &self.rows[from.0];
        row.binary_search_by_key(&to, |&(s, _)| s)
            .map(|i| row[i].1)
            .unwrap_or(0.0)
    }

    /// Total exit rate E(s), self-loops included.
    pub fn exit_rate(&self, from: StateId) -> f64 {
        self.rows[from.0].iter().map(|&(_, r)| r).sum()
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn nonzeros(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdEvent {
    pub name: String,
    pub delay: f64,
    kernel: BTreeMap<StateId, Distribution>,
}

impl FdEvent {
    pub fn new(name: impl Into<String>, delay: f64) -> Self {
        FdEvent {
            name: name.into(),
            delay,
            kernel: BTreeMap::new(),
        }
    }

    pub fn is_active(&self, state: StateId) -> bool {
        self.kernel.contains_key(&state)
    }

    pub fn active_states(&self) -> impl Iterator<Item = StateId> + '_ {
        self.kernel.keys().copied()
    }

    /// Successor distribution when the event fires in `state`.
    pub fn kernel(&self, state: StateId) -> Option<&Distribution> {
        self.kernel.get(&state)
    }

    pub fn kernel_rows(&self) -> impl Iterator<Item = (StateId, &Distribution)> {
        self.kernel.iter().map(|(&s, d)| (s, d))
    }

    pub fn set_kernel(&mut self, state: StateId, dist: Distribution) {
        self.kernel.insert(state, dist);
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RewardStructure {
    rate: Vec<f64>,
    impulse: BTreeMap<(StateId, EventRef, StateId), f64>,
}

impl RewardStructure {
    pub fn new(num_states: usize) -> Self {
        RewardStructure {
            rate: vec![0.0; num_states],
            impulse: BTreeMap::new(),
        }
    }

    pub fn rate(&self, state: StateId) -> f64 {
        self.rate[state.0]
    }

    pub fn rates(&self) -> &[f64] {
        &self.rate
    }

    pub fn set_rate(&mut self, state: StateId, value: f64) {
        self.rate[state.0] = value;
    }

    pub fn impulse(&self, from: StateId, event: EventRef, to: StateId) -> f64 {
        self.impulse.get(&(from, event, to)).copied().unwrap_or(0.0)
    }

    pub fn set_impulse(&mut self, from: StateId, event: EventRef, to: StateId, value: f64) {
        if value == 0.0 {
            self.impulse.remove(&(from, event, to));
        } else {
            self.impulse.insert((from, event, to), value);
        }
    }

    pub fn impulses(&self) -> impl Iterator<Item = ((StateId, EventRef, StateId), f64)> + '_ {
        self.impulse.iter().map(|(&k, &v)| (k, v))
    }

    /// Multiplies every rate and impulse reward by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        RewardStructure {
            rate: self.rate.iter().map(|r| r * factor).collect(),
            impulse: self.impulse.iter().map(|(&k, &v)| (k, v * factor)).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TargetSet {
    member: Vec<bool>,
}

impl TargetSet {
    pub fn new(num_states: usize) -> Self {
        TargetSet {
            member: vec![false; num_states],
        }
    }

    pub fn insert(&mut self, state: StateId) {
        self.member[state.0] = true;
    }

    #[inline]
    pub fn contains(&self, state: StateId) -> bool {
        self.member[state.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = StateId> + '_ {
        self.member
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(i, _)| StateId(i))
    }

    pub fn len(&self) -> usize {
        self.member.iter().filter(|&&m| m).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.member.iter().any(|&m| m)
    }
}

/// Variable names and per-state valuations, kept for reporting.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Metadata {
    pub variables: Vec<String>,
    pub valuations: Vec<Vec<i64>>,
}

impl Metadata {
    pub fn describe(&self, state: StateId) -> String {
        match self.valuations.get(state.0) {
            Some(vals) if !self.variables.is_empty() => {
                let parts: Vec<String> = self
                    .variables
                    .iter()
                    .zip(vals)
                    .map(|(n, v)| format!("{n}={v}"))
                    .collect();
                format!("({})", parts.join(","))
            }
            _ => format!("s{}", state.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdctmcModel {
    rates: RateMatrix,
    events: Vec<FdEvent>,
    initial: StateId,
    rewards: RewardStructure,
    target: Option<TargetSet>,
    metadata: Metadata,
    active: Vec<Vec<EventId>>,
}

impl FdctmcModel {
    pub fn num_states(&self) -> usize {
        self.rates.num_states()
    }

    pub fn states(&self) -> impl Iterator<Item = StateId> {
        (0..self.num_states()).map(StateId)
    }

    pub fn rates(&self) -> &RateMatrix {
        &self.rates
    }

    pub fn events(&self) -> &[FdEvent] {
        &self.events
    }

    pub fn event(&self, id: EventId) -> &FdEvent {
        &self.events[id.0]
    }

    pub fn event_ids(&self) -> impl Iterator<Item = EventId> {
        (0..self.events.len()).map(EventId)
    }

    pub fn event_by_name(&self, name: &str) -> Option<EventId> {
        self.events.iter().position(|e| e.name == name).map(EventId)
    }

    pub fn initial(&self) -> StateId {
        self.initial
    }

    pub fn rewards(&self) -> &RewardStructure {
        &self.rewards
    }

    pub fn target(&self) -> Option<&TargetSet> {
        self.target.as_ref()
    }

    /// The target set, or [`Error::MissingTarget`] for models without one.
    pub fn require_target(&self) -> Result<&TargetSet> {
        self.target.as_ref().ok_or(Error::MissingTarget)
    }

    pub fn is_target(&self, state: StateId) -> bool {
        self.target.as_ref().is_some_and(|t| t.contains(state))
    }

    pub fn metadata(&self) -> &Metadata {
        &self.metadata
    }

    /// Fd events active in `state`, in priority order.
    pub fn active_events(&self, state: StateId) -> &[EventId] {
        &self.active[state.0]
    }

    pub fn exit_rate(&self, state: StateId) -> f64 {
        self.rates.exit_rate(state)
    }

    pub fn delays(&self) -> BTreeMap<EventId, f64> {
        self.event_ids().map(|e| (e, self.events[e.0].delay)).collect()
    }

    /// Copy of the model with the delay vector replaced.
    pub fn apply_delays(&self, delays: &BTreeMap<EventId, f64>) -> Result<FdctmcModel> {
        let mut model = self.clone();
        for id in self.event_ids() {
            let delay = *delays.get(&id).ok_or(Error::MissingDelay(id))?;
            if !(delay > 0.0) || !delay.is_finite() {
                return Err(Error::NonPositiveDelay { event: id, delay });
            }
            model.events[id.0].delay = delay;
        }
        Ok(model)
    }

    pub fn with_rewards(&self, rewards: RewardStructure) -> Result<FdctmcModel> {
        if rewards.rates().len() != self.num_states() {
            return Err(Error::DimensionMismatch {
                expected: self.num_states(),
                actual: rewards.rates().len(),
            });
        }
        let mut model = self.clone();
        model.rewards = rewards;
        Ok(model)
    }
}

/// Incremental construction of an [`FdctmcModel`].
///
/// ```
/// use fdctmc::model::{ModelBuilder, StateId};
///
/// let mut b = ModelBuilder::new(2);
/// b.rate(StateId(0), StateId(1), 4.0).rate_reward(StateId(0), 2.0).target(StateId(1));
/// let model = b.build().unwrap();
/// assert_eq!(model.exit_rate(StateId(0)), 4.0);
/// ```
#[derive(Debug, Clone)]
pub struct ModelBuilder {
    rates: RateMatrix,
    events: Vec<FdEvent>,
    initial: StateId,
    rewards: RewardStructure,
    target: Option<TargetSet>,
    metadata: Metadata,
    error: Option<Error>,
}

impl ModelBuilder {
    pub fn new(num_states: usize) -> Self {
        ModelBuilder {
            rates: RateMatrix::new(num_states),
            events: Vec::new(),
            initial: StateId(0),
            rewards: RewardStructure::new(num_states),
            target: None,
            metadata: Metadata::default(),
            error: None,
        }
    }

    fn check(&mut self, s: StateId) -> bool {
        if s.0 >= self.rates.num_states() {
            self.error.get_or_insert(Error::StateOutOfRange(s.0));
            false
        } else {
            true
        }
    }

    pub fn initial(&mut self, s: StateId) -> &mut Self {
        if self.check(s) {
            self.initial = s;
        }
        self
    }

    pub fn rate(&mut self, from: StateId, to: StateId, rate: f64) -> &mut Self {
        if self.check(from) && self.check(to) {
            self.rates.add(from, to, rate);
        }
        self
    }

    /// Declares an fd event. Declaration order is the tie-break priority.
    pub fn fd_event(&mut self, name: impl Into<String>, delay: f64) -> EventId {
        self.events.push(FdEvent::new(name, delay));
        EventId(self.events.len() - 1)
    }

    /// Makes `event` active in `state` with the given successor distribution.
    pub fn fd_transition(
        &mut self,
        event: EventId,
        state: StateId,
        successors: impl IntoIterator<Item = (StateId, f64)>,
    ) -> &mut Self {
        let succ: Vec<_> = successors.into_iter().collect();
        if self.check(state) && succ.iter().all(|&(s, _)| self.check(s)) {
            self.events[event.0].set_kernel(state, Distribution::new(succ));
        }
        self
    }

    pub fn rate_reward(&mut self, state: StateId, value: f64) -> &mut Self {
        if self.check(state) {
            self.rewards.set_rate(state, value);
        }
        self
    }

    pub fn impulse(&mut self, from: StateId, event: EventRef, to: StateId, value: f64) -> &mut Self {
        if self.check(from) && self.check(to) {
            self.rewards.set_impulse(from, event, to, value);
        }
        self
    }

    pub fn target(&mut self, state: StateId) -> &mut Self {
        if self.check(state) {
            let n = self.rates.num_states();
            self.target.get_or_insert_with(|| TargetSet::new(n)).insert(state);
        }
        self
    }

    /// Marks the model as having a (possibly empty) target set.
    pub fn declare_target(&mut self) -> &mut Self {
        let n = self.rates.num_states();
        self.target.get_or_insert_with(|| TargetSet::new(n));
        self
    }

    pub fn metadata(&mut self, metadata: Metadata) -> &mut Self {
        self.metadata = metadata;
        self
    }

    pub fn build(self) -> Result<FdctmcModel> {
        if let Some(e) = self.error {
            return Err(e);
        }
        let n = self.rates.num_states();
        let mut active = vec![Vec::new(); n];
        for (i, ev) in self.events.iter().enumerate() {
            for s in ev.active_states() {
                active[s.0].push(EventId(i));
            }
        }
        Ok(FdctmcModel {
            rates: self.rates,
            events: self.events,
            initial: self.initial,
            rewards: self.rewards,
            target: self.target,
            metadata: self.metadata,
            active,
        })
    }
}

/// States reachable from the initial state, not expanding past target states.
pub fn reachable_states(model: &FdctmcModel) -> BTreeSet<StateId> {
    let mut seen = BTreeSet::new();
    let mut stack = vec![model.initial()];
    seen.insert(model.initial());
    while let Some(s) = stack.pop() {
        if model.is_target(s) {
            continue;
        }
        let succ = model
            .rates()
            .row(s)
            .iter()
            .map(|&(d, _)| d)
            .chain(
                model
                    .active_events(s)
                    .iter()
                    .flat_map(|&e| model.event(e).kernel(s).into_iter().flat_map(|k| k.iter().map(|(d, _)| d))),
            )
            .collect::<Vec<_>>();
        for d in succ {
            if seen.insert(d) {
                stack.push(d);
            }
        }
    }
    seen
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_event_model() -> FdctmcModel {
        let mut b = ModelBuilder::new(3);
        let f = b.fd_event("f", 1.0);
        let g = b.fd_event("g", 2.0);
        b.fd_transition(f, StateId(0), [(StateId(1), 1.0)])
            .fd_transition(g, StateId(1), [(StateId(2), 1.0)])
            .target(StateId(2));
        b.build().unwrap()
    }

    #[test]
    fn distribution_merges_duplicates() {
        let d = Distribution::new([(StateId(2), 0.25), (StateId(0), 0.5), (StateId(2), 0.25)]);
        assert_eq!(d.len(), 2);
        assert_eq!(d.get(StateId(2)), 0.5);
        assert_eq!(d.total(), 1.0);
    }

    #[test]
    fn rates_of_parallel_transitions_add() {
        let mut q = RateMatrix::new(2);
        q.add(StateId(0), StateId(1), 1.0);
        q.add(StateId(0), StateId(1), 0.5);
        assert_eq!(q.rate(StateId(0), StateId(1)), 1.5);
        assert_eq!(q.nonzeros(), 1);
    }

    #[test]
    fn apply_delays_identity() {
        let m = two_event_model();
        let same = m.apply_delays(&m.delays()).unwrap();
        assert_eq!(same, m);
    }

    #[test]
    fn apply_delays_round_trips_exactly() {
        let m = two_event_model();
        let delays: BTreeMap<_, _> = [(EventId(0), 0.1 + 0.2), (EventId(1), 1e-9)].into();
        let m2 = m.apply_delays(&delays).unwrap();
        assert_eq!(m2.delays(), delays);
        assert_eq!(m.event(EventId(0)).delay, 1.0);
    }

    #[test]
    fn apply_delays_rejects_bad_input() {
        let m = two_event_model();
        let negative: BTreeMap<_, _> = [(EventId(0), -1.0), (EventId(1), 2.0)].into();
        assert!(matches!(m.apply_delays(&negative), Err(Error::NonPositiveDelay { .. })));
        let missing: BTreeMap<_, _> = [(EventId(0), 1.0)].into();
        assert!(matches!(m.apply_delays(&missing), Err(Error::MissingDelay(EventId(1)))));
    }

    #[test]
    fn builder_rejects_out_of_range_state() {
        let mut b = ModelBuilder::new(2);
        b.rate(StateId(0), StateId(5), 1.0);
        assert!(matches!(b.build(), Err(Error::StateOutOfRange(5))));
    }

    #[test]
    fn active_events_in_priority_order() {
        let mut b = ModelBuilder::new(2);
        let f = b.fd_event("f", 1.0);
        let g = b.fd_event("g", 1.0);
        b.fd_transition(g, StateId(0), [(StateId(1), 1.0)])
            .fd_transition(f, StateId(0), [(StateId(1), 1.0)]);
        let m = b.build().unwrap();
        assert_eq!(m.active_events(StateId(0)), &[f, g]);
    }
}
