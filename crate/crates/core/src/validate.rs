//! Well-formedness checks and the structural restrictions required by the
//! analysis engines.
//!
//! [`validate_basic`] checks the model definition itself (distributions sum to
//! one, delays are positive, the initial state is not a goal state).
//! [`validate_restrictions`] checks the four restrictions the engines rely on:
//!
//! * **R1** at most one fd event is active in any state;
//! * **R2** every fd event has at most one *setting state*, the state where its
//!   timer is newly started;
//! * **R3** every non-target state has a positive rate reward;
//! * **R4** every fd transition with positive probability has a positive impulse reward.
//!
//! Expected-reward queries only need R1 and R2; synthesis needs all four.

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use crate::model::{reachable_states, EventId, EventRef, FdctmcModel, StateId, PROBABILITY_TOLERANCE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiagnosticKind {
    KernelSum,
    NegativeProbability,
    NonPositiveDelay,
    NegativeRate,
    NegativeReward,
    TargetContainsInitial,
    ConcurrentFdEvents,
    MultipleSettingStates,
    ZeroRateReward,
    ZeroFdImpulse,
}

impl DiagnosticKind {
    /// Restriction number (1-4) for restriction diagnostics.
    pub fn restriction(self) -> Option<u8> {
        match self {
            DiagnosticKind::ConcurrentFdEvents => Some(1),
            DiagnosticKind::MultipleSettingStates => Some(2),
            DiagnosticKind::ZeroRateReward => Some(3),
            DiagnosticKind::ZeroFdImpulse => Some(4),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<StateId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<EventId>,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn diag(kind: DiagnosticKind, message: String, state: Option<StateId>, event: Option<EventId>) -> Diagnostic {
    Diagnostic {
        kind,
        message,
        state,
        event,
    }
}

pub fn validate_basic(model: &FdctmcModel) -> Vec<Diagnostic> {
    let meta = model.metadata();
    let mut out = Vec::new();
    for id in model.event_ids() {
        let ev = model.event(id);
        if !(ev.delay > 0.0) || !ev.delay.is_finite() {
            out.push(diag(
                DiagnosticKind::NonPositiveDelay,
                format!("fd event {}: delay must be positive, got {}", ev.name, ev.delay),
                None,
                Some(id),
            ));
        }
        for (s, dist) in ev.kernel_rows() {
            if dist.iter().any(|(_, p)| p < 0.0) {
                out.push(diag(
                    DiagnosticKind::NegativeProbability,
                    format!("fd event {} in state {}: negative probability", ev.name, meta.describe(s)),
                    Some(s),
                    Some(id),
                ));
            }
            let sum = dist.total();
            if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
                out.push(diag(
                    DiagnosticKind::KernelSum,
                    format!("fd event {} in state {}: kernel row sums to {sum}", ev.name, meta.describe(s)),
                    Some(s),
                    Some(id),
                ));
            }
        }
    }
    for s in model.states() {
        if model.rates().row(s).iter().any(|&(_, r)| !(r >= 0.0) || !r.is_finite()) {
            out.push(diag(
                DiagnosticKind::NegativeRate,
                format!("state {}: rates must be finite and non-negative", meta.describe(s)),
                Some(s),
                None,
            ));
        }
        if !(model.rewards().rate(s) >= 0.0) {
            out.push(diag(
                DiagnosticKind::NegativeReward,
                format!("state {}: rate reward must be non-negative", meta.describe(s)),
                Some(s),
                None,
            ));
        }
    }
    if let Some(((s, _, _), _)) = model.rewards().impulses().find(|&(_, v)| !(v >= 0.0)) {
        out.push(diag(
            DiagnosticKind::NegativeReward,
            format!("state {}: impulse reward must be non-negative", meta.describe(s)),
            Some(s),
            None,
        ));
    }
    if model.is_target(model.initial()) {
        out.push(diag(
            DiagnosticKind::TargetContainsInitial,
            "target set must not contain the initial state".to_string(),
            Some(model.initial()),
            None,
        ));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Restrictions {
    /// R1 and R2, enough for expected-reward queries.
    Structural,
    /// R1 to R4, needed for synthesis.
    All,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RestrictionReport {
    /// Setting state per fd event (indexed by event id). `None` when the event
    /// is never started from a reachable state, or when R2 fails for it.
    pub setting_states: Vec<Option<StateId>>,
    pub diagnostics: Vec<Diagnostic>,
}

impl RestrictionReport {
    pub fn is_ok(&self) -> bool {
        self.diagnostics.is_empty()
    }

    pub fn setting_state(&self, event: EventId) -> Option<StateId> {
        self.setting_states[event.0]
    }
}

/// Calls `visit(successor, event)` for every one-step transition out of `s`.
fn for_each_transition(model: &FdctmcModel, s: StateId, mut visit: impl FnMut(StateId, EventRef)) {
    for &(d, _) in model.rates().row(s) {
        visit(d, EventRef::Exponential);
    }
    for &e in model.active_events(s) {
        if let Some(k) = model.event(e).kernel(s) {
            for (d, _) in k.iter() {
                visit(d, EventRef::Fd(e));
            }
        }
    }
}

/// States where each fd event's timer is newly started, over reachable states.
///
/// The timer of `f` is started in `s'` when `f` is active in `s'` and either
/// `f` was not active in the previous state or `f` itself just fired; plus the
/// initial state if `f` is active there. Target states are never setting
/// states since runs end on entering them.
pub fn setting_states(model: &FdctmcModel) -> Vec<BTreeSet<StateId>> {
    let mut sets = vec![BTreeSet::new(); model.events().len()];
    let init = model.initial();
    if !model.is_target(init) {
        for &f in model.active_events(init) {
            sets[f.0].insert(init);
        }
    }
    for s in reachable_states(model) {
        if model.is_target(s) {
            continue;
        }
        let before = model.active_events(s);
        for_each_transition(model, s, |d, via| {
            if model.is_target(d) {
                return;
            }
            for &f in model.active_events(d) {
                if !before.contains(&f) || via == EventRef::Fd(f) {
                    sets[f.0].insert(d);
                }
            }
        });
    }
    sets
}

pub fn validate_restrictions(model: &FdctmcModel, which: Restrictions) -> RestrictionReport {
    let meta = model.metadata();
    let mut diagnostics = Vec::new();
    let reachable = reachable_states(model);

    for &s in &reachable {
        let active = model.active_events(s);
        if active.len() > 1 && !model.is_target(s) {
            let names: Vec<_> = active.iter().map(|&e| model.event(e).name.as_str()).collect();
            diagnostics.push(diag(
                DiagnosticKind::ConcurrentFdEvents,
                format!(
                    "R1: state {} has {} concurrently active fd events ({})",
                    meta.describe(s),
                    active.len(),
                    names.join(", ")
                ),
                Some(s),
                None,
            ));
        }
    }

    let sets = setting_states(model);
    let mut setting = vec![None; sets.len()];
    for (i, set) in sets.iter().enumerate() {
        match set.len() {
            0 => {}
            1 => setting[i] = set.iter().next().copied(),
            _ => {
                let states: Vec<_> = set.iter().map(|&s| meta.describe(s)).collect();
                diagnostics.push(diag(
                    DiagnosticKind::MultipleSettingStates,
                    format!(
                        "R2: timer of fd event {} is set in {} states ({})",
                        model.event(EventId(i)).name,
                        set.len(),
                        states.join(", ")
                    ),
                    set.iter().nth(1).copied(),
                    Some(EventId(i)),
                ));
            }
        }
    }

    if which == Restrictions::All {
        for &s in &reachable {
            if model.is_target(s) {
                continue;
            }
            if !(model.rewards().rate(s) > 0.0) {
                diagnostics.push(diag(
                    DiagnosticKind::ZeroRateReward,
                    format!("R3: state {} has no positive rate reward", meta.describe(s)),
                    Some(s),
                    None,
                ));
            }
            for &e in model.active_events(s) {
                let Some(kernel) = model.event(e).kernel(s) else { continue };
                for (d, p) in kernel.iter() {
                    if p > 0.0 && !(model.rewards().impulse(s, EventRef::Fd(e), d) > 0.0) {
                        diagnostics.push(diag(
                            DiagnosticKind::ZeroFdImpulse,
                            format!(
                                "R4: fd transition {} --{}-> {} has no positive impulse reward",
                                meta.describe(s),
                                model.event(e).name,
                                meta.describe(d)
                            ),
                            Some(s),
                            Some(e),
                        ));
                    }
                }
            }
        }
    }

    RestrictionReport {
        setting_states: setting,
        diagnostics,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelBuilder;

    fn kinds(d: &[Diagnostic]) -> Vec<DiagnosticKind> {
        d.iter().map(|d| d.kind).collect()
    }

    #[test]
    fn kernel_row_summing_to_one_passes() {
        let mut b = ModelBuilder::new(3);
        let f = b.fd_event("f", 1.0);
        b.fd_transition(f, StateId(1), [(StateId(0), 0.3), (StateId(2), 0.7)]);
        assert!(validate_basic(&b.build().unwrap()).is_empty());
    }

    #[test]
    fn kernel_row_short_of_one() {
        let mut b = ModelBuilder::new(3);
        let f = b.fd_event("f", 1.0);
        b.fd_transition(f, StateId(1), [(StateId(0), 0.5), (StateId(2), 0.4)]);
        let d = validate_basic(&b.build().unwrap());
        assert_eq!(kinds(&d), vec![DiagnosticKind::KernelSum]);
        assert!(d[0].message.contains("row sums to 0.9"), "{}", d[0].message);
    }

    #[test]
    fn zero_delay_is_rejected() {
        let mut b = ModelBuilder::new(2);
        let f = b.fd_event("f", 0.0);
        b.fd_transition(f, StateId(0), [(StateId(1), 1.0)]);
        let d = validate_basic(&b.build().unwrap());
        assert_eq!(kinds(&d), vec![DiagnosticKind::NonPositiveDelay]);
        assert!(d[0].message.contains("delay must be positive"));
    }

    #[test]
    fn initial_in_target_is_rejected() {
        let mut b = ModelBuilder::new(2);
        b.target(StateId(0));
        assert_eq!(
            kinds(&validate_basic(&b.build().unwrap())),
            vec![DiagnosticKind::TargetContainsInitial]
        );
    }

    #[test]
    fn fd_self_firing_restarts_timer_in_same_state() {
        // f fires from 0 back into 0: still a single setting state.
        let mut b = ModelBuilder::new(2);
        let f = b.fd_event("f", 1.0);
        b.fd_transition(f, StateId(0), [(StateId(0), 0.5), (StateId(1), 0.5)]).target(StateId(1));
        let m = b.build().unwrap();
        let r = validate_restrictions(&m, Restrictions::Structural);
        assert!(r.is_ok());
        assert_eq!(r.setting_state(f), Some(StateId(0)));
    }

    #[test]
    fn region_entered_twice_violates_r2() {
        // 0 -> 1 (f active), 0 -> 2 (f active), 1 and 2 not connected inside the region.
        let mut b = ModelBuilder::new(4);
        let f = b.fd_event("f", 1.0);
        b.rate(StateId(0), StateId(1), 1.0)
            .rate(StateId(0), StateId(2), 1.0)
            .fd_transition(f, StateId(1), [(StateId(3), 1.0)])
            .fd_transition(f, StateId(2), [(StateId(3), 1.0)])
            .target(StateId(3));
        let r = validate_restrictions(&b.build().unwrap(), Restrictions::Structural);
        assert_eq!(kinds(&r.diagnostics), vec![DiagnosticKind::MultipleSettingStates]);
        assert_eq!(r.setting_state(f), None);
    }

    #[test]
    fn move_inside_region_does_not_restart_timer() {
        let mut b = ModelBuilder::new(3);
        let f = b.fd_event("f", 1.0);
        b.rate(StateId(0), StateId(1), 1.0)
            .rate(StateId(1), StateId(0), 1.0)
            .fd_transition(f, StateId(0), [(StateId(2), 1.0)])
            .fd_transition(f, StateId(1), [(StateId(2), 1.0)])
            .target(StateId(2));
        let r = validate_restrictions(&b.build().unwrap(), Restrictions::Structural);
        assert!(r.is_ok(), "{:?}", r.diagnostics);
        assert_eq!(r.setting_state(f), Some(StateId(0)));
    }
}
