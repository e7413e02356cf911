//! Model files shipped with the crate.

use crate::error::Result;
use crate::lang::parse_model;
use crate::model::FdctmcModel;

pub const DPM2: &str = include_str!("../models/dpm2.fdctmc");
pub const DPM4: &str = include_str!("../models/dpm4.fdctmc");
pub const DPM6: &str = include_str!("../models/dpm6.fdctmc");
pub const DPM8: &str = include_str!("../models/dpm8.fdctmc");
pub const REJUV: &str = include_str!("../models/rejuv.fdctmc");

/// `(name, source)` of every bundled model.
pub const ALL: &[(&str, &str)] = &[
    ("dpm2", DPM2),
    ("dpm4", DPM4),
    ("dpm6", DPM6),
    ("dpm8", DPM8),
    ("rejuv", REJUV),
];

/// Source of the bundled model called `name`.
pub fn source(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parses the bundled model called `name`.
pub fn load(name: &str) -> Option<Result<FdctmcModel>> {
    source(name).map(parse_model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::validate::{validate_basic, validate_restrictions, Restrictions};

    #[test]
    fn bundled_models_are_valid() {
        for (name, src) in ALL {
            let m = parse_model(src).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert!(validate_basic(&m).is_empty(), "{name}");
            let report = validate_restrictions(&m, Restrictions::All);
            assert!(report.is_ok(), "{name}: {:?}", report.diagnostics);
        }
    }

    #[test]
    fn dpm_state_counts() {
        // idle, busy 1..=N, sleep 0..=N, done
        for (name, n) in [("dpm2", 2), ("dpm4", 4), ("dpm6", 6), ("dpm8", 8)] {
            let m = load(name).unwrap().unwrap();
            assert_eq!(m.num_states(), 2 * n + 3, "{name}");
            assert_eq!(m.events().len(), 2);
        }
    }
}
