//! Expected-reward analysis and optimal timeout synthesis for continuous-time
//! Markov chains extended with fixed-delay events.

pub mod error;
pub mod lang;
pub mod model;
pub mod models;
pub mod reward;
pub mod sim;
pub mod sparse;
pub mod subordinated;
pub mod synthesis;
pub mod transient;
pub mod validate;

pub use error::{Error, Result};
pub use model::{EventId, EventRef, FdctmcModel, ModelBuilder, StateId};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/language.md")]
    mod language {}
    #[doc = include_str!("../../../book/src/transient.md")]
    mod transient {}
    #[doc = include_str!("../../../book/src/reward.md")]
    mod reward {}
    #[doc = include_str!("../../../book/src/synthesis.md")]
    mod synthesis {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
