//! The modeling language: guarded commands over bounded integer variables,
//! extended with fixed-delay events.
//!
//! ```text
//! fdctmc
//! const double rate = 1.39;
//! module m
//!   fdelay f = 1.0;
//!   s : [0..2] init 0;
//!   [] s=0 -> rate : (s'=1);
//!   [L] s=1 --f-> 0.3 : (s'=0) + 0.7 : (s'=2);
//! endmodule
//! label "target" = s=2;
//! rewards
//!   s<2 : 1.0;
//!   [L] true : 0.5;
//! endrewards
//! ```

pub mod ast;
mod elaborate;
mod export;
mod lexer;
mod parser;

pub use elaborate::{elaborate, elaborate_with_warnings};
pub use export::export_model;
pub use parser::parse;

use crate::error::Result;
use crate::model::FdctmcModel;

/// Parses and elaborates a model file.
pub fn parse_model(source: &str) -> Result<FdctmcModel> {
    elaborate(&parse(source)?)
}
