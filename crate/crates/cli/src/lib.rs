//! Scenario-driven front end for `decoq-core`.

pub mod commands;
pub mod eval;
pub mod expr;
pub mod format;
pub mod scenario;

pub use commands::{Outcome, Overrides, Session};
pub use scenario::{Scenario, ScenarioError};
