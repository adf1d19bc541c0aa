//! Figure-style scenarios: configuration, runners and table output.

pub mod config;
pub mod output;
pub mod runners;

pub use config::{Axis, CaseName, Format, Jump, ScenarioConfig, PRESETS};
pub use output::{Cell, Table};
pub use runners::*;
