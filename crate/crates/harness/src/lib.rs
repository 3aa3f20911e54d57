//! Scenario files, pipelines and emitters for the `factsim` command line.

pub mod config;
pub mod error;
pub mod pipelines;
pub mod svg;
pub mod table;
pub mod verify;

pub use config::{Overrides, Scenario, ScenarioConfig};
pub use error::{HarnessError, Result};
pub use pipelines::Artifacts;
pub use table::{ResultTable, TableMeta};
