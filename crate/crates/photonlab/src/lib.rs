//! Closed-loop photon experiments on simulated quantum-dot sources: presets,
//! scenario runners, tag-file IO, reports and plots.

pub mod cli;
pub mod config;
mod error;
pub mod experiments;
pub mod io;
pub mod parallel;
pub mod plot;
pub mod presets;
pub mod report;

pub use config::RunConfig;
pub use error::{Error, Result};
pub use experiments::Setup;
pub use presets::QdPreset;
pub use report::{ExperimentReport, Outcome, Scenario};
