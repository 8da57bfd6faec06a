//! Command-line harness: scenario files, presets, simulation runs, fits,
//! noise and transport reports, and SVG plots.

pub mod commands;
pub mod error;
pub mod presets;
pub mod runner;
pub mod scenario;
pub mod svg;

pub use error::{CliError, Result};
