//! Benchmark harness around `sdmbench-core`: CSV and ESRI ASCII formats,
//! synthetic data directories, a method registry, JSON run manifests,
//! leaderboards and diagnostics, and the `sdmbench` command line.
#![forbid(unsafe_code)]

pub mod cli;
pub mod diagnostics;
mod error;
pub mod io;
pub mod manifest;
pub mod methods;
pub mod run;
pub mod world;

pub use crate::error::{BenchError, Result};
pub use crate::manifest::RunManifest;
pub use crate::run::{run, LeaderboardRow, RunOptions, RunOutcome};
