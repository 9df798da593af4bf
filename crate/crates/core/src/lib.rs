//! Algorithms for predicting species composition from environmental
//! predictors and evaluating the predicted species sets.
//!
//! The crate is `no_std` (it needs `alloc`). File formats, the command line
//! and run orchestration live in the `sdmbench` crate.
//!
//! Layout:
//! - [`types`]: species index, occurrence records, surveys, prediction sets.
//! - [`raster`], [`features`]: gridded predictors, point sampling,
//!   standardization and feature expansion.
//! - [`synth`]: a synthetic world with known species responses and biased
//!   presence-only sampling.
//! - [`split`]: spatial block hold-out.
//! - [`metrics`]: micro/macro F1, set-size errors and diagnostics.
//! - [`assemblage`]: probability vectors to species sets.
//! - [`spatial`], [`baselines`]: exact nearest-neighbour index and the
//!   nonparametric baselines.
//! - [`glm`], [`forest`], [`sdm`]: per-species Poisson/cloglog models and
//!   random forests.
//! - [`staged`]: shallow multi-label model trained in PA/PO stages.
#![cfg_attr(not(any(feature = "std", test)), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod assemblage;
pub mod baselines;
mod error;
pub mod features;
pub mod forest;
pub mod glm;
pub mod math;
pub mod metrics;
pub mod par;
pub mod raster;
pub mod rng;
pub mod sdm;
pub mod spatial;
pub mod split;
pub mod staged;
pub mod synth;
pub mod types;

pub use crate::error::{Error, Result};
pub use crate::types::{
    Crs, Location, PaSurvey, PoRecord, PredictionSet, ProbabilityVector, SpeciesIndex,
};
