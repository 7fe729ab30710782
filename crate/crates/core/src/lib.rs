//! Direction-of-arrival estimation with a frequency-scanning leaky-wave
//! antenna by spatially filtered sparse Bayesian learning.
//!
//! The numerical core is generic over [`scalar::Real`] (`f32` or `f64`); the
//! aliases below fix it to `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod config;
pub mod error;
pub mod io;
pub mod lwa;
pub mod offgrid;
pub mod pipeline;
pub mod presets;
pub mod sbl;
pub mod scalar;
pub mod sector;
pub mod signal;

pub use error::{Error, Result};
pub use pipeline::Mode;
pub use scalar::Real;

pub type Antenna = lwa::AntennaParams<f64>;
pub type Grid = signal::FrequencyGrid<f64>;
pub type Scenario = signal::SourceScenario<f64>;
pub type Snapshots = signal::SnapshotMatrix<f64>;
pub type Plan = sector::SectorPlan<f64>;
pub type Sbl = sbl::SblConfig<f64>;
pub type Estimator = pipeline::EstimatorConfig<f64>;
pub type Estimate = pipeline::DoaEstimate<f64>;
