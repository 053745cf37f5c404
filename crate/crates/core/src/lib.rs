//! Sequential change-point detection for i.i.d. observations whose density
//! switches from `p0` to `p1` at an unknown time.
//!
//! The crate provides five stopping rules (Bayes with a geometric prior,
//! uniform prior, CUSUM, Shiryaev-Roberts and a CUSUM statistic compared
//! against an iterated-logarithm boundary), calibration of the boundary
//! rule's offset, delay bounds, and a Monte Carlo harness measuring
//! false-alarm probability and average delay as functions of the change
//! point. Numeric code is generic over [`Scalar`] (`f32` or `f64`);
//! calibration, delay and experiment code work in `f64`.

pub mod boundary;
pub mod calibration;
pub mod delay;
pub mod detectors;
pub mod error;
pub mod experiments;
pub mod model;
pub mod rng;
pub mod scalar;

pub use boundary::{BoundarySpec, BoundaryTable, CrossingBoundary};
pub use calibration::{calibrate, CalibratedThreshold, CalibrationMethod, CalibrationOptions};
pub use delay::{solve_delay, DelayBound};
pub use detectors::{Monitor, RuleKind, StopTime, StoppingRule, Threshold};
pub use error::{Error, Result};
pub use experiments::{sweep, ExperimentConfig, ExperimentResult, RuleConfig};
pub use model::{ChangeModel, ChangeTime, GaussianShift, PathSpec};
pub use scalar::Scalar;

pub type BoundarySpec64 = BoundarySpec<f64>;
pub type BoundarySpec32 = BoundarySpec<f32>;
pub type GaussianShift64 = GaussianShift<f64>;
pub type GaussianShift32 = GaussianShift<f32>;
pub type StoppingRule64 = StoppingRule<f64>;
pub type StoppingRule32 = StoppingRule<f32>;
pub type Monitor64 = Monitor<f64>;
pub type Monitor32 = Monitor<f32>;
