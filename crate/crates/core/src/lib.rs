//! Simulator for a polarization-encoded quantum channel running in both
//! directions over a fiber shared with DWDM classical traffic.
//!
//! Numeric modules are generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the common `f64` case. [`scenario`] is `f64` only.

// `!(x > 0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod apc;
pub mod error;
pub mod link;
pub mod photon;
pub mod polarization;
pub mod raman;
pub mod scalar;
pub mod scenario;

pub use error::{Error, Result};
pub use link::{Direction, FiberType, PerDirection};
pub use scalar::Real;
pub use scenario::{default_paper_scenario, Scenario};

pub type JonesVector = polarization::JonesVector<f64>;
pub type PolUnitary = polarization::PolUnitary<f64>;
pub type DriftProcess = polarization::DriftProcess<f64>;
pub type FiberSpec = link::FiberSpec<f64>;
pub type LossBudget = link::LossBudget<f64>;
pub type SourceSpec = photon::SourceSpec<f64>;
pub type DetectorSpec = photon::DetectorSpec<f64>;
pub type RamanParams = raman::RamanParams<f64>;
pub type ChannelScaling = raman::ChannelScaling<f64>;
pub type ApcState = apc::ApcState<f64>;
pub type DriftRecord = apc::DriftRecord<f64>;
pub type VisibilityInputs = analysis::VisibilityInputs<f64>;
pub type DistanceModel = analysis::DistanceModel<f64>;
pub type SweepResult = analysis::SweepResult<f64>;
pub type BerCalibration = analysis::BerCalibration<f64>;
