//! Sudden-expansion dynamics of one-dimensional hard-core bosons with a
//! three-body interaction, with three interchangeable engines: exact
//! Fock-space propagation, free-fermion correlation matrices (W = 0), and
//! matrix-product states evolved by TEBD.

// `!(x > 0.0)` style guards also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod codec;
pub mod error;
pub mod fock;
pub mod freefermion;
pub mod model;
pub mod mps;
pub mod observables;
pub mod scenario;

pub use error::{Error, Result};
pub use fock::{FockBasis, FockVector};
pub use freefermion::CorrelationMatrix;
pub use model::{ModelParams, ThreeSitePhases, TwoSiteGate};
pub use mps::{MpsState, Truncation};
pub use observables::ObservableSeries;
pub use scenario::{ScenarioConfig, ScenarioKind};
