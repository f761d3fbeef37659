//! Simulation and analysis of exchange-free state transfer between two
//! bosonic modes that couple to a detuned bus only through two-mode squeezing.
//!
//! Units: angular frequencies in rad/us, times in us. Modes are ordered
//! `(S1, S2, S3)` with S3 varying fastest in the flattened basis.

// NaN-rejecting guards are written as negated comparisons.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytic;
pub mod dynamics;
pub mod error;
pub mod experiments;
pub mod fock;
pub mod metrics;
pub mod model;

/// Crate version, echoed into run manifests.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub use dynamics::{EvolutionSpec, Method, State};
pub use error::{Error, Result};
pub use experiments::{CalibrationParams, FitResult, ProtocolResult, Purification};
pub use fock::{
    annihilation_op, binomial_code_state, creation_op, embed_op, fock_state, number_op, CodeLabel,
    DensityMatrix, ModeDims, OperatorMatrix, StateVector,
};
pub use metrics::{PauliTable, ProcessMatrix, WignerMap};
pub use model::{khz_to_angular, ModeCoherence, Pair, RegimeFlag, SystemParams, S1, S2, S3};
