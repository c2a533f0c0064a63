//! Exact and modified Cramer-Rao bounds for semi-blind, pilot-only and blind
//! estimation of the composite channels `a = h1*h2` and `b = g1*h2` at a
//! terminal of an amplify-and-forward two-way relay network whose peer
//! transmits square QAM data.
//!
//! The crate is organised bottom-up:
//!
//! * [`constellation`] builds square QAM alphabets and their first-quadrant levels.
//! * [`signal_model`] holds scenario parameters and simulates received blocks.
//! * [`likelihood`] evaluates the factorised QAM likelihood in the log domain.
//! * [`quadrature`] provides Gauss-Hermite / Gauss-Legendre rules and Gaussian moments.
//! * [`fim`] assembles the exact and modified Fisher information and the bounds.
//! * [`oracle`] holds the Monte-Carlo estimators used to validate [`fim`].
//! * [`sweep`] drives single-scenario evaluation, SNR/N sweeps and the validation suite.

// `!(x > 0.0)` is used on purpose so that NaN lands on the error path.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constellation;
pub mod error;
pub mod fim;
pub mod likelihood;
pub mod oracle;
pub mod quadrature;
pub mod signal_model;
pub mod sweep;

mod stats;

pub use constellation::Constellation;
pub use error::{CrbError, Result};
pub use fim::{
    crb, exact_fim, mcrb, mfim, CrbReport, EstimationMode, FisherMatrix, GammaQuadrature,
    GammaSet, GammaTerm, Provenance,
};
pub use likelihood::{log_likelihood, CoeffTable, LikelihoodMethod};
pub use num_complex::Complex64;
pub use quadrature::{hermite_rule, legendre_rule, QuadRule};
pub use signal_model::{ChannelRealization, Observation, ScenarioParams, Theta};
