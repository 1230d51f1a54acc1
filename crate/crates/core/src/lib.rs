//! Phase retrieval from one-bit quantized quadratic measurements.
//!
//! The signal `x ∈ ℝⁿ` is observed only through `y_i = sgn(|⟨a_i, x⟩|² + w_i − τ)`.
//! Reconstruction lifts the problem to `X = x xᵀ` and minimizes a one-sided
//! quadratic consistency loss over rank-1 PSD matrices with accelerated
//! projected gradient descent ([`solver::apgd_run`]). The crate also ships a
//! PhaseLift-style baseline, the Cramér–Rao bound for the measurement model,
//! quality metrics and a seeded experiment harness.

// `!(x > 0.0)` guards deliberately reject NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod baselines;
pub mod crb;
pub mod error;
pub mod experiment;
pub mod image;
pub mod io;
pub mod linalg;
pub mod measurement;
pub mod metrics;
pub mod solver;
mod special;

pub use error::{Error, Result};
pub use linalg::{rank1_psd_project, PowerOptions, SymmetricMatrix};
pub use measurement::{
    encode_binary, gen_gaussian_ensemble, gen_structured_illumination_ensemble,
    gen_unit_sphere_signal, BinaryMeasurements, EnsembleKind, SensingEnsemble, SignalVector,
};
pub use solver::{apgd_run, RunTrace, SolverConfig};
