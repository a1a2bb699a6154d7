//! Small-noise asymptotic expansions for SDEs driven by Brownian motion with
//! drift and compound-Poisson jumps.
//!
//! The solution of `dX = β_ε(X) dt + σ_ε(X) η(dt)` is expanded as
//! `u_ε ≈ Σ ε^k u_k`; each `u_k` solves a linear SDE whose coefficients are
//! built from `u_0 … u_{k-1}` by multi-index Taylor composition.

// `!(x > 0.0)` style checks are used on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod expansion;
pub mod field;
mod linalg;
pub mod model;
pub mod multiindex;
pub mod oracle;
pub mod remainder;
pub mod rng;
pub mod scalar;
pub mod simulate;

pub use error::{FieldError, NoiseError, SolveError, StudyError};
pub use expansion::{
    solve_coefficients, solve_coefficients_linear_model, solve_linear_by_variation_of_constants, ExpansionResult,
    FundamentalMatrix, LinearModel,
};
pub use field::{FieldRef, FiniteDifferenceField, FnField, MatrixField, Polynomial, ScalarField, VectorField};
pub use model::{
    sample_noise_path, BoxDomain, JumpSpec, MarkDistribution, ModelSpec, NoiseDrift, NoisePath, NoiseSpec, TimeGrid,
};
pub use multiindex::{MultiIndex, OrderPartition, TaylorRemainderBound};
pub use remainder::{
    estimate_bound_constants, run_remainder_study, BoundConstants, EpsStats, RemainderConfig, RemainderStudy, SlopeFit,
};
pub use simulate::{integrate_full, integrate_linear, CoefficientPath, LinearSdeCoefficients, SolutionPath};
