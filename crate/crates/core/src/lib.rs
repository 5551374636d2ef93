//! Radial solver for the semilinear problem -Lap u = V u^p + k delta_0 on
//! R^N with decay at infinity.
//!
//! The crate computes the minimal solution by a monotone source iteration
//! under a measured supersolution barrier, probes the existence threshold
//! in k, certifies linearized stability through the first generalized
//! eigenvalue of the quadratic-form pencil, and produces a second solution
//! by a mountain-pass search on the shifted energy functional. Everything
//! runs on a log-spaced radial mesh with product quadrature.

pub mod barrier;
pub mod config;
pub mod error;
pub mod field;
pub mod green;
pub mod grid;
pub mod io;
pub mod minimal;
pub mod mountain;
pub mod pipeline;
pub mod problem;
pub mod stability;
pub mod tridiag;
pub mod verify;

pub use barrier::{estimate_c2, supersolution_t, BarrierConstants};
pub use error::{Error, Result};
pub use field::{RadialField, Representation};
pub use green::{fundamental_solution, green_apply};
pub use grid::RadialGrid;
pub use minimal::{bisect_kstar, check_monotone_in_v, iterate_minimal, IterationReport, KStarEstimate, Verdict};
pub use mountain::{
    embedding_check, energy, energy_gradient, find_endpoint, mountain_pass, EnergyContext,
    MountainPassOptions, MountainPassReport,
};
pub use problem::{
    newton_constant, potential_v0, unit_sphere_area, validate_exponents, Potential, ProblemSpec,
    ValidatedSpec, ValidationMode,
};
pub use stability::{
    assemble_forms, hardy_bound_check, lambda1, stability_margin, QuadraticForms, StabilityReport,
};
pub use verify::{check_singularity_and_decay, residual_pde, weak_residual, VerificationReport};
