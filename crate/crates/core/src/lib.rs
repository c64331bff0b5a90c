//! Temperate solutions of the Cauchy–Riemann equation on bounded
//! pseudoconvex domains in C^1 and C^2.
//!
//! A current `f` of bidegree `(p, q+1)`, dbar-closed on a domain, is solved
//! in four stages: a free-space Laplace pre-solve, a harmonic remainder with
//! polynomial growth toward the boundary, a minimum weighted-norm dbar solve,
//! and a Sobolev-dual certificate that the solution extends past the
//! boundary. Every stage emits a measurable certificate.

pub mod calculus;
pub mod currents;
pub mod error;
pub mod extension;
pub mod fft;
pub mod fields;
pub mod geometry;
pub mod grid;
pub mod growth;
pub mod hormander;
pub mod pipeline;
pub mod scenario;

pub use num_complex::Complex64;

pub use calculus::{
    cauchy_transform, commutation_check, dbar, dbar_star, laplace_presolve, laplacian,
    newton_potential, DerivativeScheme, OperatorConfig, Presolve,
};
pub use currents::{
    mollify, pairing, sobolev_norm, weighted_l2_norm, Current, FormIndex, Mollifier, SingularAtom,
    WeightSpec,
};
pub use error::{Error, Result};
pub use extension::{
    extend_by_zero, extension_pairing_bound, order_of_extension_check, ExtensionReport, SeriesPoint,
};
pub use geometry::{
    distance_field, normalize_domain, shell_partition, Domain, Shape, ShellDecomposition,
};
pub use grid::{ComplexGrid, GridSpec, Interval};
pub use growth::{
    build_vanishing_family, growth_exponent, harmonic_residual, mean_value_check,
    taylor_bound_check, GrowthReport, VanishingFamily,
};
pub use hormander::{
    c_omega, closedness_residual, solve_weighted_dbar, verify_estimate, SolveReport,
};
pub use pipeline::{
    presolve_commutation_audit, run_theorem1, sobolev_budget, Budget, Mode, PipelineConfig,
    PipelineReport,
};
