//! Rational spectral densities on the d-torus from finitely many
//! trigonometric moments.
//!
//! Given moments `c_k = ∫ e^{i(k,θ)} Φ dm` over the symmetric box
//! `Ω = {k : |k_j| ≤ n}` and a strictly positive numerator polynomial `P`,
//! the crate finds the unique strictly positive rational density
//! `Φ* = P / Q*` whose moments match `c` exactly, by minimizing a strictly
//! convex dual functional over the denominator coefficients. Around that
//! core sit the pieces of a complete estimation pipeline: moment estimation
//! from lattice samples (with the biased/unbiased selection rule),
//! ground-truth construction from recursive-filter taps, stationary field
//! synthesis, density diagnostics (entropy, total variation, mode counts),
//! and ARMA export.
//!
//! ```
//! use num_complex::Complex64;
//! use rce_md::grid::{GridFunction, TorusGrid};
//! use rce_md::indexing::MultiIndexSet;
//! use rce_md::moments::MomentSequence;
//! use rce_md::solver::{solve, SolverConfig};
//!
//! // Moments (1, 0.35) of some unknown one-dimensional density …
//! let omega = MultiIndexSet::new(1, 1)?;
//! let c = MomentSequence::new(
//!     omega,
//!     vec![Complex64::new(1.0, 0.0), Complex64::new(0.35, 0.0)],
//! )?;
//!
//! // … are matched exactly by the solved rational density 1/Q*.
//! let grid = TorusGrid::new(1, 128);
//! let prior = GridFunction::constant(grid, 1.0);
//! let report = solve(&prior, &c, &SolverConfig::default())?;
//! assert!(report.moment_residual < 1e-8);
//! assert!(report.lambda_matrix_pd);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod arma;
pub mod cli;
pub mod grid;
pub mod indexing;
pub mod io;
pub mod moments;
pub mod solver;
pub mod spectral;
pub mod synth;

pub use arma::{extract_arma, ArmaModel};
pub use grid::{fourier_coefficients, integrate, GridFunction, TorusGrid};
pub use indexing::{FlatIndexMap, MultiIndexSet};
pub use moments::{
    assemble_moment_matrix, estimate_biased, estimate_unbiased, is_positive_definite,
    select_statistic, LatticeField, MomentSequence, StatisticKind,
};
pub use solver::{fit_l2_baseline, solve, SolveReport, SolverConfig, StructuredLagrangian};
pub use spectral::{
    count_modes, entropy, total_variation, tv_upper_bound, verify_moments,
    RationalSpectralDensity,
};
pub use synth::{generate_field, truth_density, FilterCoefficients, RandomSource};

// The guide chapters double as doctests: every fenced Rust block below
// compiles and runs under `cargo test --doc`, keeping the book in sync with
// the library.
#[doc = include_str!("../../../book/src/introduction.md")]
pub mod _guide_introduction {}
#[doc = include_str!("../../../book/src/grids-and-moments.md")]
pub mod _guide_grids_and_moments {}
#[doc = include_str!("../../../book/src/index-sets.md")]
pub mod _guide_index_sets {}
#[doc = include_str!("../../../book/src/estimating-moments.md")]
pub mod _guide_estimating_moments {}
#[doc = include_str!("../../../book/src/the-dual-solve.md")]
pub mod _guide_the_dual_solve {}
#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod _guide_diagnostics {}
#[doc = include_str!("../../../book/src/synthesis-and-arma.md")]
pub mod _guide_synthesis_and_arma {}
#[doc = include_str!("../../../book/src/command-line.md")]
pub mod _guide_command_line {}
