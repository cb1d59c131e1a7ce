//! Simulation and numerical-verification toolkit for the maximum of the
//! two-dimensional discrete Gaussian free field (DGFF).
//!
//! The crate provides:
//!
//! * exact field samplers (spectral sine-basis and Cholesky oracle) with the
//!   Dirichlet boundary convention, plus the coarse/fine Markov decomposition;
//! * the branching random walk (BRW) and modified branching random walk
//!   (MBRW) hierarchical fields with their exact variance ladder;
//! * a ground-truth oracle layer: the simple-random-walk potential kernel
//!   computed in exact rational arithmetic, dense lattice Green functions,
//!   harmonic measure, and coarse-field covariances with continuum refinement;
//! * one-dimensional Brownian barrier densities (reflection closed form and
//!   bent-barrier Monte Carlo);
//! * ensemble machinery for the recentered maximum: the centering sequence
//!   `m_N`, empirical laws, tail-exponent fits, argmax densities, and the
//!   Kolmogorov-Smirnov / Levy distances;
//! * the mixture limit process `G*_{K,delta}` (Bernoulli-gated heavy-tail
//!   peaks over a coarse Gaussian) and calibration/comparison against
//!   finite-`N` ensembles.
//!
//! The library is the primary interface. Each major capability has a runnable
//! example:
//!
//! ```text
//! cargo run --release --example sample_field        # spectral GFF sampler
//! cargo run --release --example coarse_fine         # Markov decomposition
//! cargo run --release --example green_oracle        # potential kernel + Green tables
//! cargo run --release --example hierarchical_fields # BRW / MBRW and covariance checks
//! cargo run --release --example barrier_densities   # reflection + bent barrier
//! cargo run --release --example max_ensemble        # ensemble maxima and tail fit
//! cargo run --release --example limit_law           # calibrated limit process
//! ```
//!
//! A thin `dgff` binary wraps the same entry points behind subcommands
//! (`sample`, `ensemble`, `tail`, `decompose`, `hierarchy-check`, `barrier`,
//! `limitlaw`, `compare`); see the README.

pub mod barrier;
pub mod cli;
pub mod dst;
pub mod error;
pub mod extremes;
pub mod field;
pub mod green;
pub mod hierarchical;
pub mod io;
pub mod lattice;
pub mod limitlaw;
pub mod numeric;
pub mod rng;
pub mod sampler;

pub use error::DgffError;
pub use field::{FieldSample, Grid, ModelTag};
pub use lattice::{BoxSpec, Point, SubBoxPartition};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, DgffError>;

/// `2 sqrt(2/pi)`, the prefactor of the centering sequence.
pub const TWO_SQRT_TWO_OVER_PI: f64 = 1.5957691216057308;

/// `sqrt(2 pi)`, the tail decay rate of the recentered maximum.
pub const SQRT_TWO_PI: f64 = 2.5066282746310002;

/// `(2 log 2)/pi`, the per-level variance of the hierarchical fields.
pub const LEVEL_VARIANCE: f64 = 0.44127068169130325;

/// `c* = 2 log 2 sqrt(2/pi)`, the per-level increment of the centering.
pub const C_STAR: f64 = 1.1061028674656328;
