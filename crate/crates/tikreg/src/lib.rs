//! Filtered truncated-SVD solver for discretized first-kind integral
//! equations, with the regularization parameter estimated on a downsampled
//! copy of the system.
//!
//! The pieces fit together like this:
//!
//! * [`problem`] defines kernels (the gravity family with analytic norm and
//!   exact element integrals) and source functions;
//! * [`galerkin`] discretizes on uniform grids with the normalized box
//!   basis, downsamples fine matrices to coarse ones and computes the
//!   approximation-quality diagnostic;
//! * [`spectral`] wraps the SVD with a deterministic sign convention,
//!   numerical rank and Picard diagnostics;
//! * [`regparam`] evaluates the truncated MDP/ADP/UPRE/GCV criteria and
//!   picks the parameter by a grid-plus-golden-section search;
//! * [`multiscale`] runs the coarse-to-fine pipelines for clean and noisy
//!   data;
//! * [`experiment`] sweeps configurations and writes CSV artifacts, driven
//!   by the `tikreg` binary.

pub mod error;
pub mod experiment;
pub mod galerkin;
pub mod multiscale;
pub mod noise;
pub mod problem;
pub mod regparam;
pub mod spectral;

pub use error::{Error, Result};
pub use galerkin::{Assembly, DiscreteSystem, Grid};
pub use multiscale::{
    run_noise_free, run_with_noise, solve_truncated, MultiscaleConfig, MultiscalePlan, NoiseMode,
    RegularizedSolution,
};
pub use problem::{Kernel, Source};
pub use regparam::{LambdaEstimate, Method, SearchConfig};
pub use spectral::{decompose, numerical_rank, picard_table, SpectralSystem, TruncatedSvd};
