//! Heat kernels of `∂p = 1/2 Δp + v p` with compactly supported `v`: finite-difference
//! and Monte Carlo oracles, ground-state data and the asymptotic formulas across the
//! cone `|x - y| = sqrt(2 λ₀) t`.

// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::too_many_arguments, clippy::needless_range_loop)]

pub mod asymptotics;
pub mod error;
pub mod evolution;
pub mod grid;
pub mod harness;
pub mod potentials;
pub mod quadrature;
pub mod spectral;
pub mod stochastic;
pub mod tridiag;

pub use asymptotics::{CoefficientSet, ConeCoordinates, LaplaceProblem, Region};
pub use error::{Error, Result};
pub use evolution::{EvolveOptions, FieldKind, FreeKernel, KernelField};
pub use grid::{Discretization, Grid1D, Grid2D};
pub use harness::{ExperimentConfig, VerdictReport};
pub use potentials::{Potential, PotentialSpec, Smoothness, SourcePoint};
pub use spectral::{SpectralData, SpectralOptions};
pub use stochastic::BridgeEstimate;
