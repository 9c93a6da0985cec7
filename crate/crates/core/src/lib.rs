//! Linearized and nonlinear analysis of a compressible fluid with nonlocal
//! (Gaussian-kernel) capillarity on the periodic grid.
//!
//! Modules, bottom-up:
//! - [`thresholds`]: physical parameters and the scalar frequency thresholds.
//! - [`spectral`]: grids, fields, transforms and Fourier multipliers.
//! - [`lp`]: dyadic blocks, Besov and hybrid norms, paraproducts.
//! - [`propagator`]: exact per-mode evolution of the linear system.
//! - [`lagrangian`]: flows of the mollified velocity and the capillary commutator.
//! - [`nonlinear`]: time stepping of the full systems and the convergence study.
//! - [`apriori`]: the end-to-end a priori inequality check.

pub mod apriori;
pub mod error;
pub mod lagrangian;
pub mod lp;
pub mod nonlinear;
pub mod propagator;
pub mod quadrature;
pub mod report;
pub mod spectral;
pub mod thresholds;

pub use error::{Error, Result};
pub use rustfft::num_complex::Complex64;
pub use thresholds::PhysicalParams;
