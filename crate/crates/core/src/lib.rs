//! Finite-horizon linear-quadratic control of a linear SDE actuated through
//! the Neumann boundary of a 1-D heat equation.
//!
//! The plant couples a heat equation on `[0,1]` to a scalar-noise SDE: the
//! SDE is fed by the PDE trace at `x = 0` while the control enters as the
//! heat flux at `x = 1`. A lifting change of variables moves the boundary
//! input into the domain, the lifted state is expanded in the Neumann cosine
//! eigenbasis, and the resulting finite-dimensional stochastic LQ problem is
//! solved by backward integration of a matrix Riccati equation. Monte Carlo
//! sampling, a second-moment ODE, and a finite-difference simulation of the
//! original plant validate the achieved cost independently.
//!
//! All numerics are generic over the scalar type; the `*64` aliases below
//! are the double-precision instantiations used by the CLI and the shipped
//! configurations.

pub mod assembly;
pub mod checks;
pub mod closedloop;
pub mod convergence;
pub mod error;
pub mod model;
pub mod montecarlo;
pub mod riccati;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};

use num_traits::{FromPrimitive, ToPrimitive};

/// Scalar abstraction for every numeric routine in this crate: `f32` or `f64`.
pub trait Real: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {}

impl<T> Real for T where T: nalgebra::RealField + FromPrimitive + ToPrimitive + Copy {}

/// Converts an `f64` constant into the working scalar type.
pub(crate) fn real<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("constant representable in the scalar type")
}

/// Lossy view of a scalar as `f64`, for error reports and diagnostics.
pub(crate) fn as_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// Double-precision problem specification.
pub type ProblemSpec64 = model::ProblemSpec<f64>;
/// Double-precision spectral basis.
pub type SpectralBasis64 = spectral::SpectralBasis<f64>;
/// Double-precision augmented operators.
pub type AugmentedOperators64 = assembly::AugmentedOperators<f64>;
/// Double-precision Riccati gain schedule.
pub type GainSchedule64 = riccati::GainSchedule<f64>;
