//! Strong approximation of a 7-dimensional SDE whose coefficients have
//! derivatives of at most linear growth, yet whose terminal value cannot be
//! approximated at a polynomial rate by any method that observes the driving
//! Brownian motion at fixed times.
//!
//! The crate provides the coefficient family, the closed-form solution law,
//! the non-adaptive interpolation scheme, the path-adaptive scheme with its
//! cost accounting, an Euler–Maruyama baseline, deterministic oracles for the
//! best non-adaptive error and the symmetrization lower bound, and a
//! replication-parallel Monte Carlo harness.
//!
//! The closed-form layer ([`coefficients`], [`exact_solution`], [`brownian`],
//! [`quadrature`]) is generic over the scalar type through [`Real`]. The
//! stochastic and experiment layer works in `f64`, which is what the
//! tolerances of the variance identities require.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod brownian;
pub mod coefficients;
pub mod error;
pub mod exact_solution;
pub mod gaussian_model;
pub mod harness;
pub mod oracles;
pub mod quadrature;
pub mod rng;
pub mod schemes;

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive};

pub use error::{Error, Result};

/// Floating point scalar accepted by the generic layer: `f32` or `f64`.
pub trait Real: Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {}

impl<T> Real for T where T: Float + FloatConst + FromPrimitive + Debug + Display + Default + Send + Sync + 'static {}

/// Converts an `f64` literal into the working scalar.
#[inline]
pub(crate) fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 literal representable in scalar type")
}

pub type Params = coefficients::ModelParams<f64>;
pub type Coefficients = coefficients::CoefficientSet<f64>;
pub type Solution = exact_solution::SolutionVector<f64>;
pub type Grid = brownian::TimeGrid<f64>;
pub type Path = brownian::BrownianPath<f64>;

pub type Params32 = coefficients::ModelParams<f32>;
pub type Coefficients32 = coefficients::CoefficientSet<f32>;
