//! Monte Carlo laboratory for long-range percolation on finite boxes of `Z^d`.
//!
//! Each unordered pair `{x, y}` of a box `[-n, n]^d` is open independently with
//! probability `1 - exp(-beta * J(x, y))`, where `J(x, y) = A * |x - y|^(-d - alpha)`
//! in the sup norm. The crate samples such configurations, estimates the two-point
//! function, susceptibility, correlation length, triangle diagram and cluster-size
//! tail, locates the critical point by a slope criterion and fits the resulting
//! scaling laws. The [`analytic`] module evaluates two deterministic convolution
//! bounds by brute-force summation.
//!
//! Deterministic math (kernel, fits, analytic sums) is generic over the scalar type
//! through [`Real`]; the Monte Carlo pipeline runs in `f64`. Concrete aliases for the
//! common instantiations live at the crate root.

pub mod analytic;
pub mod clusters;
pub mod critical;
pub mod error;
pub mod io;
pub mod kernel;
pub mod lattice;
pub mod num;
pub mod observables;
pub mod rng;
pub mod sampler;
pub mod scaling;

pub use crate::error::{Error, Result};
pub use crate::num::Real;

/// Kernel parameters in double precision; the type the sampler consumes.
pub type Kernel = kernel::KernelSpec<f64>;
/// Kernel parameters in single precision.
pub type KernelF32 = kernel::KernelSpec<f32>;
/// Power-law fit in double precision.
pub type Fit = scaling::FitResult<f64>;
/// Power-law fit in single precision.
pub type FitF32 = scaling::FitResult<f32>;
/// Fit input point `(x, y, y_stderr)` in double precision.
pub type FitPoint = scaling::FitPoint<f64>;
/// Analytic check row in double precision.
pub type ConvolutionCheck = analytic::ConvolutionCheckResult<f64>;
