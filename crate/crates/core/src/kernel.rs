//! The translation-invariant power-law kernel and the edge law built on it.
//!
//! `J(x, y) = A * |x - y|^(-d - alpha)` for `x != y` with `|.|` the sup norm, and
//! `{x, y}` is open with probability `1 - exp(-beta * J(x, y))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;

/// Below this value of `beta * J` the edge probability is taken to first order.
pub const FIRST_ORDER_CUTOFF: f64 = 1e-12;

/// Model parameters. Serialized as the `kernel` block of run manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec<T> {
    pub d: usize,
    pub alpha: T,
    pub amplitude: T,
    /// Maximum sup-norm edge length; longer edges are never open.
    pub truncation: Option<u64>,
}

impl<T: Real> KernelSpec<T> {
    pub fn new(d: usize, alpha: T, amplitude: T, truncation: Option<u64>) -> Result<Self> {
        let spec = KernelSpec {
            d,
            alpha,
            amplitude,
            truncation,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=3).contains(&self.d) {
            return Err(Error::param("d", format!("must be 1, 2 or 3, got {}", self.d)));
        }
        if !(self.alpha > T::zero()) || !self.alpha.is_finite() {
            return Err(Error::param("alpha", format!("must be positive, got {}", self.alpha)));
        }
        if !(self.amplitude > T::zero()) || !self.amplitude.is_finite() {
            return Err(Error::param(
                "amplitude",
                format!("must be positive, got {}", self.amplitude),
            ));
        }
        if self.truncation == Some(0) {
            return Err(Error::param("truncation", "must be at least 1"));
        }
        Ok(())
    }

    /// `J` at sup-norm distance `r >= 1`.
    #[inline]
    pub fn kernel_at(&self, r: u64) -> T {
        if r == 0 {
            return T::zero();
        }
        let exponent = -(T::int(self.d as u64) + self.alpha);
        self.amplitude * T::int(r).powf(exponent)
    }

    /// Whether an edge of sup-norm length `r` survives the truncation.
    #[inline]
    pub fn admits_length(&self, r: u64) -> bool {
        self.truncation.is_none_or(|max| r <= max)
    }

    /// Edge probability at sup-norm distance `r`, truncation applied.
    pub fn probability_at(&self, beta: T, r: u64) -> Result<T> {
        check_beta(beta)?;
        if r == 0 || !self.admits_length(r) {
            return Ok(T::zero());
        }
        Ok(open_probability(beta * self.kernel_at(r)))
    }

    /// Lossless for `f64`, rounding for `f32`.
    pub fn to_f64(&self) -> KernelSpec<f64> {
        KernelSpec {
            d: self.d,
            alpha: self.alpha.to_f64_lossy(),
            amplitude: self.amplitude.to_f64_lossy(),
            truncation: self.truncation,
        }
    }
}

fn check_beta<T: Real>(beta: T) -> Result<()> {
    if beta < T::zero() || beta.is_nan() {
        return Err(Error::param("beta", format!("must be nonnegative, got {beta}")));
    }
    Ok(())
}

/// `1 - exp(-w)` for a bond weight `w = beta * J >= 0`.
#[inline]
pub fn open_probability<T: Real>(weight: T) -> T {
    if weight < T::lit(FIRST_ORDER_CUTOFF) {
        weight
    } else {
        -(-weight).exp_m1()
    }
}

/// Sup norm of a lattice vector.
#[inline]
pub fn sup_norm(x: &[i64]) -> u64 {
    x.iter().map(|c| c.unsigned_abs()).max().unwrap_or(0)
}

#[inline]
fn sup_distance(x: &[i64], y: &[i64]) -> u64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b).unsigned_abs())
        .max()
        .unwrap_or(0)
}

/// `<x> = max{2, |x|}`.
pub fn smoothed_norm<T: Real>(x: &[i64]) -> T {
    T::int(sup_norm(x).max(2))
}

/// `J(x, y)`; zero on the diagonal.
pub fn kernel_value<T: Real>(spec: &KernelSpec<T>, x: &[i64], y: &[i64]) -> T {
    spec.kernel_at(sup_distance(x, y))
}

/// Probability that `{x, y}` is open at inverse temperature `beta`.
pub fn edge_probability<T: Real>(spec: &KernelSpec<T>, beta: T, x: &[i64], y: &[i64]) -> Result<T> {
    spec.probability_at(beta, sup_distance(x, y))
}
