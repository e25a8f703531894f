//! Deterministic sums behind two of the convolution estimates, evaluated by
//! brute force with no analytic shortcuts.
//!
//! Boxes are `Lambda_k = [-2^k, 2^k]^d` and `<x> = max(2, |x|)` in the sup norm.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{smoothed_norm, sup_norm};
use crate::lattice::{BoxLattice, MAX_DIM};
use crate::num::Real;

/// Radii `R` of the convolution grid.
pub const CONVOLUTION_RADII: [u64; 3] = [4, 8, 16];
/// Multiples `|x| / R` of the convolution grid.
pub const CONVOLUTION_MULTIPLES: [u64; 3] = [4, 8, 16];

/// Largest `|Lambda_{k-3}|` that [`box_exit_fraction`] will enumerate.
pub const MAX_CENTRES: u64 = 1 << 22;

/// What a check row evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum CheckParams<T> {
    /// Threshold convolution sum at radius `R` and endpoint `x`.
    Convolution { alpha: T, radius: T, x: Vec<i64> },
    /// Box-exit constant at scale `k`, with the maximizing pair.
    BoxExit { k: u32, u: Vec<i64>, v: Vec<i64> },
}

/// One evaluated point with its value normalized by the predicted shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvolutionCheckResult<T> {
    pub d: usize,
    pub params: CheckParams<T>,
    /// The sum, or the exit fraction of the maximizing pair.
    pub value: T,
    /// `sum * R^(2 alpha) * <x>^(d + alpha)`, or the constant `C'_k`.
    pub ratio: T,
}

fn check_dim(d: usize, x: &[i64], name: &'static str) -> Result<()> {
    if !(1..=MAX_DIM).contains(&d) {
        return Err(Error::param("d", format!("must be 1, 2 or 3, got {d}")));
    }
    if x.len() != d {
        return Err(Error::param(name, format!("expected {d} coordinates, got {}", x.len())));
    }
    Ok(())
}

/// `sum_{|a| <= |x|/4} sum_{|b - x| <= |x|/4} <a>^-s <a - b>^-s <b - x>^-s
/// min(1, <a>/R) min(1, <x - b>/R)` with `s = d + alpha`.
///
/// Requires `0 < alpha < 1`, `R >= 1` and `|x| >= R`.
pub fn threshold_convolution_sum<T: Real>(d: usize, alpha: T, radius: T, x: &[i64]) -> Result<T> {
    check_dim(d, x, "x")?;
    if !(alpha > T::zero() && alpha < T::one()) {
        return Err(Error::param("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    if !(radius >= T::one()) || !radius.is_finite() {
        return Err(Error::param("R", format!("must be at least 1, got {radius}")));
    }
    let norm = sup_norm(x);
    if T::int(norm) < radius {
        return Err(Error::param("x", format!("need |x| >= R, got |x| = {norm}")));
    }
    let q = norm / 4;
    let s = T::int(d as u64) + alpha;
    // <y>^-s for every sup norm that can occur.
    let max_norm = (norm + 2 * q) as usize;
    let power: Vec<T> = (0..=max_norm).map(|r| T::int(r.max(2) as u64).powf(-s)).collect();
    let cut: Vec<T> = (0..=q as usize)
        .map(|r| T::one().min(T::int(r.max(2) as u64) / radius))
        .collect();
    let ball = BoxLattice::new(d, q.max(1))?;
    let offsets: Vec<[i64; MAX_DIM]> = ball
        .sites()
        .filter(|o| sup_norm(&o[..d]) <= q)
        .collect();

    let mut total = T::zero();
    for a in &offsets {
        let na = sup_norm(&a[..d]) as usize;
        let fa = power[na] * cut[na];
        let mut inner = T::zero();
        for c in &offsets {
            // b = x + c
            let mut diff = [0i64; MAX_DIM];
            for j in 0..d {
                diff[j] = a[j] - x[j] - c[j];
            }
            let nc = sup_norm(&c[..d]) as usize;
            inner = inner + power[sup_norm(&diff[..d]) as usize] * power[nc] * cut[nc];
        }
        total = total + fa * inner;
    }
    Ok(total)
}

/// `sum * R^(2 alpha) * <x>^(d + alpha)`.
pub fn normalized_convolution<T: Real>(sum: T, d: usize, alpha: T, radius: T, x: &[i64]) -> T {
    let s = T::int(d as u64) + alpha;
    sum * radius.powf(T::lit(2.0) * alpha) * smoothed_norm::<T>(x).powf(s)
}

/// The sum over `R in {4, 8, 16}` and `x = (t R, 0, ...)` for `t in {4, 8, 16}`.
pub fn convolution_grid<T: Real>(d: usize, alpha: T) -> Result<Vec<ConvolutionCheckResult<T>>> {
    let mut rows = Vec::new();
    for r in CONVOLUTION_RADII {
        for t in CONVOLUTION_MULTIPLES {
            let mut x = vec![0i64; d];
            x[0] = (t * r) as i64;
            let radius = T::int(r);
            let value = threshold_convolution_sum(d, alpha, radius, &x)?;
            rows.push(ConvolutionCheckResult {
                d,
                ratio: normalized_convolution(value, d, alpha, radius, &x),
                params: CheckParams::Convolution { alpha, radius, x },
                value,
            });
        }
    }
    Ok(rows)
}

fn scale(k: u32) -> i64 {
    1i64 << k
}

/// Fraction of centres `z in Lambda_{k-3}` whose box `z + Lambda_{k-2}` contains
/// `u` but not `v`, by enumeration.
pub fn box_exit_fraction(d: usize, k: u32, u: &[i64], v: &[i64]) -> Result<Ratio<u64>> {
    check_dim(d, u, "u")?;
    check_dim(d, v, "v")?;
    if !(3..=40).contains(&k) {
        return Err(Error::param("k", format!("must be at least 3, got {k}")));
    }
    let centres = BoxLattice::new(d, scale(k - 3) as u64)?;
    if centres.vertex_count() as u64 > MAX_CENTRES {
        return Err(Error::param("k", format!("Lambda_(k-3) too large to enumerate for d = {d}, k = {k}")));
    }
    let half = scale(k - 2);
    let inside = |z: &[i64], p: &[i64]| z.iter().zip(p).all(|(a, b)| (a - b).abs() <= half);
    let hits = centres
        .sites()
        .filter(|z| inside(&z[..d], u) && !inside(&z[..d], v))
        .count() as u64;
    Ok(Ratio::new(hits, centres.vertex_count() as u64))
}

fn ratio_to<T: Real>(r: Ratio<u64>) -> T {
    T::int(*r.numer()) / T::int(*r.denom())
}

/// `C'_k = max fraction * 2^k / <u - v>` over `u in Lambda_{k-2}`, `v in Lambda_k`,
/// `u != v`, with the maximizing pair. Enumerates `|Lambda_{k-2}| * |Lambda_k|` pairs.
pub fn box_exit_constant<T: Real>(d: usize, k: u32) -> Result<ConvolutionCheckResult<T>> {
    if k < 3 {
        return Err(Error::param("k", format!("must be at least 3, got {k}")));
    }
    let us = BoxLattice::new(d, scale(k - 2) as u64)?;
    let vs = BoxLattice::new(d, scale(k) as u64)?;
    let mut best: Option<(T, T, Vec<i64>, Vec<i64>)> = None;
    for u in us.sites() {
        for v in vs.sites() {
            if u == v {
                continue;
            }
            let frac = box_exit_fraction(d, k, &u[..d], &v[..d])?;
            let mut diff = [0i64; MAX_DIM];
            for j in 0..d {
                diff[j] = u[j] - v[j];
            }
            let value: T = ratio_to(frac);
            let c = value * T::int(scale(k) as u64) / smoothed_norm::<T>(&diff[..d]);
            if best.as_ref().is_none_or(|b| c > b.1) {
                best = Some((value, c, u[..d].to_vec(), v[..d].to_vec()));
            }
        }
    }
    let (value, ratio, u, v) = best.expect("boxes hold at least two points");
    Ok(ConvolutionCheckResult {
        d,
        params: CheckParams::BoxExit { k, u, v },
        value,
        ratio,
    })
}

/// `C'_k` for each `k` in `ks`.
pub fn box_exit_grid<T: Real>(d: usize, ks: impl IntoIterator<Item = u32>) -> Result<Vec<ConvolutionCheckResult<T>>> {
    ks.into_iter().map(|k| box_exit_constant(d, k)).collect()
}
