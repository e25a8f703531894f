//! Window-restricted triangle diagram.

use rustfft::num_complex::Complex64;

use super::fft::{fft_len, GridFft};
use super::TwoPointTable;
use crate::error::{Error, Result};
use crate::lattice::MAX_DIM;

/// How the inner convolution is evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum TriangleMethod {
    /// Direct for small windows, FFT otherwise.
    #[default]
    Auto,
    Direct,
    Fft,
}

/// Windows with at most this many points use direct summation under `Auto`.
const DIRECT_MAX_POINTS: usize = 1024;

/// Plug-in estimate `sum_{x, y} tau(x) tau(y - x) tau(y)` over the window.
pub fn triangle_estimate(table: &TwoPointTable) -> f64 {
    triangle_sum(table, table, table, TriangleMethod::Auto).expect("identical tables are compatible")
}

/// `sum_{x, y} t1(x) t2(y - x) t3(y)` with `x, y, y - x` all in `[-m, m]^d`.
///
/// Feeding tables from three disjoint replica ranges gives an unbiased estimate.
pub fn triangle_sum(
    t1: &TwoPointTable,
    t2: &TwoPointTable,
    t3: &TwoPointTable,
    method: TriangleMethod,
) -> Result<f64> {
    let (d, m) = (t1.dim(), t1.inner_radius());
    for t in [t2, t3] {
        if t.dim() != d || t.inner_radius() != m {
            return Err(Error::param("tables", "window shapes differ"));
        }
    }
    let side = 2 * m as usize + 1;
    let points = side.pow(d as u32);
    let method = match method {
        TriangleMethod::Auto if points <= DIRECT_MAX_POINTS => TriangleMethod::Direct,
        TriangleMethod::Auto => TriangleMethod::Fft,
        other => other,
    };
    let (a, b, c) = (dense(t1), dense(t2), dense(t3));
    Ok(match method {
        TriangleMethod::Direct => direct(d, m as i64, &a, &b, &c),
        _ => by_fft(d, m as usize, &a, &b, &c),
    })
}

/// Row-major values over `[-m, m]^d`.
fn dense(table: &TwoPointTable) -> Vec<f64> {
    let d = table.dim();
    let m = table.inner_radius() as i64;
    let side = (2 * m + 1) as usize;
    let grid = table.grid();
    let values = table.values();
    let mut out = Vec::with_capacity(side.pow(d as u32));
    let mut v = [0i64; MAX_DIM];
    for lin in 0..side.pow(d as u32) {
        let mut rest = lin;
        for j in (0..d).rev() {
            v[j] = (rest % side) as i64 - m;
            rest /= side;
        }
        out.push(values[grid.index_unchecked(&v)]);
    }
    out
}

fn direct(d: usize, m: i64, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let side = 2 * m + 1;
    let coords = |lin: usize| {
        let mut v = [0i64; MAX_DIM];
        let mut rest = lin as i64;
        for j in (0..d).rev() {
            v[j] = rest % side - m;
            rest /= side;
        }
        v
    };
    let mut total = 0.0;
    for (y, &cy) in c.iter().enumerate() {
        if cy == 0.0 {
            continue;
        }
        let vy = coords(y);
        let mut conv = 0.0;
        for (x, &ax) in a.iter().enumerate() {
            if ax == 0.0 {
                continue;
            }
            let vx = coords(x);
            let mut lin = 0i64;
            let mut inside = true;
            for j in 0..d {
                let w = vy[j] - vx[j];
                if w.abs() > m {
                    inside = false;
                    break;
                }
                lin = lin * side + w + m;
            }
            if inside {
                conv += ax * b[lin as usize];
            }
        }
        total += conv * cy;
    }
    total
}

fn by_fft(d: usize, m: usize, a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    let side = 2 * m + 1;
    // The convolution lives on [-2m, 2m]; reading it on [-m, m] needs no aliasing.
    let l = fft_len(3 * m + 1);
    let mut plan = GridFft::new(d, l);
    let vol = plan.volume();
    let embed = |src: &[f64]| {
        let mut buf = vec![Complex64::default(); vol];
        for (lin, &val) in src.iter().enumerate() {
            buf[wrap(d, m, side, l, lin)] = Complex64::new(val, 0.0);
        }
        buf
    };
    let mut fa = embed(a);
    let mut fb = embed(b);
    plan.forward(&mut fa);
    plan.forward(&mut fb);
    for (x, y) in fa.iter_mut().zip(&fb) {
        *x *= y;
    }
    plan.inverse(&mut fa);
    let scale = vol as f64;
    c.iter()
        .enumerate()
        .map(|(lin, &cy)| cy * fa[wrap(d, m, side, l, lin)].re / scale)
        .sum()
}

/// Position of window point `lin` on the periodic `l^d` grid.
fn wrap(d: usize, m: usize, side: usize, l: usize, lin: usize) -> usize {
    let mut rest = lin;
    let mut idx = [0usize; MAX_DIM];
    for j in (0..d).rev() {
        let c = (rest % side) as i64 - m as i64;
        idx[j] = c.rem_euclid(l as i64) as usize;
        rest /= side;
    }
    idx[..d].iter().fold(0, |acc, &i| acc * l + i)
}
