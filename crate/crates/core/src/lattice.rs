//! Finite boxes `[-n, n]^d` and the canonical displacement grid over them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// A lattice point; coordinates beyond the dimension are zero.
pub type Site = [i64; MAX_DIM];

/// The box `[-n, n]^d` with row-major vertex indexing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BoxLattice {
    d: usize,
    radius: u64,
}

impl BoxLattice {
    pub fn new(d: usize, radius: u64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&d) {
            return Err(Error::param("d", format!("must be 1, 2 or 3, got {d}")));
        }
        if radius == 0 {
            return Err(Error::param("n", "box radius must be at least 1"));
        }
        let side = 2 * radius as u128 + 1;
        if side.pow(d as u32) > u32::MAX as u128 {
            return Err(Error::param("n", format!("box [-{radius},{radius}]^{d} is too large")));
        }
        Ok(BoxLattice { d, radius })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn radius(&self) -> u64 {
        self.radius
    }

    #[inline]
    pub fn side(&self) -> u64 {
        2 * self.radius + 1
    }

    #[inline]
    pub fn vertex_count(&self) -> usize {
        (self.side() as usize).pow(self.d as u32)
    }

    #[inline]
    pub fn contains(&self, x: &[i64]) -> bool {
        let r = self.radius as i64;
        x[..self.d].iter().all(|&c| -r <= c && c <= r)
    }

    #[inline]
    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        if x.len() < self.d || !self.contains(x) {
            return None;
        }
        Some(self.index_unchecked(x))
    }

    #[inline]
    pub(crate) fn index_unchecked(&self, x: &[i64]) -> usize {
        let side = self.side() as usize;
        let r = self.radius as i64;
        x[..self.d]
            .iter()
            .fold(0usize, |acc, &c| acc * side + (c + r) as usize)
    }

    /// Inverse of [`index_of`](Self::index_of). Panics when out of range.
    #[inline]
    pub fn site(&self, mut index: usize) -> Site {
        assert!(index < self.vertex_count(), "vertex index out of range");
        let side = self.side() as usize;
        let r = self.radius as i64;
        let mut out = [0i64; MAX_DIM];
        for j in (0..self.d).rev() {
            out[j] = (index % side) as i64 - r;
            index /= side;
        }
        out
    }

    pub fn origin(&self) -> usize {
        (self.vertex_count() - 1) / 2
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.vertex_count()).map(move |i| self.site(i))
    }
}

/// First nonzero coordinate positive: the representative of `{v, -v}`.
#[inline]
pub fn is_lex_positive(v: &[i64]) -> bool {
    v.iter().find(|&&c| c != 0).is_some_and(|&c| c > 0)
}

/// Displacements in `[-m, m]^d`, stored once per `{v, -v}` pair.
///
/// Canonical index 0 is the origin; indices `1..` enumerate the lexicographically
/// positive vectors in row-major order. This is the layout of every two-point table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DisplacementGrid {
    d: usize,
    m: u64,
}

impl DisplacementGrid {
    pub fn new(d: usize, m: u64) -> Result<Self> {
        BoxLattice::new(d, m).map(|_| DisplacementGrid { d, m })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn radius(&self) -> u64 {
        self.m
    }

    #[inline]
    fn side(&self) -> usize {
        2 * self.m as usize + 1
    }

    #[inline]
    fn center(&self) -> usize {
        (self.side().pow(self.d as u32) - 1) / 2
    }

    /// Number of canonical displacements, origin included.
    #[inline]
    pub fn len(&self) -> usize {
        self.center() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Canonical index of `v` or `-v`; `None` outside `[-m, m]^d`.
    #[inline]
    pub fn index_of(&self, v: &[i64]) -> Option<usize> {
        let m = self.m as i64;
        if v[..self.d].iter().any(|&c| c < -m || c > m) {
            return None;
        }
        Some(self.index_unchecked(v))
    }

    #[inline]
    pub(crate) fn index_unchecked(&self, v: &[i64]) -> usize {
        let side = self.side();
        let m = self.m as i64;
        let lin = v[..self.d]
            .iter()
            .fold(0usize, |acc, &c| acc * side + (c + m) as usize);
        lin.abs_diff(self.center())
    }

    /// The lexicographically positive representative at canonical index `k`.
    #[inline]
    pub fn displacement(&self, k: usize) -> Site {
        assert!(k < self.len(), "canonical index out of range");
        let side = self.side();
        let m = self.m as i64;
        let mut lin = self.center() + k;
        let mut out = [0i64; MAX_DIM];
        for j in (0..self.d).rev() {
            out[j] = (lin % side) as i64 - m;
            lin /= side;
        }
        out
    }

    /// Sup norm of the displacement at canonical index `k`.
    #[inline]
    pub fn shell_of(&self, k: usize) -> u64 {
        crate::kernel::sup_norm(&self.displacement(k)[..self.d])
    }

    /// Unordered pairs `{u, u + v}` with both ends in `[-m, m]^d`.
    #[inline]
    pub fn pair_count(&self, v: &[i64]) -> u64 {
        let side = self.side() as u64;
        v[..self.d]
            .iter()
            .map(|c| side.saturating_sub(c.unsigned_abs()))
            .product()
    }

    /// Points of the full grid with sup norm exactly `r` (both signs).
    pub fn shell_size(&self, r: u64) -> u64 {
        let d = self.d as u32;
        if r == 0 {
            1
        } else {
            (2 * r + 1).pow(d) - (2 * r - 1).pow(d)
        }
    }
}
