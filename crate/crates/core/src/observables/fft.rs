//! Dense `d`-dimensional complex FFTs on cubic grids, used for cluster
//! autocorrelations and for the triangle convolution.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Smallest `2^a 3^b 5^c` that is at least `min`.
pub fn fft_len(min: usize) -> usize {
    let mut best = usize::MAX;
    let mut p2 = 1usize;
    while p2 < 2 * min.max(1) {
        let mut p3 = p2;
        while p3 < 2 * min.max(1) {
            let mut p5 = p3;
            while p5 < 2 * min.max(1) {
                if p5 >= min && p5 < best {
                    best = p5;
                }
                p5 *= 5;
            }
            p3 *= 3;
        }
        p2 *= 2;
    }
    best
}

/// Forward and inverse plans for an `L^d` grid, plus line scratch.
pub struct GridFft {
    d: usize,
    len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    line: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl GridFft {
    pub fn new(d: usize, len: usize) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(len);
        let inverse = planner.plan_fft_inverse(len);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        GridFft {
            d,
            len,
            forward,
            inverse,
            line: vec![Complex64::default(); len],
            scratch: vec![Complex64::default(); scratch_len],
        }
    }

    pub fn volume(&self) -> usize {
        self.len.pow(self.d as u32)
    }

    pub fn forward(&mut self, grid: &mut [Complex64]) {
        let plan = Arc::clone(&self.forward);
        self.transform(grid, plan.as_ref());
    }

    /// Unnormalized inverse; divide by [`volume`](Self::volume).
    pub fn inverse(&mut self, grid: &mut [Complex64]) {
        let plan = Arc::clone(&self.inverse);
        self.transform(grid, plan.as_ref());
    }

    fn transform(&mut self, grid: &mut [Complex64], plan: &dyn Fft<f64>) {
        let l = self.len;
        debug_assert_eq!(grid.len(), self.volume());
        // Innermost axis is contiguous.
        plan.process_with_scratch(grid, &mut self.scratch);
        for axis in 1..self.d {
            let stride = l.pow(axis as u32);
            let block = stride * l;
            for base in (0..grid.len()).step_by(block) {
                for offset in 0..stride {
                    let start = base + offset;
                    for (i, c) in self.line.iter_mut().enumerate() {
                        *c = grid[start + i * stride];
                    }
                    plan.process_with_scratch(&mut self.line, &mut self.scratch);
                    for (i, c) in self.line.iter().enumerate() {
                        grid[start + i * stride] = *c;
                    }
                }
            }
        }
    }
}
