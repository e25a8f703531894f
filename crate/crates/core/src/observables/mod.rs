//! Estimators for the two-point function, susceptibility, correlation length,
//! triangle diagram and cluster-size tail.
//!
//! All Monte Carlo accumulation is in exact integer counts, so tables are
//! bit-identical regardless of how replicas were distributed over threads.
//! Standard errors of derived quantities come from replica batch means.

mod ensemble;
pub(crate) mod fft;
mod triangle;

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::lattice::{DisplacementGrid, Site};

pub use ensemble::{
    cluster_tail, dyadic_thresholds, restricted_two_point, run_ensemble, two_point_estimate,
    EnsembleRequest, EnsembleSummary, Estimate, DEFAULT_BATCHES,
};
pub use triangle::{triangle_estimate, triangle_sum, TriangleMethod};

/// Replica-batch partial sums kept for bootstrap resampling.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchPartial {
    pub replicas: u64,
    /// Connected-pair counts per canonical displacement, summed over the batch.
    pub hits: Vec<u64>,
}

/// `tau(x)` estimates over the canonical displacements of `[-m, m]^d`.
#[derive(Clone, Debug, PartialEq)]
pub struct TwoPointTable {
    grid: DisplacementGrid,
    box_radius: u64,
    replicas: u64,
    tau: Vec<f64>,
    stderr: Vec<f64>,
    pairs: Vec<u64>,
    batches: Vec<BatchPartial>,
}

impl TwoPointTable {
    /// Table with prescribed values; `tau(0)` is forced to 1. Used for synthetic data.
    pub fn from_fn(d: usize, m: u64, mut f: impl FnMut(&[i64]) -> f64) -> Result<Self> {
        let grid = DisplacementGrid::new(d, m)?;
        let mut tau = Vec::with_capacity(grid.len());
        let mut pairs = Vec::with_capacity(grid.len());
        for k in 0..grid.len() {
            let v = grid.displacement(k);
            tau.push(if k == 0 { 1.0 } else { f(&v[..d]) });
            pairs.push(grid.pair_count(&v));
        }
        Ok(TwoPointTable {
            grid,
            box_radius: m,
            replicas: 0,
            stderr: vec![0.0; tau.len()],
            tau,
            pairs,
            batches: Vec::new(),
        })
    }

    /// Reassembles a table from stored columns in canonical order.
    pub fn from_parts(
        d: usize,
        m: u64,
        box_radius: u64,
        replicas: u64,
        tau: Vec<f64>,
        stderr: Vec<f64>,
    ) -> Result<Self> {
        let grid = DisplacementGrid::new(d, m)?;
        if tau.len() != grid.len() || stderr.len() != grid.len() {
            return Err(Error::Parse(format!(
                "expected {} canonical displacements, got {}",
                grid.len(),
                tau.len()
            )));
        }
        let pairs = (0..grid.len()).map(|k| grid.pair_count(&grid.displacement(k))).collect();
        Ok(TwoPointTable {
            grid,
            box_radius,
            replicas,
            tau,
            stderr,
            pairs,
            batches: Vec::new(),
        })
    }

    pub(crate) fn from_counts(
        grid: DisplacementGrid,
        box_radius: u64,
        replicas: u64,
        hits: &[u64],
        hits_sq: &[u128],
        batches: Vec<BatchPartial>,
    ) -> Self {
        let mut tau = Vec::with_capacity(grid.len());
        let mut stderr = Vec::with_capacity(grid.len());
        let mut pairs = Vec::with_capacity(grid.len());
        let r = replicas as u128;
        for k in 0..grid.len() {
            let p = grid.pair_count(&grid.displacement(k));
            pairs.push(p);
            if k == 0 {
                tau.push(1.0);
                stderr.push(0.0);
                continue;
            }
            let pf = p as f64;
            tau.push(hits[k] as f64 / (replicas as f64 * pf));
            // Sample variance of per-replica tau, from exact integer moments.
            let s1 = hits[k] as u128;
            let num = r * hits_sq[k] - s1 * s1;
            let se = if replicas > 1 {
                (num as f64 / (r * (r - 1)) as f64 / replicas as f64).sqrt() / pf
            } else {
                f64::NAN
            };
            stderr.push(se);
        }
        TwoPointTable {
            grid,
            box_radius,
            replicas,
            tau,
            stderr,
            pairs,
            batches,
        }
    }

    pub fn grid(&self) -> &DisplacementGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.grid.dim()
    }

    /// Window radius `m`.
    pub fn inner_radius(&self) -> u64 {
        self.grid.radius()
    }

    /// Radius `n` of the sampled box.
    pub fn box_radius(&self) -> u64 {
        self.box_radius
    }

    pub fn replicas(&self) -> u64 {
        self.replicas
    }

    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.tau
    }

    pub fn stderrs(&self) -> &[f64] {
        &self.stderr
    }

    /// Pairs per configuration at each canonical displacement.
    pub fn pair_counts(&self) -> &[u64] {
        &self.pairs
    }

    pub fn batches(&self) -> &[BatchPartial] {
        &self.batches
    }

    pub fn displacement(&self, k: usize) -> Site {
        self.grid.displacement(k)
    }

    /// `tau(x)` for any `x` in the window (either sign).
    pub fn tau(&self, x: &[i64]) -> Option<f64> {
        self.grid.index_of(x).map(|k| self.tau[k])
    }

    /// Per-batch tables, used for batch-means errors and bootstrap.
    fn batch_values(&self, b: &BatchPartial) -> Vec<f64> {
        let mut out: Vec<f64> = b
            .hits
            .iter()
            .zip(&self.pairs)
            .map(|(&h, &p)| h as f64 / (b.replicas as f64 * p as f64))
            .collect();
        out[0] = 1.0;
        out
    }

    /// Full-grid mass on each sup-norm shell `r = 0..=m` of a value array.
    fn shell_mass(&self, values: &[f64]) -> Vec<f64> {
        let m = self.inner_radius() as usize;
        let mut mass = vec![0.0; m + 1];
        mass[0] = values[0];
        for (k, &v) in values.iter().enumerate().skip(1) {
            mass[self.grid.shell_of(k) as usize] += 2.0 * v;
        }
        mass
    }

    /// `sum_{x in [-r, r]^d} tau(x)` for `r = 0..=m`.
    pub fn cumulative_mass(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.shell_mass(&self.tau)
            .into_iter()
            .map(|s| {
                acc += s;
                acc
            })
            .collect()
    }

    /// Shell averages of `tau` over `|x| = r`, with batch-means errors when available.
    pub fn shell_profile(&self) -> ShellProfile {
        let m = self.inner_radius();
        let sizes: Vec<u64> = (0..=m).map(|r| self.grid.shell_size(r)).collect();
        let to_means = |mass: Vec<f64>| -> Vec<f64> {
            mass.iter().zip(&sizes).map(|(s, &n)| s / n as f64).collect()
        };
        let mean = to_means(self.shell_mass(&self.tau));
        let batch_means: Vec<Vec<f64>> = self
            .batches
            .iter()
            .map(|b| to_means(self.shell_mass(&self.batch_values(b))))
            .collect();
        let batch_replicas: Vec<u64> = self.batches.iter().map(|b| b.replicas).collect();
        let stderr = if batch_means.len() >= 2 {
            (0..=m as usize)
                .map(|r| {
                    let col: Vec<f64> = batch_means.iter().map(|b| b[r]).collect();
                    batch_mean_stderr(&col, &batch_replicas)
                })
                .collect()
        } else {
            // Independent-displacement approximation.
            let mut var = vec![0.0; m as usize + 1];
            for (k, se) in self.stderr.iter().enumerate().skip(1) {
                let se = if se.is_finite() { *se } else { 0.0 };
                var[self.grid.shell_of(k) as usize] += 4.0 * se * se;
            }
            var.iter().zip(&sizes).map(|(v, &n)| v.sqrt() / n as f64).collect()
        };
        ShellProfile {
            d: self.dim(),
            m,
            mean,
            stderr,
            sizes,
            batch_means,
            batch_replicas,
        }
    }

    /// Batch-means standard error of the susceptibility estimate.
    pub fn susceptibility_stderr(&self) -> f64 {
        if self.batches.len() < 2 {
            return f64::NAN;
        }
        let per_batch: Vec<f64> = self
            .batches
            .iter()
            .map(|b| self.batch_values(b).iter().skip(1).map(|v| 2.0 * v).sum::<f64>() + 1.0)
            .collect();
        let reps: Vec<u64> = self.batches.iter().map(|b| b.replicas).collect();
        batch_mean_stderr(&per_batch, &reps)
    }

    /// The table rebuilt from a subset of its batches (with repetition); `None`
    /// when the table carries no batch partials.
    pub fn resample_batches(&self, picks: &[usize]) -> Option<TwoPointTable> {
        if self.batches.is_empty() {
            return None;
        }
        let mut hits = vec![0u64; self.len()];
        let mut reps = 0;
        for &i in picks {
            let b = &self.batches[i];
            reps += b.replicas;
            for (h, x) in hits.iter_mut().zip(&b.hits) {
                *h += x;
            }
        }
        let mut t = self.clone();
        t.replicas = reps;
        t.batches = Vec::new();
        for k in 1..t.len() {
            t.tau[k] = hits[k] as f64 / (reps as f64 * self.pairs[k] as f64);
        }
        Some(t)
    }
}

/// Replica-weighted mean's standard error from per-batch means.
pub(crate) fn batch_mean_stderr(values: &[f64], replicas: &[u64]) -> f64 {
    let b = values.len();
    if b < 2 {
        return f64::NAN;
    }
    let total: f64 = replicas.iter().map(|&r| r as f64).sum();
    let mean: f64 = values.iter().zip(replicas).map(|(v, &r)| v * r as f64).sum::<f64>() / total;
    let var: f64 = values
        .iter()
        .zip(replicas)
        .map(|(v, &r)| r as f64 * (v - mean) * (v - mean))
        .sum::<f64>()
        / total;
    (var / (b - 1) as f64).sqrt()
}

/// Shell-averaged two-point function.
#[derive(Clone, Debug, PartialEq)]
pub struct ShellProfile {
    pub d: usize,
    pub m: u64,
    /// Index `r = 0..=m`.
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Full-grid points on each shell.
    pub sizes: Vec<u64>,
    /// Per-batch shell means (possibly empty).
    pub batch_means: Vec<Vec<f64>>,
    pub batch_replicas: Vec<u64>,
}

impl ShellProfile {
    /// Profile without batch information, e.g. read back from CSV.
    pub fn from_values(d: usize, mean: Vec<f64>, stderr: Vec<f64>) -> Result<Self> {
        if mean.is_empty() || mean.len() != stderr.len() {
            return Err(Error::Parse("shell profile columns have mismatched lengths".into()));
        }
        let m = mean.len() as u64 - 1;
        let grid = DisplacementGrid::new(d, m.max(1))?;
        Ok(ShellProfile {
            d,
            m,
            sizes: (0..=m).map(|r| grid.shell_size(r)).collect(),
            mean,
            stderr,
            batch_means: Vec::new(),
            batch_replicas: Vec::new(),
        })
    }
}

/// `xi` estimate; saturates at the window radius.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CorrelationLength {
    Finite(u64),
    /// No radius within the window reached half the mass.
    AtLeast(u64),
}

impl CorrelationLength {
    pub fn finite(self) -> Option<u64> {
        match self {
            CorrelationLength::Finite(r) => Some(r),
            CorrelationLength::AtLeast(_) => None,
        }
    }
}

impl fmt::Display for CorrelationLength {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CorrelationLength::Finite(r) => write!(f, "{r}"),
            CorrelationLength::AtLeast(m) => write!(f, ">={m}"),
        }
    }
}

impl FromStr for CorrelationLength {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse(format!("bad correlation length `{s}`"));
        match s.strip_prefix(">=") {
            Some(rest) => rest.parse().map(CorrelationLength::AtLeast).map_err(|_| bad()),
            None => s.parse().map(CorrelationLength::Finite).map_err(|_| bad()),
        }
    }
}

/// `P(|K| >= t)` on a threshold grid, translation-averaged over the window.
#[derive(Clone, Debug, PartialEq)]
pub struct TailTable {
    pub thresholds: Vec<u64>,
    pub prob: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl TailTable {
    /// Drops thresholds above the largest observed cluster.
    pub fn trimmed(mut self, largest: u64) -> Self {
        let keep = self.thresholds.iter().take_while(|&&t| t <= largest.max(1)).count();
        self.thresholds.truncate(keep);
        self.prob.truncate(keep);
        self.stderr.truncate(keep);
        self
    }
}

/// All observables at one `(beta, n)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRecord {
    pub beta: f64,
    pub n: u64,
    pub m: u64,
    pub replicas: u64,
    pub seed: u64,
    pub chi: f64,
    pub chi_stderr: f64,
    pub xi: CorrelationLength,
    pub nabla: f64,
    /// `S(r)` for `r = 1..=m` (index `r - 1`).
    pub s_profile: Vec<f64>,
    pub shells: ShellProfile,
    pub tail: TailTable,
}

impl SweepRecord {
    pub fn from_summary(summary: &EnsembleSummary, seed: u64) -> Self {
        let table = &summary.table;
        let chi = susceptibility_estimate(table);
        SweepRecord {
            beta: summary.beta,
            n: table.box_radius(),
            m: table.inner_radius(),
            replicas: table.replicas(),
            seed,
            chi,
            chi_stderr: table.susceptibility_stderr(),
            xi: correlation_length_estimate(table, chi),
            nabla: triangle_estimate(table),
            s_profile: spatial_average_profile(table),
            shells: table.shell_profile(),
            tail: summary.tail.clone(),
        }
    }
}

/// `S(r) = r^-d * sum_{x in [-r, r]^d} tau(x)`.
pub fn spatial_average(table: &TwoPointTable, r: u64) -> Result<f64> {
    if r == 0 || r > table.inner_radius() {
        return Err(Error::param(
            "r",
            format!("must lie in 1..={}, got {r}", table.inner_radius()),
        ));
    }
    let mass = table.cumulative_mass()[r as usize];
    Ok(mass / (r as f64).powi(table.dim() as i32))
}

/// `S(r)` for every `r = 1..=m`.
pub fn spatial_average_profile(table: &TwoPointTable) -> Vec<f64> {
    let d = table.dim() as i32;
    table
        .cumulative_mass()
        .into_iter()
        .enumerate()
        .skip(1)
        .map(|(r, mass)| mass / (r as f64).powi(d))
        .collect()
}

/// Window proxy for `chi = sum_x tau(x)`.
pub fn susceptibility_estimate(table: &TwoPointTable) -> f64 {
    *table.cumulative_mass().last().expect("nonempty table")
}

/// Smallest `r >= 1` whose box mass reaches `chi / 2`.
pub fn correlation_length_estimate(table: &TwoPointTable, chi: f64) -> CorrelationLength {
    let mass = table.cumulative_mass();
    mass.iter()
        .enumerate()
        .skip(1)
        .find(|(_, &s)| s >= chi / 2.0)
        .map(|(r, _)| CorrelationLength::Finite(r as u64))
        .unwrap_or(CorrelationLength::AtLeast(table.inner_radius()))
}
