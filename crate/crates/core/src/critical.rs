//! Locating the critical point from the slope of the two-point function, and
//! parameter sweeps under common random numbers.
//!
//! At the critical point the shell-averaged two-point function decays like
//! `r^-(d - alpha)`. Subcritically it decays faster and supercritically it levels
//! off, so the fitted log-log slope over a fixed window brackets the critical point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::KernelSpec;
use crate::lattice::BoxLattice;
use crate::observables::{run_ensemble, EnsembleRequest, ShellProfile, SweepRecord, TwoPointTable, DEFAULT_BATCHES};
use crate::scaling::{bootstrap_indices, sample_sd, weighted_line, FitResult, BOOTSTRAP_REPS, Z95};

/// Bracket growth factor per auto-expansion step.
const EXPANSION_FACTOR: f64 = 2.0;
/// Replica multiplier for the single widening re-probe.
const WIDENING_FACTOR: u64 = 4;
const MAX_BISECTIONS: usize = 64;

/// Log-log slope of a shell profile over a radius window.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlopeStatistic {
    pub slope: f64,
    pub stderr: f64,
    pub intercept: f64,
    /// Error from propagating per-shell errors, ignoring correlations.
    pub delta_stderr: f64,
    /// Spread of the slope over a bootstrap of replica batches (or of shells).
    pub bootstrap_stderr: f64,
    pub window: (u64, u64),
    pub shells: usize,
    pub max_residual: f64,
}

impl SlopeStatistic {
    pub fn to_fit(&self) -> FitResult<f64> {
        let half = Z95 * self.stderr;
        FitResult {
            exponent: self.slope,
            intercept: self.intercept,
            stderr: self.stderr,
            ci: (self.slope - half, self.slope + half),
            window: (self.window.0 as f64, self.window.1 as f64),
            points: self.shells,
            max_residual: self.max_residual,
        }
    }
}

/// Default criterion window `[8, m/4]`.
pub fn default_window(m: u64) -> (u64, u64) {
    (8, m / 4)
}

/// Slope of `log tau` against `log r` for the table's shell averages.
pub fn slope_statistic(table: &TwoPointTable, window: (u64, u64)) -> Result<SlopeStatistic> {
    profile_slope(&table.shell_profile(), window)
}

/// Weighted least-squares slope of `log tau(r)` on `log r` for `r` in the window.
///
/// Shell weights are `1/r`, equal weight per logarithmic decade. The error is the
/// larger of the delta-method value and a bootstrap over replica batches, or over
/// shells when the profile has no batch information.
pub fn profile_slope(profile: &ShellProfile, window: (u64, u64)) -> Result<SlopeStatistic> {
    let (r_min, r_max) = window;
    if r_min < 2 || r_min >= r_max || r_max > profile.m {
        return Err(Error::param(
            "window",
            format!("need 2 <= r_min < r_max <= {}, got [{r_min}, {r_max}]", profile.m),
        ));
    }
    let radii: Vec<usize> = (r_min as usize..=r_max as usize).collect();
    if radii.len() < 3 {
        return Err(Error::InsufficientData(format!("{} shells in window, need 3", radii.len())));
    }
    if let Some(&r) = radii.iter().find(|&&r| !(profile.mean[r] > 0.0)) {
        return Err(Error::InsufficientData(format!("tau vanishes on shell {r}")));
    }
    let xs: Vec<f64> = radii.iter().map(|&r| (r as f64).ln()).collect();
    let ws: Vec<f64> = radii.iter().map(|&r| 1.0 / r as f64).collect();
    let fit = |means: &dyn Fn(usize) -> f64| -> Option<(f64, f64)> {
        let ys: Option<Vec<f64>> = radii
            .iter()
            .map(|&r| {
                let v = means(r);
                (v > 0.0).then(|| v.ln())
            })
            .collect();
        weighted_line(&xs, &ys?, &ws).map(|l| (l.slope, l.intercept))
    };
    let (slope, intercept) = fit(&|r| profile.mean[r])
        .ok_or_else(|| Error::InsufficientData("degenerate window".into()))?;

    let line = weighted_line(&xs, &xs, &ws).expect("distinct radii");
    let xbar = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / line.wsum;
    let delta_var: f64 = radii
        .iter()
        .zip(&xs)
        .zip(&ws)
        .map(|((&r, &x), &w)| {
            let c = w * (x - xbar) / line.sxx;
            let rel = profile.stderr[r] / profile.mean[r];
            if rel.is_finite() {
                c * c * rel * rel
            } else {
                0.0
            }
        })
        .sum();
    let delta_stderr = delta_var.sqrt();

    let mut slopes = Vec::with_capacity(BOOTSTRAP_REPS);
    let batches = profile.batch_means.len();
    if batches >= 2 {
        for rep in 0..BOOTSTRAP_REPS {
            let picks = bootstrap_indices(rep, batches);
            let total: f64 = picks.iter().map(|&b| profile.batch_replicas[b] as f64).sum();
            let mean = |r: usize| {
                picks
                    .iter()
                    .map(|&b| profile.batch_replicas[b] as f64 * profile.batch_means[b][r])
                    .sum::<f64>()
                    / total
            };
            if let Some((s, _)) = fit(&mean) {
                slopes.push(s);
            }
        }
    } else {
        let ys: Vec<f64> = radii.iter().map(|&r| profile.mean[r].ln()).collect();
        for rep in 0..BOOTSTRAP_REPS {
            let idx = bootstrap_indices(rep, radii.len());
            let bx: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
            let by: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
            let bw: Vec<f64> = idx.iter().map(|&i| ws[i]).collect();
            if let Some(l) = weighted_line(&bx, &by, &bw) {
                slopes.push(l.slope);
            }
        }
    }
    let bootstrap_stderr = sample_sd(&slopes);
    let stderr = if bootstrap_stderr.is_finite() {
        delta_stderr.max(bootstrap_stderr)
    } else {
        delta_stderr
    };
    let max_residual = radii
        .iter()
        .zip(&xs)
        .map(|(&r, &x)| (profile.mean[r].ln() - intercept - slope * x).abs())
        .fold(0.0, f64::max);
    Ok(SlopeStatistic {
        slope,
        stderr,
        intercept,
        delta_stderr,
        bootstrap_stderr,
        window,
        shells: radii.len(),
        max_residual,
    })
}

/// Classification of a probe against the critical slope.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    /// Steeper than the critical slope by more than one standard error.
    Subcritical,
    /// Shallower than the critical slope by more than one standard error.
    Supercritical,
    Indistinct,
}

/// One evaluation of the slope statistic during the search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Probe {
    pub beta: f64,
    pub replicas: u64,
    /// `None` when the two-point function vanished inside the window.
    pub slope: Option<f64>,
    pub stderr: Option<f64>,
    pub verdict: Verdict,
}

/// Result of [`find_beta_c`]; `ci` is the final certified bracket.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalEstimate {
    pub beta_c_hat: f64,
    pub ci: (f64, f64),
    pub d: usize,
    pub alpha: f64,
    pub n: u64,
    pub m: u64,
    pub window: (u64, u64),
    pub replicas: u64,
    pub seed: u64,
    pub probes: Vec<Probe>,
}

/// Inputs of [`find_beta_c`].
#[derive(Clone, Debug)]
pub struct CriticalSearch {
    pub spec: KernelSpec<f64>,
    pub n: u64,
    pub m: u64,
    pub window: (u64, u64),
    pub replicas: u64,
    /// Stop once `hi - lo <= tolerance * beta_c_hat`.
    pub tolerance: f64,
    pub seed: u64,
    /// Starting bracket; defaults to [`default_bracket`].
    pub bracket: Option<(f64, f64)>,
    pub max_expansions: usize,
    pub batches: usize,
}

impl CriticalSearch {
    pub fn new(spec: KernelSpec<f64>, n: u64, replicas: u64, seed: u64) -> Self {
        let m = n / 2;
        CriticalSearch {
            spec,
            n,
            m,
            window: default_window(m),
            replicas,
            tolerance: 0.01,
            seed,
            bracket: None,
            max_expansions: 8,
            batches: DEFAULT_BATCHES,
        }
    }

    pub fn target_slope(&self) -> f64 {
        -(self.spec.d as f64 - self.spec.alpha)
    }

    /// Runs the ensemble at `beta` and classifies its slope.
    pub fn probe(&self, beta: f64, replicas: u64) -> Result<Probe> {
        let lattice = BoxLattice::new(self.spec.d, self.n)?;
        let mut req = EnsembleRequest::new(&self.spec, beta, lattice, self.m, replicas, self.seed);
        req.batches = self.batches;
        let summary = run_ensemble(&req)?;
        let target = self.target_slope();
        Ok(match slope_statistic(&summary.table, self.window) {
            Ok(s) => Probe {
                beta,
                replicas,
                slope: Some(s.slope),
                stderr: Some(s.stderr),
                verdict: if s.slope < target - s.stderr {
                    Verdict::Subcritical
                } else if s.slope > target + s.stderr {
                    Verdict::Supercritical
                } else {
                    Verdict::Indistinct
                },
            },
            // No connections reach the window: as subcritical as it gets.
            Err(Error::InsufficientData(_)) => Probe {
                beta,
                replicas,
                slope: None,
                stderr: None,
                verdict: Verdict::Subcritical,
            },
            Err(e) => return Err(e),
        })
    }

    fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.m == 0 || self.m > self.n {
            return Err(Error::param("inner_radius", format!("must lie in 1..={}", self.n)));
        }
        let (r_min, r_max) = self.window;
        if r_min < 2 || r_min >= r_max || r_max > self.m || r_max - r_min < 2 {
            return Err(Error::param(
                "window",
                format!("need 2 <= r_min, r_min + 2 <= r_max <= {}", self.m),
            ));
        }
        if self.replicas < 2 {
            return Err(Error::param("replicas", "need at least 2"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::param("tolerance", "must be positive"));
        }
        if let Some((lo, hi)) = self.bracket {
            if !(lo > 0.0 && lo < hi && hi.is_finite()) {
                return Err(Error::param("bracket", "need 0 < lo < hi"));
            }
        }
        Ok(())
    }
}

/// Mean number of open edges at the origin of `Z^d`, summed out to radius `radius`.
pub fn mean_degree(spec: &KernelSpec<f64>, beta: f64, radius: u64) -> Result<f64> {
    let d = spec.d as i32;
    let mut total = 0.0;
    for r in 1..=radius {
        let shell = (2.0 * r as f64 + 1.0).powi(d) - (2.0 * r as f64 - 1.0).powi(d);
        total += shell * spec.probability_at(beta, r)?;
    }
    Ok(total)
}

/// `(b, 4b)` where `b` gives mean degree one: a branching lower bound for the
/// critical point, so the low end is subcritical in practice.
pub fn default_bracket(spec: &KernelSpec<f64>, n: u64) -> Result<(f64, f64)> {
    let radius = 2 * n;
    let (mut lo, mut hi) = (1e-9_f64, 1e9_f64);
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if mean_degree(spec, mid, radius)? < 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    Ok((hi, 4.0 * hi))
}

/// Slope-interpolated crossing of the target between two certified probes.
fn interpolate(lo: &Probe, hi: &Probe, target: f64) -> f64 {
    match (lo.slope, hi.slope) {
        (Some(a), Some(b)) if b > a => {
            let t = ((target - a) / (b - a)).clamp(0.0, 1.0);
            lo.beta + t * (hi.beta - lo.beta)
        }
        _ => 0.5 * (lo.beta + hi.beta),
    }
}

/// Bisection for the critical point under common random numbers.
///
/// The starting bracket is certified first, expanding each end geometrically when
/// its probe does not land on the expected side. Every probe reuses the same
/// replica keys, so configurations at larger `beta` are supersets. When a probe is
/// indistinguishable from the critical slope it is repeated once with four times
/// the replicas; a second indistinct probe ends the search at that `beta`.
pub fn find_beta_c(search: &CriticalSearch) -> Result<CriticalEstimate> {
    search.validate()?;
    let target = search.target_slope();
    let (mut lo, mut hi) = match search.bracket {
        Some(b) => b,
        None => default_bracket(&search.spec, search.n)?,
    };
    let mut probes = Vec::new();
    let run = |beta: f64, replicas: u64, probes: &mut Vec<Probe>| -> Result<Probe> {
        let p = search.probe(beta, replicas)?;
        probes.push(p.clone());
        Ok(p)
    };
    let mut replicas = search.replicas;

    let mut lo_probe = run(lo, replicas, &mut probes)?;
    let mut hi_seen: Option<Probe> = None;
    let mut expansions = 0;
    while lo_probe.verdict != Verdict::Subcritical {
        if lo_probe.verdict == Verdict::Supercritical {
            hi_seen = Some(lo_probe.clone());
        }
        if expansions == search.max_expansions {
            return Err(Error::BracketFailure(format!(
                "no subcritical slope found down to beta = {lo}"
            )));
        }
        lo /= EXPANSION_FACTOR;
        expansions += 1;
        lo_probe = run(lo, replicas, &mut probes)?;
    }
    let mut hi_probe = match hi_seen {
        Some(p) if p.beta < hi => p,
        _ => run(hi, replicas, &mut probes)?,
    };
    hi = hi_probe.beta;
    let mut expansions = 0;
    while hi_probe.verdict != Verdict::Supercritical {
        if hi_probe.verdict == Verdict::Subcritical {
            lo_probe = hi_probe.clone();
        }
        if expansions == search.max_expansions {
            return Err(Error::BracketFailure(format!(
                "no supercritical slope found up to beta = {hi}"
            )));
        }
        hi *= EXPANSION_FACTOR;
        expansions += 1;
        hi_probe = run(hi, replicas, &mut probes)?;
    }

    let mut widened = false;
    let mut settled: Option<f64> = None;
    for _ in 0..MAX_BISECTIONS {
        let estimate = interpolate(&lo_probe, &hi_probe, target);
        if hi_probe.beta - lo_probe.beta <= search.tolerance * estimate {
            break;
        }
        let mid = 0.5 * (lo_probe.beta + hi_probe.beta);
        let mut p = run(mid, replicas, &mut probes)?;
        if p.verdict == Verdict::Indistinct {
            if widened {
                settled = Some(mid);
                break;
            }
            widened = true;
            replicas *= WIDENING_FACTOR;
            p = run(mid, replicas, &mut probes)?;
        }
        match p.verdict {
            Verdict::Subcritical => lo_probe = p,
            Verdict::Supercritical => hi_probe = p,
            Verdict::Indistinct => {
                settled = Some(mid);
                break;
            }
        }
    }
    let beta_c_hat = settled.unwrap_or_else(|| interpolate(&lo_probe, &hi_probe, target));
    debug_assert!(lo_probe.beta <= beta_c_hat && beta_c_hat <= hi_probe.beta);
    Ok(CriticalEstimate {
        beta_c_hat,
        ci: (lo_probe.beta, hi_probe.beta),
        d: search.spec.d,
        alpha: search.spec.alpha,
        n: search.n,
        m: search.m,
        window: search.window,
        replicas: search.replicas,
        seed: search.seed,
        probes,
    })
}

/// One record per `beta`, all sharing the same replica keys.
pub fn beta_sweep(
    spec: &KernelSpec<f64>,
    lattice: BoxLattice,
    inner_radius: u64,
    grid: &[f64],
    replicas: u64,
    seed: u64,
) -> Result<Vec<SweepRecord>> {
    if grid.iter().any(|b| !(*b >= 0.0) || !b.is_finite()) {
        return Err(Error::param("beta_grid", "values must be finite and nonnegative"));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::param("beta_grid", "must be strictly increasing"));
    }
    grid.iter()
        .map(|&beta| {
            let req = EnsembleRequest::new(spec, beta, lattice, inner_radius, replicas, seed);
            run_ensemble(&req).map(|s| SweepRecord::from_summary(&s, seed))
        })
        .collect()
}
