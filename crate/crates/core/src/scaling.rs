//! Power-law fits, the crossover collapse and the exponent report.

use serde::{Deserialize, Serialize};

use crate::critical::{profile_slope, CriticalEstimate};
use crate::error::{Error, Result};
use crate::num::Real;
use crate::observables::{ShellProfile, SweepRecord, TwoPointTable};
use crate::rng::StreamKey;

/// Bootstrap resamples used by every fit.
pub const BOOTSTRAP_REPS: usize = 200;
/// Normal quantile for the reported 95% intervals.
pub const Z95: f64 = 1.959_963_984_540_054;

const BOOTSTRAP_SEED: u64 = 0x6669_7473;

/// One observation `y(x)` with its standard error (zero or NaN when unknown).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitPoint<T> {
    pub x: T,
    pub y: T,
    pub stderr: T,
}

impl<T> FitPoint<T> {
    pub fn new(x: T, y: T, stderr: T) -> Self {
        FitPoint { x, y, stderr }
    }
}

/// `y ~ exp(intercept) * x^exponent`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitResult<T> {
    pub exponent: T,
    pub intercept: T,
    pub stderr: T,
    pub ci: (T, T),
    pub window: (T, T),
    pub points: usize,
    /// Largest absolute residual in log space.
    pub max_residual: T,
}

/// Weighted least-squares line through `(x, y)` with weights `w`.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Line<T> {
    pub slope: T,
    pub intercept: T,
    /// `sum w (x - xbar)^2`.
    pub sxx: T,
    pub wsum: T,
}

pub(crate) fn weighted_line<T: Real>(xs: &[T], ys: &[T], ws: &[T]) -> Option<Line<T>> {
    let wsum: T = ws.iter().copied().sum();
    if !(wsum > T::zero()) || xs.iter().all(|&x| x == xs[0]) {
        return None;
    }
    let xbar = xs.iter().zip(ws).map(|(&x, &w)| w * x).sum::<T>() / wsum;
    let ybar = ys.iter().zip(ws).map(|(&y, &w)| w * y).sum::<T>() / wsum;
    let mut sxx = T::zero();
    let mut sxy = T::zero();
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(ws) {
        sxx = sxx + w * (x - xbar) * (x - xbar);
        sxy = sxy + w * (x - xbar) * (y - ybar);
    }
    if !(sxx > T::zero()) {
        return None;
    }
    let slope = sxy / sxx;
    Some(Line {
        slope,
        intercept: ybar - slope * xbar,
        sxx,
        wsum,
    })
}

/// Standard deviation of a sample; NaN below two values.
pub(crate) fn sample_sd<T: Real>(values: &[T]) -> T {
    let n = values.len();
    if n < 2 {
        return T::nan();
    }
    let mean = values.iter().copied().sum::<T>() / T::int(n as u64);
    let ss: T = values.iter().map(|&v| (v - mean) * (v - mean)).sum();
    (ss / T::int(n as u64 - 1)).sqrt()
}

/// Deterministic index resampler shared by the bootstrap routines.
pub(crate) fn bootstrap_indices(rep: usize, n: usize) -> Vec<usize> {
    let mut rng = StreamKey::root(BOOTSTRAP_SEED).child(rep as u64).stream();
    (0..n).map(|_| rng.below(n as u64) as usize).collect()
}

/// Weighted least squares of `log y` on `log x` over points with `x` in `window`.
///
/// Weights are inverse variances of `log y` when every point carries a positive
/// standard error and uniform otherwise. The reported error is the larger of the
/// analytic one and the spread of a bootstrap over points.
pub fn fit_power_law<T: Real>(points: &[FitPoint<T>], window: (T, T)) -> Result<FitResult<T>> {
    let mut pts: Vec<FitPoint<T>> = points
        .iter()
        .copied()
        .filter(|p| p.x >= window.0 && p.x <= window.1)
        .collect();
    if pts.iter().any(|p| !(p.x > T::zero()) || !(p.y > T::zero())) {
        return Err(Error::param("points", "power-law fits need positive x and y"));
    }
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} points in window, need at least 3",
            pts.len()
        )));
    }
    // Canonical order, so the bootstrap does not depend on input order.
    pts.sort_by(|a, b| {
        a.x.partial_cmp(&b.x)
            .unwrap()
            .then(a.y.partial_cmp(&b.y).unwrap())
            .then(a.stderr.partial_cmp(&b.stderr).unwrap_or(std::cmp::Ordering::Equal))
    });
    let lx: Vec<T> = pts.iter().map(|p| p.x.ln()).collect();
    let ly: Vec<T> = pts.iter().map(|p| p.y.ln()).collect();
    let inverse_variance = pts.iter().all(|p| p.stderr > T::zero() && p.stderr.is_finite());
    let ws: Vec<T> = if inverse_variance {
        pts.iter().map(|p| (p.y / p.stderr).powi(2)).collect()
    } else {
        vec![T::one(); pts.len()]
    };
    let line = weighted_line(&lx, &ly, &ws)
        .ok_or_else(|| Error::InsufficientData("all points share one abscissa".into()))?;

    let n = pts.len();
    let residuals: Vec<T> = lx
        .iter()
        .zip(&ly)
        .map(|(&x, &y)| y - line.intercept - line.slope * x)
        .collect();
    let max_residual = residuals.iter().fold(T::zero(), |acc, r| acc.max(r.abs()));
    let dof = T::int(n as u64 - 2);
    let chi2: T = residuals.iter().zip(&ws).map(|(&r, &w)| w * r * r).sum();
    let analytic = if inverse_variance {
        (T::one().max(chi2 / dof) / line.sxx).sqrt()
    } else if n > 2 {
        (chi2 / dof / line.sxx).sqrt()
    } else {
        T::zero()
    };

    let mut slopes = Vec::with_capacity(BOOTSTRAP_REPS);
    for rep in 0..BOOTSTRAP_REPS {
        let idx = bootstrap_indices(rep, n);
        let bx: Vec<T> = idx.iter().map(|&i| lx[i]).collect();
        let by: Vec<T> = idx.iter().map(|&i| ly[i]).collect();
        let bw: Vec<T> = idx.iter().map(|&i| ws[i]).collect();
        if let Some(l) = weighted_line(&bx, &by, &bw) {
            slopes.push(l.slope);
        }
    }
    let boot = sample_sd(&slopes);
    let stderr = if boot.is_finite() { analytic.max(boot) } else { analytic };
    let half = T::lit(Z95) * stderr;
    Ok(FitResult {
        exponent: line.slope,
        intercept: line.intercept,
        stderr,
        ci: (line.slope - half, line.slope + half),
        window,
        points: n,
        max_residual,
    })
}

/// One subcritical curve for the crossover collapse.
#[derive(Clone, Debug)]
pub struct CollapseCurve {
    pub beta: f64,
    pub xi: u64,
    pub profile: ShellProfile,
}

/// Two-branch master curve fitted to rescaled profiles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseResult {
    /// Largest absolute log deviation of a branch point from its branch.
    pub score: f64,
    /// `log g` on the near branch `u <= 1/2`.
    pub near_level: f64,
    pub far_intercept: f64,
    /// Fitted slope of `log g` against `log u` on `u >= 2`.
    pub far_slope: f64,
    pub expected_far_slope: f64,
    pub near_points: usize,
    pub far_points: usize,
}

/// Rescales each profile to `(r / xi, tau * r^(d - alpha))` over shells `r <= m / 4`
/// and fits a constant for `u <= 1/2` and a line in log-log for `u >= 2`.
pub fn collapse_check(curves: &[CollapseCurve], alpha: f64) -> Result<CollapseResult> {
    if curves.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "collapse needs at least 3 curves, got {}",
            curves.len()
        )));
    }
    let mut sorted: Vec<&CollapseCurve> = curves.iter().collect();
    sorted.sort_by(|a, b| a.beta.total_cmp(&b.beta).then(a.xi.cmp(&b.xi)));
    let mut near = Vec::new();
    let mut far = Vec::new();
    for c in sorted {
        if c.xi == 0 {
            return Err(Error::param("xi", "correlation lengths must be positive"));
        }
        let d = c.profile.d as f64;
        for r in 1..=(c.profile.m / 4) {
            let tau = c.profile.mean[r as usize];
            if !(tau > 0.0) {
                continue;
            }
            let u = r as f64 / c.xi as f64;
            let lg = tau.ln() + (d - alpha) * (r as f64).ln();
            if u <= 0.5 {
                near.push(lg);
            } else if u >= 2.0 {
                far.push((u.ln(), lg));
            }
        }
    }
    if near.is_empty() || far.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} near-branch and {} far-branch points",
            near.len(),
            far.len()
        )));
    }
    let near_level = near.iter().sum::<f64>() / near.len() as f64;
    let xs: Vec<f64> = far.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = far.iter().map(|p| p.1).collect();
    let line = weighted_line(&xs, &ys, &vec![1.0; xs.len()])
        .ok_or_else(|| Error::InsufficientData("far branch spans a single radius".into()))?;
    let near_dev = near.iter().map(|&g| (g - near_level).abs());
    let far_dev = far.iter().map(|&(x, y)| (y - line.intercept - line.slope * x).abs());
    let score = near_dev.chain(far_dev).fold(0.0, f64::max);
    Ok(CollapseResult {
        score,
        near_level,
        far_intercept: line.intercept,
        far_slope: line.slope,
        expected_far_slope: -2.0 * alpha,
        near_points: near.len(),
        far_points: far.len(),
    })
}

/// Outcome of one report entry.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportItem {
    pub name: String,
    pub description: String,
    pub expected: Option<f64>,
    /// Fitted exponent, or the ratio for ratio items.
    pub value: Option<f64>,
    pub stderr: Option<f64>,
    pub ci: Option<(f64, f64)>,
    pub window: Option<(f64, f64)>,
    pub points: usize,
    pub max_residual: Option<f64>,
    /// Refits with the critical point moved to the ends of its interval.
    pub sensitivity: Option<(f64, f64)>,
    /// `ok` or `insufficient data: ...`.
    pub status: String,
}

impl ReportItem {
    fn new(name: &str, description: &str, expected: Option<f64>) -> Self {
        ReportItem {
            name: name.into(),
            description: description.into(),
            expected,
            value: None,
            stderr: None,
            ci: None,
            window: None,
            points: 0,
            max_residual: None,
            sensitivity: None,
            status: String::new(),
        }
    }

    fn with_fit(mut self, fit: Result<FitResult<f64>>) -> Self {
        match fit {
            Ok(f) => {
                self.value = Some(f.exponent);
                self.stderr = Some(f.stderr);
                self.ci = Some(f.ci);
                self.window = Some(f.window);
                self.points = f.points;
                self.max_residual = Some(f.max_residual);
                self.status = "ok".into();
            }
            Err(e) => self.status = insufficient(e),
        }
        self
    }

    pub fn is_ok(&self) -> bool {
        self.status == "ok"
    }
}

fn insufficient(e: Error) -> String {
    match e {
        Error::InsufficientData(msg) => format!("insufficient data: {msg}"),
        other => format!("insufficient data: {other}"),
    }
}

/// Every fitted exponent next to its predicted value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentReport {
    pub schema: u32,
    pub d: usize,
    pub alpha: f64,
    pub n: u64,
    pub beta_c_hat: f64,
    pub beta_c_ci: (f64, f64),
    pub items: Vec<ReportItem>,
}

impl ExponentReport {
    pub fn item(&self, name: &str) -> Option<&ReportItem> {
        self.items.iter().find(|i| i.name == name)
    }
}

/// Thresholds used for the tail slope: from 4 up to a quarter of `V^(2/3)`,
/// the finite-volume cutoff of critical mean-field clusters.
pub fn tail_window(vertex_count: u64) -> (f64, f64) {
    (4.0, (vertex_count as f64).powf(2.0 / 3.0) / 4.0)
}

fn tail_fit(record: &SweepRecord, d: usize) -> Result<FitResult<f64>> {
    let volume = (2 * record.n + 1).pow(d as u32);
    let points: Vec<FitPoint<f64>> = record
        .tail
        .thresholds
        .iter()
        .zip(&record.tail.prob)
        .zip(&record.tail.stderr)
        .filter(|((_, &p), _)| p > 0.0)
        .map(|((&t, &p), &se)| FitPoint::new(t as f64, p, se))
        .collect();
    fit_power_law(&points, tail_window(volume))
}

fn nearest<'a>(records: &[&'a SweepRecord], beta: f64) -> Option<&'a SweepRecord> {
    records
        .iter()
        .copied()
        .min_by(|a, b| (a.beta - beta).abs().total_cmp(&(b.beta - beta).abs()))
}

/// Fits every exponent relation the sweep and critical run can support.
///
/// Items that lack data are kept with an `insufficient data` status.
pub fn exponent_report(
    sweep: &[SweepRecord],
    critical: &CriticalEstimate,
    tau_at_critical: Option<&TwoPointTable>,
) -> ExponentReport {
    let d = critical.d;
    let df = d as f64;
    let alpha = critical.alpha;
    let n = critical.n;
    let (lo, hi) = critical.ci;
    let bc = critical.beta_c_hat;
    let mut records: Vec<&SweepRecord> = sweep.iter().collect();
    records.sort_by(|a, b| a.beta.total_cmp(&b.beta));
    let subcritical: Vec<&SweepRecord> = records.iter().copied().filter(|r| r.beta < bc).collect();
    let xi_range = |r: &&&SweepRecord| {
        r.xi
            .finite()
            .is_some_and(|x| x >= 4 && (x as f64) <= n as f64 / 8.0)
    };
    let mut items = Vec::new();

    // Critical two-point slope.
    let item = ReportItem::new("two_point_slope", "slope of shell-averaged tau at the critical estimate", Some(-(df - alpha)));
    items.push(match tau_at_critical {
        Some(t) => item.with_fit(profile_slope(&t.shell_profile(), critical.window).map(|s| s.to_fit())),
        None => item.with_fit(Err(Error::InsufficientData("no two-point table at the critical estimate".into()))),
    });

    // chi against xi.
    let pts: Vec<FitPoint<f64>> = subcritical
        .iter()
        .filter(xi_range)
        .map(|r| FitPoint::new(r.xi.finite().unwrap() as f64, r.chi, r.chi_stderr))
        .collect();
    items.push(
        ReportItem::new("chi_vs_xi", "slope of log chi against log xi, subcritical", Some(alpha))
            .with_fit(fit_power_law(&pts, (4.0, n as f64 / 8.0))),
    );

    // chi against distance to the critical point.
    let gamma_points = |b: f64| -> Vec<FitPoint<f64>> {
        subcritical
            .iter()
            .filter(|r| r.beta < b && r.xi.finite().is_some())
            .map(|r| FitPoint::new(b - r.beta, r.chi, r.chi_stderr))
            .collect()
    };
    let mean_field = alpha < 1.0_f64.min(df / 3.0);
    let all = (0.0, f64::INFINITY);
    let mut item = ReportItem::new(
        "gamma",
        "slope of log chi against log(beta_c - beta)",
        mean_field.then_some(-1.0),
    )
    .with_fit(fit_power_law(&gamma_points(bc), all));
    if item.is_ok() {
        let at = |b| fit_power_law(&gamma_points(b), all).map(|f| f.exponent).unwrap_or(f64::NAN);
        item.sensitivity = Some((at(lo), at(hi)));
    }
    items.push(item);

    // Cluster-size tail near the critical point.
    let in_ci: Vec<&SweepRecord> = records.iter().copied().filter(|r| r.beta >= lo && r.beta <= hi).collect();
    let mut item = ReportItem::new(
        "tail",
        "slope of log P(|K| >= t) against log t near the critical estimate",
        mean_field.then_some(-0.5),
    );
    item = match nearest(&in_ci, bc) {
        Some(r) => {
            let mut it = item.with_fit(tail_fit(r, d));
            if it.is_ok() {
                let at = |b| {
                    nearest(&records, b)
                        .map(|r| tail_fit(r, d).map(|f| f.exponent).unwrap_or(f64::NAN))
                        .unwrap_or(f64::NAN)
                };
                it.sensitivity = Some((at(lo), at(hi)));
            }
            it
        }
        None => item.with_fit(Err(Error::InsufficientData("no sweep record inside the critical interval".into()))),
    };
    items.push(item);

    // Subcritical far field.
    let item = ReportItem::new("far_field", "slope of tau on |x| in [4 xi, n/8], subcritical", Some(-(df + alpha)));
    let candidate = subcritical
        .iter()
        .filter(|r| {
            r.xi
                .finite()
                .is_some_and(|x| x >= 4 && (x as f64) <= n as f64 / 32.0)
        })
        .min_by(|a, b| a.xi.cmp(&b.xi).then(b.beta.total_cmp(&a.beta)));
    items.push(match candidate {
        Some(r) => {
            let xi = r.xi.finite().unwrap();
            item.with_fit(profile_slope(&r.shells, (4 * xi, n / 8)).map(|s| s.to_fit()))
        }
        None => item.with_fit(Err(Error::InsufficientData("no record with 4 <= xi <= n/32".into()))),
    });

    // Triangle growth.
    let pts: Vec<FitPoint<f64>> = subcritical
        .iter()
        .filter(xi_range)
        .map(|r| FitPoint::new(r.xi.finite().unwrap() as f64, r.nabla, 0.0))
        .collect();
    items.push(
        ReportItem::new(
            "triangle_vs_xi",
            "slope of log triangle against log xi, subcritical",
            Some((3.0 * alpha - df).max(0.0)),
        )
        .with_fit(fit_power_law(&pts, (4.0, n as f64 / 8.0))),
    );

    // Triangle boundedness along the approach.
    let mut item = ReportItem::new(
        "triangle_ratio_last3",
        "max/min triangle over the three largest subcritical betas",
        None,
    );
    if subcritical.len() >= 3 {
        let last: Vec<f64> = subcritical[subcritical.len() - 3..].iter().map(|r| r.nabla).collect();
        let max = last.iter().copied().fold(f64::MIN, f64::max);
        let min = last.iter().copied().fold(f64::MAX, f64::min);
        item.value = Some(max / min);
        item.points = 3;
        item.status = "ok".into();
    } else {
        item.status = format!("insufficient data: {} subcritical records, need 3", subcritical.len());
    }
    items.push(item);

    ExponentReport {
        schema: 1,
        d,
        alpha,
        n,
        beta_c_hat: bc,
        beta_c_ci: (lo, hi),
        items,
    }
}
