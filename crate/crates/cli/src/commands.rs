//! One function per subcommand: resolve parameters, run, collect artifacts.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};

use lrperc::analytic::{box_exit_grid, convolution_grid};
use lrperc::clusters::build_clusters;
use lrperc::critical::{beta_sweep, default_window, find_beta_c, CriticalSearch};
use lrperc::io;
use lrperc::lattice::BoxLattice;
use lrperc::observables::{
    correlation_length_estimate, run_ensemble, susceptibility_estimate, triangle_estimate, triangle_sum,
    EnsembleRequest, TriangleMethod,
};
use lrperc::sampler::SamplingPlan;
use lrperc::scaling::exponent_report;
use lrperc::Kernel;

use crate::args::Flags;
use crate::error::CliError;
use crate::output::Artifacts;

pub const DEFAULT_D: usize = 1;
pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_AMPLITUDE: f64 = 1.0;
pub const DEFAULT_N: u64 = 64;
pub const DEFAULT_INNER_FRACTION: f64 = 0.5;
pub const DEFAULT_REPLICAS: u64 = 100;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_TOL: f64 = 0.01;

/// What a command produced, for the manifest and the summary line.
pub struct Outcome {
    pub artifacts: Artifacts,
    pub kernel: Option<Kernel>,
    pub params: Value,
    pub seed: Option<u64>,
    pub summary: String,
}

fn kernel(f: &Flags) -> Result<Kernel, CliError> {
    Ok(Kernel::new(
        f.d.unwrap_or(DEFAULT_D),
        f.alpha.unwrap_or(DEFAULT_ALPHA),
        f.amplitude.unwrap_or(DEFAULT_AMPLITUDE),
        f.truncate,
    )?)
}

/// Box radius and inner-window radius.
fn radii(f: &Flags) -> Result<(u64, u64), CliError> {
    let n = f.n.unwrap_or(DEFAULT_N);
    if n == 0 {
        return Err(CliError::Precondition("n must be at least 1".into()));
    }
    let frac = f.inner_fraction.unwrap_or(DEFAULT_INNER_FRACTION);
    if !(frac > 0.0 && frac <= 1.0) {
        return Err(CliError::Precondition(format!("inner-fraction must lie in (0, 1], got {frac}")));
    }
    Ok((n, ((n as f64 * frac).floor() as u64).max(1)))
}

fn beta(f: &Flags) -> Result<f64, CliError> {
    let b = f.beta.ok_or_else(|| CliError::Usage("missing --beta".into()))?;
    if !(b >= 0.0) || !b.is_finite() {
        return Err(CliError::Precondition(format!("beta must be finite and nonnegative, got {b}")));
    }
    Ok(b)
}

fn replicas(f: &Flags, default: u64) -> Result<u64, CliError> {
    let r = f.replicas.unwrap_or(default);
    if r == 0 {
        return Err(CliError::Precondition("replicas must be at least 1".into()));
    }
    Ok(r)
}

fn csv_bytes(write: impl FnOnce(&mut Vec<u8>) -> lrperc::Result<()>) -> Result<Vec<u8>, CliError> {
    let mut buf = Vec::new();
    write(&mut buf)?;
    Ok(buf)
}

pub fn out_dir(f: &Flags, command: &str) -> PathBuf {
    match (&f.out, command) {
        (Some(p), _) => p.clone(),
        (None, "report") => f.input.clone().unwrap_or_else(|| PathBuf::from(".")),
        (None, _) => PathBuf::from("."),
    }
}

pub fn sample(f: &Flags) -> Result<Outcome, CliError> {
    let spec = kernel(f)?;
    let (n, _) = radii(f)?;
    let beta = beta(f)?;
    let reps = replicas(f, 1)?;
    let seed = f.seed.unwrap_or(DEFAULT_SEED);
    let lattice = BoxLattice::new(spec.d, n)?;
    let plan = SamplingPlan::new(&spec, beta, &lattice)?;
    let mut artifacts = Artifacts::default();
    let mut table = String::from("replica,open_edges,components,largest,origin_size\n");
    let mut edges_total = 0usize;
    for replica in 0..reps {
        let config = plan.sample(seed, replica);
        let forest = build_clusters(&config);
        let stats = forest.cluster_statistics();
        edges_total += config.open_edges.len();
        table.push_str(&format!(
            "{replica},{},{},{},{}\n",
            config.open_edges.len(),
            forest.component_count(),
            stats.largest,
            stats.origin_size
        ));
        if f.dump {
            let mut bytes = Vec::new();
            config.write_dump(&mut bytes)?;
            artifacts.add(&format!("config_{replica}.bin"), bytes);
        }
    }
    artifacts.add("sample.csv", table.into_bytes());
    Ok(Outcome {
        artifacts,
        params: json!({"n": n, "beta": beta, "replicas": reps, "dump": f.dump}),
        kernel: Some(spec),
        seed: Some(seed),
        summary: format!(
            "sample: {reps} configurations, mean open edges {:.3}",
            edges_total as f64 / reps as f64
        ),
    })
}

pub fn two_point(f: &Flags) -> Result<Outcome, CliError> {
    let spec = kernel(f)?;
    let (n, m) = radii(f)?;
    let beta = beta(f)?;
    let reps = replicas(f, DEFAULT_REPLICAS)?;
    let seed = f.seed.unwrap_or(DEFAULT_SEED);
    let lattice = BoxLattice::new(spec.d, n)?;
    let summary = run_ensemble(&EnsembleRequest::new(&spec, beta, lattice, m, reps, seed))?;
    let table = &summary.table;
    let chi = susceptibility_estimate(table);
    let xi = correlation_length_estimate(table, chi);
    let mut artifacts = Artifacts::default();
    artifacts.add("two_point.csv", csv_bytes(|b| io::write_two_point_csv(table, b))?);
    Ok(Outcome {
        artifacts,
        params: json!({"n": n, "m": m, "beta": beta, "replicas": reps}),
        kernel: Some(spec),
        seed: Some(seed),
        summary: format!("two-point: beta={beta} n={n} m={m} chi={chi:.6} xi={xi}"),
    })
}

pub fn sweep(f: &Flags) -> Result<Outcome, CliError> {
    let spec = kernel(f)?;
    let (n, m) = radii(f)?;
    let grid = f.beta_grid.ok_or_else(|| CliError::Usage("missing --beta-grid".into()))?;
    let reps = replicas(f, DEFAULT_REPLICAS)?;
    let seed = f.seed.unwrap_or(DEFAULT_SEED);
    let lattice = BoxLattice::new(spec.d, n)?;
    let records = beta_sweep(&spec, lattice, m, &grid.values(), reps, seed)?;
    let mut artifacts = Artifacts::default();
    artifacts.add("sweep.csv", csv_bytes(|b| io::write_sweep_csv(&records, b))?);
    let last = records.last().expect("grid is nonempty");
    Ok(Outcome {
        artifacts,
        params: json!({"n": n, "m": m, "beta_grid": grid.to_string(), "replicas": reps}),
        kernel: Some(spec),
        seed: Some(seed),
        summary: format!(
            "sweep: {} beta values, last beta={} chi={:.6} xi={}",
            records.len(),
            last.beta,
            last.chi,
            last.xi
        ),
    })
}

pub fn find_critical(f: &Flags) -> Result<Outcome, CliError> {
    let spec = kernel(f)?;
    let (n, m) = radii(f)?;
    let reps = replicas(f, DEFAULT_REPLICAS)?;
    let seed = f.seed.unwrap_or(DEFAULT_SEED);
    let mut search = CriticalSearch::new(spec.clone(), n, reps, seed);
    search.m = m;
    search.window = f.window.map(|w| (w.0, w.1)).unwrap_or_else(|| default_window(m));
    search.tolerance = f.tol.unwrap_or(DEFAULT_TOL);
    search.bracket = f.bracket.map(|b| (b.0, b.1));
    let est = find_beta_c(&search)?;
    let mut artifacts = Artifacts::default();
    artifacts.add("critical.json", csv_bytes(|b| io::write_critical_json(&est, b))?);
    Ok(Outcome {
        artifacts,
        params: json!({
            "n": n, "m": m, "replicas": reps, "window": [search.window.0, search.window.1],
            "tol": search.tolerance, "bracket": search.bracket.map(|b| [b.0, b.1]),
        }),
        kernel: Some(spec),
        seed: Some(seed),
        summary: format!(
            "find-critical: beta_c_hat={} ci=[{}, {}] after {} probes",
            est.beta_c_hat,
            est.ci.0,
            est.ci.1,
            est.probes.len()
        ),
    })
}

pub fn triangle(f: &Flags) -> Result<Outcome, CliError> {
    let spec = kernel(f)?;
    let (n, m) = radii(f)?;
    let beta = beta(f)?;
    let reps = replicas(f, DEFAULT_REPLICAS)?;
    let seed = f.seed.unwrap_or(DEFAULT_SEED);
    let lattice = BoxLattice::new(spec.d, n)?;
    let nabla = if f.unbiased {
        // Three disjoint replica ranges, one per factor.
        let tables = (0..3)
            .map(|g| {
                let mut req = EnsembleRequest::new(&spec, beta, lattice, m, reps, seed);
                req.replica_offset = g * reps;
                run_ensemble(&req).map(|s| s.table)
            })
            .collect::<lrperc::Result<Vec<_>>>()?;
        triangle_sum(&tables[0], &tables[1], &tables[2], TriangleMethod::Auto)?
    } else {
        triangle_estimate(&run_ensemble(&EnsembleRequest::new(&spec, beta, lattice, m, reps, seed))?.table)
    };
    let mode = if f.unbiased { "unbiased" } else { "plug-in" };
    let mut artifacts = Artifacts::default();
    artifacts.add(
        "triangle.csv",
        format!(
            "beta,n,m,replicas,mode,nabla\n{},{n},{m},{reps},{mode},{}\n",
            io::fmt_f64(beta),
            io::fmt_f64(nabla)
        )
        .into_bytes(),
    );
    Ok(Outcome {
        artifacts,
        params: json!({"n": n, "m": m, "beta": beta, "replicas": reps, "unbiased": f.unbiased}),
        kernel: Some(spec),
        seed: Some(seed),
        summary: format!("triangle ({mode}): beta={beta} nabla={nabla:.6}"),
    })
}

fn open(dir: &Path, name: &str) -> Result<fs::File, CliError> {
    let path = dir.join(name);
    fs::File::open(&path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn report(f: &Flags) -> Result<Outcome, CliError> {
    let dir = f.input.clone().ok_or_else(|| CliError::Usage("missing --in".into()))?;
    let critical = io::read_critical_json(open(&dir, "critical.json")?)?;
    let sweep = if dir.join("sweep.csv").exists() {
        io::read_sweep_csv(open(&dir, "sweep.csv")?, critical.d)?
    } else {
        Vec::new()
    };
    let table = if dir.join("two_point.csv").exists() {
        Some(io::read_two_point_csv(open(&dir, "two_point.csv")?)?)
    } else {
        None
    };
    let report = exponent_report(&sweep, &critical, table.as_ref());
    let mut artifacts = Artifacts::default();
    artifacts.add("report.json", csv_bytes(|b| io::write_report_json(&report, b))?);
    artifacts.add("report.csv", csv_bytes(|b| io::write_report_csv(&report, b))?);
    let ok = report.items.iter().filter(|i| i.is_ok()).count();
    Ok(Outcome {
        artifacts,
        params: json!({"in": dir.display().to_string()}),
        kernel: None,
        seed: Some(critical.seed),
        summary: format!("report: {ok} of {} items fitted", report.items.len()),
    })
}

/// Scales `k` of the box-exit sweep for each dimension.
fn exit_scales(d: usize) -> std::ops::RangeInclusive<u32> {
    match d {
        1 => 4..=8,
        2 => 4..=5,
        _ => 4..=4,
    }
}

pub fn verify_analytic(f: &Flags) -> Result<Outcome, CliError> {
    let d = f.d.unwrap_or(DEFAULT_D);
    let alpha = f.alpha.unwrap_or(DEFAULT_ALPHA);
    let mut rows = convolution_grid::<f64>(d, alpha)?;
    let conv = rows.len();
    rows.extend(box_exit_grid::<f64>(d, exit_scales(d))?);
    let ratios: Vec<f64> = rows[..conv].iter().map(|r| r.ratio).collect();
    let consts: Vec<f64> = rows[conv..].iter().map(|r| r.ratio).collect();
    let spread = |v: &[f64]| {
        v.iter().copied().fold(f64::MIN, f64::max) / v.iter().copied().fold(f64::MAX, f64::min)
    };
    let mut artifacts = Artifacts::default();
    artifacts.add("verify_analytic.csv", csv_bytes(|b| io::write_analytic_csv(&rows, b))?);
    Ok(Outcome {
        artifacts,
        params: json!({"d": d, "alpha": alpha}),
        kernel: None,
        seed: None,
        summary: format!(
            "verify-analytic: convolution ratio spread {:.4}, box-exit constant spread {:.4}",
            spread(&ratios),
            spread(&consts)
        ),
    })
}
