//! Command-line flags, the `key = value` config file, and their merge.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "lrperc", version, about = "Long-range percolation Monte Carlo laboratory")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Sample configurations and summarize their clusters.
    Sample(Flags),
    /// Estimate the two-point function on the inner window.
    TwoPoint(Flags),
    /// Run every estimator over a grid of beta values.
    Sweep(Flags),
    /// Bisect for the critical point on the two-point slope.
    FindCritical(Flags),
    /// Estimate the triangle diagram.
    Triangle(Flags),
    /// Fit exponents from the artifacts of earlier runs.
    Report(Flags),
    /// Evaluate the deterministic convolution checks.
    VerifyAnalytic(Flags),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sample(_) => "sample",
            Command::TwoPoint(_) => "two-point",
            Command::Sweep(_) => "sweep",
            Command::FindCritical(_) => "find-critical",
            Command::Triangle(_) => "triangle",
            Command::Report(_) => "report",
            Command::VerifyAnalytic(_) => "verify-analytic",
        }
    }

    pub fn flags(&self) -> &Flags {
        match self {
            Command::Sample(f)
            | Command::TwoPoint(f)
            | Command::Sweep(f)
            | Command::FindCritical(f)
            | Command::Triangle(f)
            | Command::Report(f)
            | Command::VerifyAnalytic(f) => f,
        }
    }
}

/// `lo:hi:steps`, inclusive, evenly spaced.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BetaGrid {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl BetaGrid {
    pub fn values(&self) -> Vec<f64> {
        if self.steps == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| if i + 1 == self.steps { self.hi } else { self.lo + i as f64 * step })
            .collect()
    }
}

impl FromStr for BetaGrid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || format!("expected lo:hi:steps, got `{s}`");
        if parts.len() != 3 {
            return Err(bad());
        }
        let lo: f64 = parts[0].trim().parse().map_err(|_| bad())?;
        let hi: f64 = parts[1].trim().parse().map_err(|_| bad())?;
        let steps: usize = parts[2].trim().parse().map_err(|_| bad())?;
        if steps == 0 || (steps > 1 && !(hi > lo)) {
            return Err(format!("beta grid `{s}` needs steps >= 1 and hi > lo"));
        }
        Ok(BetaGrid { lo, hi, steps })
    }
}

impl fmt::Display for BetaGrid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.lo, self.hi, self.steps)
    }
}

/// `a:b` pair.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pair<T>(pub T, pub T);

impl<T: FromStr> FromStr for Pair<T> {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("expected a:b, got `{s}`");
        let (a, b) = s.split_once(':').ok_or_else(bad)?;
        Ok(Pair(
            a.trim().parse().map_err(|_| bad())?,
            b.trim().parse().map_err(|_| bad())?,
        ))
    }
}

impl<T: fmt::Display> fmt::Display for Pair<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.0, self.1)
    }
}

#[derive(Args, Debug, Clone, Default)]
pub struct Flags {
    /// key = value file; flags given on the command line take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Lattice dimension (1, 2 or 3).
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Kernel amplitude.
    #[arg(long = "A")]
    pub amplitude: Option<f64>,
    #[arg(long)]
    pub beta: Option<f64>,
    /// lo:hi:steps.
    #[arg(long = "beta-grid")]
    pub beta_grid: Option<BetaGrid>,
    /// Box radius; the box is [-n, n]^d.
    #[arg(long)]
    pub n: Option<u64>,
    /// Inner window radius as a fraction of n.
    #[arg(long = "inner-fraction")]
    pub inner_fraction: Option<f64>,
    #[arg(long)]
    pub replicas: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Drop edges longer than this (sup norm).
    #[arg(long)]
    pub truncate: Option<u64>,
    /// rmin:rmax for slope fits.
    #[arg(long)]
    pub window: Option<Pair<u64>>,
    /// Relative bracket width at which the critical search stops.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Starting bracket lo:hi for find-critical.
    #[arg(long)]
    pub bracket: Option<Pair<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Input directory for report.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Worker threads; falls back to PERC_LR_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Triangle from three disjoint replica groups.
    #[arg(long)]
    pub unbiased: bool,
    /// Also write binary edge dumps (sample).
    #[arg(long)]
    pub dump: bool,
}

const KEYS: [&str; 19] = [
    "d", "alpha", "A", "beta", "beta-grid", "n", "inner-fraction", "replicas", "seed", "truncate",
    "window", "tol", "bracket", "out", "in", "threads", "unbiased", "dump", "config",
];

/// Parsed config file: normalized key to `(value, line)`.
#[derive(Debug, Default)]
pub struct ConfigFile {
    entries: BTreeMap<String, (String, usize)>,
}

/// Reads `key = value` lines; `#` starts a comment, `_` in keys reads as `-`.
pub fn load_config(path: &Path) -> Result<ConfigFile, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text)
}

pub fn parse_config(text: &str) -> Result<ConfigFile, CliError> {
    let mut entries = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("config line {line}: expected key = value")))?;
        let key = key.trim();
        let normalized = key.replace('_', "-");
        if !KEYS.contains(&normalized.as_str()) || normalized == "config" {
            return Err(CliError::Usage(format!("config line {line}: unknown key `{key}`")));
        }
        if entries.insert(normalized, (value.trim().to_string(), line)).is_some() {
            return Err(CliError::Usage(format!("config line {line}: duplicate key `{key}`")));
        }
    }
    Ok(ConfigFile { entries })
}

impl ConfigFile {
    fn fill<T: FromStr>(&self, key: &str, slot: &mut Option<T>) -> Result<(), CliError>
    where
        T::Err: fmt::Display,
    {
        if slot.is_some() {
            return Ok(());
        }
        if let Some((value, line)) = self.entries.get(key) {
            let parsed = value.parse::<T>().map_err(|e| {
                CliError::Usage(format!("config line {line}: bad value `{value}` for `{key}`: {e}"))
            })?;
            *slot = Some(parsed);
        }
        Ok(())
    }

    fn flag(&self, key: &str, slot: &mut bool) -> Result<(), CliError> {
        let mut v: Option<bool> = None;
        self.fill(key, &mut v)?;
        *slot = *slot || v.unwrap_or(false);
        Ok(())
    }

    /// Fills every flag left unset on the command line.
    pub fn apply(&self, f: &mut Flags) -> Result<(), CliError> {
        self.fill("d", &mut f.d)?;
        self.fill("alpha", &mut f.alpha)?;
        self.fill("A", &mut f.amplitude)?;
        self.fill("beta", &mut f.beta)?;
        self.fill("beta-grid", &mut f.beta_grid)?;
        self.fill("n", &mut f.n)?;
        self.fill("inner-fraction", &mut f.inner_fraction)?;
        self.fill("replicas", &mut f.replicas)?;
        self.fill("seed", &mut f.seed)?;
        self.fill("truncate", &mut f.truncate)?;
        self.fill("window", &mut f.window)?;
        self.fill("tol", &mut f.tol)?;
        self.fill("bracket", &mut f.bracket)?;
        self.fill("out", &mut f.out)?;
        self.fill("in", &mut f.input)?;
        self.fill("threads", &mut f.threads)?;
        self.flag("unbiased", &mut f.unbiased)?;
        self.flag("dump", &mut f.dump)?;
        Ok(())
    }
}

/// Flags merged with the config file named by `--config`, if any.
pub fn resolve(flags: &Flags) -> Result<Flags, CliError> {
    let mut merged = flags.clone();
    if let Some(path) = &flags.config {
        load_config(path)?.apply(&mut merged)?;
    }
    Ok(merged)
}
