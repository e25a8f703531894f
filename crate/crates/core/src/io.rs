//! CSV and JSON artifact formats.
//!
//! Floats in CSV files are written with 17 significant digits so that they read
//! back to the same bits.

use std::io::{Read, Write};

use crate::analytic::{CheckParams, ConvolutionCheckResult};
use crate::critical::CriticalEstimate;
use crate::error::{Error, Result};
use crate::observables::{CorrelationLength, ShellProfile, SweepRecord, TailTable, TwoPointTable};
use crate::scaling::ExponentReport;

/// 64-bit FNV-1a digest.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Scientific notation with 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}

fn parse_f64(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad number `{s}`")))
}

fn parse_u64(s: &str) -> Result<u64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad integer `{s}`")))
}

fn parse_i64(s: &str) -> Result<i64> {
    s.trim()
        .parse()
        .map_err(|_| Error::Parse(format!("bad integer `{s}`")))
}

const AXES: [&str; 3] = ["dx1", "dx2", "dx3"];

/// `two_point.csv`: `dx1[,dx2[,dx3]],tau,stderr,pairs`, one row per canonical displacement.
pub fn write_two_point_csv<W: Write>(table: &TwoPointTable, out: W) -> Result<()> {
    let d = table.dim();
    let mut w = csv::Writer::from_writer(out);
    let mut header: Vec<&str> = AXES[..d].to_vec();
    header.extend(["tau", "stderr", "pairs"]);
    w.write_record(&header)?;
    for k in 0..table.len() {
        let v = table.displacement(k);
        let mut row: Vec<String> = v[..d].iter().map(|c| c.to_string()).collect();
        row.push(fmt_f64(table.values()[k]));
        row.push(fmt_f64(table.stderrs()[k]));
        row.push(table.pair_counts()[k].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `two_point.csv` back; batch partials are not stored, so the table
/// carries none.
pub fn read_two_point_csv<R: Read>(input: R) -> Result<TwoPointTable> {
    let mut r = csv::Reader::from_reader(input);
    let d = r.headers()?.iter().filter(|h| h.starts_with("dx")).count();
    if d == 0 || d > 3 {
        return Err(Error::Parse("two_point.csv needs dx1..dxd columns".into()));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v: Vec<i64> = (0..d).map(|j| parse_i64(&rec[j])).collect::<Result<_>>()?;
        rows.push((v, parse_f64(&rec[d])?, parse_f64(&rec[d + 1])?));
    }
    let m = rows
        .iter()
        .flat_map(|(v, _, _)| v.iter().map(|c| c.unsigned_abs()))
        .max()
        .ok_or_else(|| Error::Parse("two_point.csv has no displacements".into()))?;
    let grid = crate::lattice::DisplacementGrid::new(d, m)?;
    let mut tau = vec![f64::NAN; grid.len()];
    let mut stderr = vec![f64::NAN; grid.len()];
    for (v, t, s) in rows {
        let k = grid
            .index_of(&v)
            .ok_or_else(|| Error::Parse(format!("displacement {v:?} outside the window")))?;
        tau[k] = t;
        stderr[k] = s;
    }
    if tau.iter().any(|t| t.is_nan()) {
        return Err(Error::Parse("two_point.csv misses canonical displacements".into()));
    }
    TwoPointTable::from_parts(d, m, m, 0, tau, stderr)
}

const SWEEP_HEADER: [&str; 10] = [
    "beta", "n", "replicas", "chi", "xi", "nabla", "kind", "index", "value", "stderr",
];

/// `sweep.csv` in long format. Each record contributes a `chi` row (its error
/// in `stderr`), `S_r` rows for `r = 1..=m`, `tail` rows per threshold and
/// `tau_shell` rows for `r = 0..=m`.
pub fn write_sweep_csv<W: Write>(records: &[SweepRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_HEADER)?;
    for rec in records {
        let prefix = [
            fmt_f64(rec.beta),
            rec.n.to_string(),
            rec.replicas.to_string(),
            fmt_f64(rec.chi),
            rec.xi.to_string(),
            fmt_f64(rec.nabla),
        ];
        let mut row = |kind: &str, index: u64, value: f64, stderr: Option<f64>| {
            let mut r: Vec<String> = prefix.to_vec();
            r.extend([kind.to_string(), index.to_string(), fmt_f64(value), fmt_opt(stderr)]);
            w.write_record(&r)
        };
        row("chi", 0, rec.chi, Some(rec.chi_stderr))?;
        for (i, &s) in rec.s_profile.iter().enumerate() {
            row("S_r", i as u64 + 1, s, None)?;
        }
        for ((&t, &p), &se) in rec.tail.thresholds.iter().zip(&rec.tail.prob).zip(&rec.tail.stderr) {
            row("tail", t, p, Some(se))?;
        }
        for (r, (&mean, &se)) in rec.shells.mean.iter().zip(&rec.shells.stderr).enumerate() {
            row("tau_shell", r as u64, mean, Some(se))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads `sweep.csv`; `d` is not part of the format and must be supplied.
pub fn read_sweep_csv<R: Read>(input: R, d: usize) -> Result<Vec<SweepRecord>> {
    let mut r = csv::Reader::from_reader(input);
    if r.headers()?.iter().collect::<Vec<_>>() != SWEEP_HEADER {
        return Err(Error::Parse("unexpected sweep.csv header".into()));
    }
    let mut records: Vec<SweepRecord> = Vec::new();
    let mut shells: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let beta = parse_f64(&rec[0])?;
        let kind = &rec[6];
        let index = parse_u64(&rec[7])?;
        let value = parse_f64(&rec[8])?;
        let stderr = if rec[9].trim().is_empty() { f64::NAN } else { parse_f64(&rec[9])? };
        if kind == "chi" {
            records.push(SweepRecord {
                beta,
                n: parse_u64(&rec[1])?,
                m: 0,
                replicas: parse_u64(&rec[2])?,
                seed: 0,
                chi: parse_f64(&rec[3])?,
                chi_stderr: stderr,
                xi: rec[4].parse::<CorrelationLength>()?,
                nabla: parse_f64(&rec[5])?,
                s_profile: Vec::new(),
                shells: ShellProfile::from_values(d, vec![1.0], vec![0.0])?,
                tail: TailTable {
                    thresholds: Vec::new(),
                    prob: Vec::new(),
                    stderr: Vec::new(),
                },
            });
            shells.push((Vec::new(), Vec::new()));
            continue;
        }
        let (cur, sh) = match (records.last_mut(), shells.last_mut()) {
            (Some(c), Some(s)) if c.beta.to_bits() == beta.to_bits() => (c, s),
            _ => return Err(Error::Parse(format!("`{kind}` row before its chi row"))),
        };
        match kind {
            "S_r" => cur.s_profile.push(value),
            "tail" => {
                cur.tail.thresholds.push(index);
                cur.tail.prob.push(value);
                cur.tail.stderr.push(stderr);
            }
            "tau_shell" => {
                sh.0.push(value);
                sh.1.push(stderr);
            }
            other => return Err(Error::Parse(format!("unknown row kind `{other}`"))),
        }
    }
    for (rec, (mean, se)) in records.iter_mut().zip(shells) {
        rec.m = rec.s_profile.len() as u64;
        if !mean.is_empty() {
            rec.shells = ShellProfile::from_values(d, mean, se)?;
        }
    }
    Ok(records)
}

pub fn write_critical_json<W: Write>(estimate: &CriticalEstimate, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, estimate)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn read_critical_json<R: Read>(input: R) -> Result<CriticalEstimate> {
    Ok(serde_json::from_reader(input)?)
}

pub fn write_report_json<W: Write>(report: &ExponentReport, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, report)?;
    out.write_all(b"\n")?;
    Ok(())
}

/// `report.csv`: one row per report item.
pub fn write_report_csv<W: Write>(report: &ExponentReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "name", "expected", "value", "stderr", "ci_lo", "ci_hi", "window_lo", "window_hi",
        "points", "max_residual", "sensitivity_lo", "sensitivity_hi", "status",
    ])?;
    for it in &report.items {
        w.write_record([
            it.name.clone(),
            fmt_opt(it.expected),
            fmt_opt(it.value),
            fmt_opt(it.stderr),
            fmt_opt(it.ci.map(|c| c.0)),
            fmt_opt(it.ci.map(|c| c.1)),
            fmt_opt(it.window.map(|c| c.0)),
            fmt_opt(it.window.map(|c| c.1)),
            it.points.to_string(),
            fmt_opt(it.max_residual),
            fmt_opt(it.sensitivity.map(|c| c.0)),
            fmt_opt(it.sensitivity.map(|c| c.1)),
            it.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn join(v: &[i64]) -> String {
    v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(" ")
}

/// `verify_analytic.csv`: `check,d,alpha,scale,point,value,ratio`. `scale` is `R`
/// or `k`; `point` is `x`, or `u;v` for the box-exit rows.
pub fn write_analytic_csv<W: Write>(rows: &[ConvolutionCheckResult<f64>], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["check", "d", "alpha", "scale", "point", "value", "ratio"])?;
    for row in rows {
        let (check, alpha, scale, point) = match &row.params {
            CheckParams::Convolution { alpha, radius, x } => {
                ("convolution", fmt_f64(*alpha), fmt_f64(*radius), join(x))
            }
            CheckParams::BoxExit { k, u, v } => {
                ("box_exit", String::new(), k.to_string(), format!("{};{}", join(u), join(v)))
            }
        };
        w.write_record([
            check.to_string(),
            row.d.to_string(),
            alpha,
            scale,
            point,
            fmt_f64(row.value),
            fmt_f64(row.ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}
