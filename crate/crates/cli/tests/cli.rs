use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lrperc::critical::CriticalEstimate;
use lrperc::io::{fnv1a64, write_critical_json, write_sweep_csv};
use lrperc::observables::{dyadic_thresholds, CorrelationLength, ShellProfile, SweepRecord, TailTable};
use serde_json::Value;
use tempfile::TempDir;

fn lrperc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrperc"))
        .args(args)
        .env_remove("PERC_LR_THREADS")
        .output()
        .expect("binary runs")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut all: Vec<&str> = args.to_vec();
    all.extend(["--out", dir.to_str().unwrap()]);
    lrperc(&all)
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

fn digests(dir: &Path) -> Vec<(String, String)> {
    manifest(dir)["outputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|o| (o["file"].as_str().unwrap().to_string(), o["fnv1a64"].as_str().unwrap().to_string()))
        .collect()
}

const TWO_POINT_ZERO: [&str; 15] = [
    "two-point", "--d", "1", "--alpha", "0.6", "--A", "1", "--beta", "0", "--n", "64", "--replicas", "10", "--seed", "7",
];

#[test]
fn empty_graph_two_point_table() {
    let dir = TempDir::new().unwrap();
    let out = run_in(dir.path(), &TWO_POINT_ZERO);
    assert_ok(&out);
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().count(), 1);
    let mut r = csv::Reader::from_path(dir.path().join("two_point.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 33);
    for row in &rows {
        let tau: f64 = row[1].parse().unwrap();
        let expected = if &row[0] == "0" { 1.0 } else { 0.0 };
        assert_eq!(tau, expected, "row {row:?}");
    }
}

#[test]
fn manifest_digests_match_files() {
    let dir = TempDir::new().unwrap();
    assert_ok(&run_in(dir.path(), &TWO_POINT_ZERO));
    let m = manifest(dir.path());
    assert_eq!(m["command"], "two-point");
    assert_eq!(m["seed"], 7);
    assert_eq!(m["kernel"]["alpha"], 0.6);
    assert_eq!(m["params"]["n"], 64);
    assert_eq!(m["params"]["m"], 32);
    for o in m["outputs"].as_array().unwrap() {
        let bytes = fs::read(dir.path().join(o["file"].as_str().unwrap())).unwrap();
        assert_eq!(o["bytes"].as_u64().unwrap(), bytes.len() as u64);
        assert_eq!(o["fnv1a64"].as_str().unwrap(), format!("{:016x}", fnv1a64(&bytes)));
    }
    let leftovers = fs::read_dir(dir.path())
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(".tmp"))
        .count();
    assert_eq!(leftovers, 0);
}

#[test]
fn repeated_runs_and_thread_counts_agree() {
    let base = ["two-point", "--alpha", "0.6", "--beta", "0.4", "--n", "64", "--replicas", "200", "--seed", "3"];
    let mut seen = Vec::new();
    for threads in ["1", "1", "8"] {
        let dir = TempDir::new().unwrap();
        let mut args = base.to_vec();
        args.extend(["--threads", threads]);
        assert_ok(&run_in(dir.path(), &args));
        seen.push(digests(dir.path()));
    }
    assert_eq!(seen[0], seen[1]);
    assert_eq!(seen[0], seen[2]);
}

#[test]
fn thread_count_from_environment() {
    let dir = TempDir::new().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lrperc"))
        .args(["verify-analytic", "--d", "1", "--out", dir.path().to_str().unwrap()])
        .env("PERC_LR_THREADS", "3")
        .output()
        .unwrap();
    assert_ok(&out);
    assert_eq!(manifest(dir.path())["threads"], 3);
    let bad = Command::new(env!("CARGO_BIN_EXE_lrperc"))
        .args(["verify-analytic", "--out", dir.path().to_str().unwrap()])
        .env("PERC_LR_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn config_file_precedence_and_strictness() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# tiny run\nalpha = 0.6\nbeta=0.3\nn = 16\nreplicas = 4 # few\ninner_fraction = 0.25\n").unwrap();
    let out = dir.path().join("a");
    assert_ok(&run_in(&out, &["two-point", "--config", cfg.to_str().unwrap(), "--alpha", "0.5"]));
    let m = manifest(&out);
    assert_eq!(m["kernel"]["alpha"], 0.5);
    assert_eq!(m["params"]["beta"], 0.3);
    assert_eq!(m["params"]["m"], 4);

    let empty = dir.path().join("empty.cfg");
    fs::write(&empty, "").unwrap();
    let out = dir.path().join("b");
    assert_ok(&run_in(&out, &["two-point", "--config", empty.to_str().unwrap(), "--beta", "0", "--replicas", "2"]));
    let m = manifest(&out);
    assert_eq!(m["kernel"]["alpha"], 0.5);
    assert_eq!(m["params"]["n"], 64);
    assert_eq!(m["params"]["m"], 32);

    let unknown = dir.path().join("bad.cfg");
    fs::write(&unknown, "alpha = 0.6\n\nalpha_c=2\n").unwrap();
    let res = run_in(&dir.path().join("c"), &["two-point", "--config", unknown.to_str().unwrap(), "--beta", "0"]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("alpha_c") && err.contains("line 3"), "{err}");
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    let code = |args: &[&str]| run_in(dir.path(), args).status.code();
    assert_eq!(code(&["two-point", "--beta", "zero"]), Some(2));
    assert_eq!(code(&["no-such-command"]), Some(2));
    assert_eq!(code(&["two-point"]), Some(2));
    let res = run_in(dir.path(), &["two-point", "--alpha=-1", "--beta", "0.1"]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("alpha"));
    assert_eq!(code(&["two-point", "--beta", "0.1", "--d", "4"]), Some(3));
    assert_eq!(code(&["two-point", "--beta", "0.1", "--inner-fraction", "1.5"]), Some(3));
    assert_eq!(
        code(&["find-critical", "--n", "64", "--replicas", "8", "--bracket", "1e-6:2e-6", "--window", "4:16"]),
        Some(4)
    );
    assert_eq!(code(&["report", "--in", dir.path().join("missing").to_str().unwrap()]), Some(5));
}

#[test]
fn sweep_writes_one_group_per_beta() {
    let dir = TempDir::new().unwrap();
    assert_ok(&run_in(
        dir.path(),
        &["sweep", "--alpha", "0.6", "--beta-grid", "0.1:0.3:3", "--n", "32", "--replicas", "20"],
    ));
    let mut r = csv::Reader::from_path(dir.path().join("sweep.csv")).unwrap();
    let mut betas: Vec<String> = r.records().map(|r| r.unwrap()[0].to_string()).collect();
    betas.dedup();
    assert_eq!(betas.len(), 3);
    let parsed: Vec<f64> = betas.iter().map(|b| b.parse().unwrap()).collect();
    assert!((parsed[0] - 0.1).abs() < 1e-12 && (parsed[1] - 0.2).abs() < 1e-12 && (parsed[2] - 0.3).abs() < 1e-12);
}

#[test]
fn sample_and_triangle_outputs() {
    let dir = TempDir::new().unwrap();
    assert_ok(&run_in(dir.path(), &["sample", "--beta", "0.5", "--n", "8", "--replicas", "3", "--dump"]));
    let files: Vec<String> = digests(dir.path()).into_iter().map(|(f, _)| f).collect();
    assert_eq!(files, ["config_0.bin", "config_1.bin", "config_2.bin", "sample.csv"]);

    for flag in [None, Some("--unbiased")] {
        let mut args = vec!["triangle", "--beta", "0.2", "--n", "16", "--replicas", "30"];
        args.extend(flag);
        assert_ok(&run_in(dir.path(), &args));
        let text = fs::read_to_string(dir.path().join("triangle.csv")).unwrap();
        let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[4], if flag.is_some() { "unbiased" } else { "plug-in" });
        assert!(row[5].parse::<f64>().unwrap() >= 1.0);
    }
}

#[test]
fn find_critical_writes_certificate() {
    let dir = TempDir::new().unwrap();
    assert_ok(&run_in(dir.path(), &["find-critical", "--n", "256", "--replicas", "32", "--tol", "0.05"]));
    let est: Value = serde_json::from_slice(&fs::read(dir.path().join("critical.json")).unwrap()).unwrap();
    let bc = est["beta_c_hat"].as_f64().unwrap();
    let lo = est["ci"][0].as_f64().unwrap();
    let hi = est["ci"][1].as_f64().unwrap();
    assert!(lo <= bc && bc <= hi && lo < hi);
    assert!(!est["probes"].as_array().unwrap().is_empty());
}

#[test]
fn verify_analytic_rows() {
    let dir = TempDir::new().unwrap();
    assert_ok(&run_in(dir.path(), &["verify-analytic", "--d", "1", "--alpha", "0.5"]));
    let mut r = csv::Reader::from_path(dir.path().join("verify_analytic.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = r.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 9 + 5);
    assert!(rows.iter().all(|row| row[6].parse::<f64>().unwrap() > 0.0));
}

/// Records generated by `chi = xi^a`, `beta = 1 - xi^-a`, a crossover profile
/// and a `t^-1/2` tail: every report exponent is known exactly.
fn fixture(dir: &Path, alpha: f64, n: u64) {
    let m = n / 2;
    let profile = |xi: f64| {
        let mean = (0..=m)
            .map(|r| {
                let r = r as f64;
                if r == 0.0 {
                    1.0
                } else if r <= xi {
                    r.powf(alpha - 1.0)
                } else {
                    xi.powf(2.0 * alpha) * r.powf(-1.0 - alpha)
                }
            })
            .collect();
        ShellProfile::from_values(1, mean, vec![0.0; m as usize + 1]).unwrap()
    };
    let record = |beta: f64, xi: CorrelationLength, chi: f64, shells: ShellProfile| {
        let thresholds = dyadic_thresholds(2 * n + 1);
        SweepRecord {
            beta,
            n,
            m,
            replicas: 1000,
            seed: 0,
            chi,
            chi_stderr: 0.0,
            xi,
            nabla: 2.5,
            s_profile: vec![1.0; m as usize],
            shells,
            tail: TailTable {
                prob: thresholds.iter().map(|&t| (t as f64).powf(-0.5)).collect(),
                stderr: vec![0.0; thresholds.len()],
                thresholds,
            },
        }
    };
    let mut sweep: Vec<SweepRecord> = (2..=9)
        .map(|k| {
            let xi = (1u64 << k) as f64;
            let chi = xi.powf(alpha);
            record(1.0 - 1.0 / chi, CorrelationLength::Finite(1 << k), chi, profile(xi))
        })
        .collect();
    sweep.push(record(1.0, CorrelationLength::AtLeast(m), 1e3, profile(1e9)));
    let critical = CriticalEstimate {
        beta_c_hat: 1.0,
        ci: (0.99, 1.01),
        d: 1,
        alpha,
        n,
        m,
        window: (8, n / 8),
        replicas: 1000,
        seed: 0,
        probes: Vec::new(),
    };
    write_sweep_csv(&sweep, fs::File::create(dir.join("sweep.csv")).unwrap()).unwrap();
    write_critical_json(&critical, fs::File::create(dir.join("critical.json")).unwrap()).unwrap();
}

#[test]
fn report_recovers_fixture_exponents() {
    let dir = TempDir::new().unwrap();
    fixture(dir.path(), 0.25, 4096);
    let out = lrperc(&["report", "--in", dir.path().to_str().unwrap()]);
    assert_ok(&out);
    let report: Value = serde_json::from_slice(&fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    let item = |name: &str| -> Value {
        report["items"].as_array().unwrap().iter().find(|i| i["name"] == name).unwrap().clone()
    };
    for name in ["chi_vs_xi", "gamma", "tail", "far_field", "triangle_vs_xi"] {
        let it = item(name);
        assert_eq!(it["status"], "ok", "{name}");
        let want = it["expected"].as_f64().unwrap();
        let (lo, hi) = (it["ci"][0].as_f64().unwrap(), it["ci"][1].as_f64().unwrap());
        assert!(lo - 1e-9 <= want && want <= hi + 1e-9, "{name}: {want} outside [{lo}, {hi}]");
    }
    // No two_point.csv in the fixture.
    assert!(item("two_point_slope")["status"].as_str().unwrap().starts_with("insufficient data"));
    assert_eq!(item("triangle_ratio_last3")["value"], 1.0);
    assert!(dir.path().join("report.csv").exists());
}
