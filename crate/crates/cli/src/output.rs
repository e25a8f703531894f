//! Artifact files and the run manifest.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::Serialize;
use serde_json::Value;

use lrperc::io::fnv1a64;
use lrperc::Kernel;

use crate::error::CliError;

pub const MANIFEST: &str = "manifest.json";

/// Output files held in memory until the command has finished.
#[derive(Default)]
pub struct Artifacts {
    files: Vec<(String, Vec<u8>)>,
}

impl Artifacts {
    pub fn add(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.push((name.to_string(), bytes));
    }
}

#[derive(Serialize)]
struct OutputDigest<'a> {
    file: &'a str,
    bytes: usize,
    fnv1a64: String,
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema: u32,
    command: &'a str,
    kernel: Option<&'a Kernel>,
    params: &'a Value,
    seed: Option<u64>,
    threads: usize,
    wall_clock_seconds: f64,
    core_seconds: f64,
    outputs: Vec<OutputDigest<'a>>,
}

/// Run metadata known before the outputs are written.
pub struct RunInfo<'a> {
    pub command: &'a str,
    pub kernel: Option<&'a Kernel>,
    pub params: Value,
    pub seed: Option<u64>,
    pub threads: usize,
    pub started: Instant,
}

/// User plus system CPU time of this process.
pub fn core_seconds() -> f64 {
    // SAFETY: getrusage only writes into the zeroed struct we pass.
    let usage = unsafe {
        let mut u: libc::rusage = std::mem::zeroed();
        if libc::getrusage(libc::RUSAGE_SELF, &mut u) != 0 {
            return f64::NAN;
        }
        u
    };
    let tv = |t: libc::timeval| t.tv_sec as f64 + t.tv_usec as f64 * 1e-6;
    tv(usage.ru_utime) + tv(usage.ru_stime)
}

/// Writes `bytes` to `dir/name` through a temporary file and a rename.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8]) -> Result<(), CliError> {
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", target.display()));
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    drop(f);
    fs::rename(&tmp, &target).map_err(io)
}

/// Writes every artifact, then `manifest.json` with their digests.
pub fn emit_outputs(artifacts: &Artifacts, out_dir: &Path, info: &RunInfo<'_>) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    for (name, bytes) in &artifacts.files {
        write_atomic(out_dir, name, bytes)?;
    }
    let manifest = Manifest {
        schema: 1,
        command: info.command,
        kernel: info.kernel,
        params: &info.params,
        seed: info.seed,
        threads: info.threads,
        wall_clock_seconds: info.started.elapsed().as_secs_f64(),
        core_seconds: core_seconds(),
        outputs: artifacts
            .files
            .iter()
            .map(|(name, bytes)| OutputDigest {
                file: name,
                bytes: bytes.len(),
                fnv1a64: format!("{:016x}", fnv1a64(bytes)),
            })
            .collect(),
    };
    let mut text = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    text.push(b'\n');
    write_atomic(out_dir, MANIFEST, &text)
}
