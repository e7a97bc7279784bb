//! `loewner-lab`: command line front end for the Loewner toolkit.
//!
//! Exit codes: 0 on success or PASS, 2 when a check reports FAIL, 1 on usage
//! or runtime errors.

mod commands;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use loewner_core::harness::{RunManifest, SubstreamSeed};
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug, Clone, Serialize, Deserialize)]
#[command(name = "loewner-lab", version, about = "Loewner chain simulation and Monte Carlo checks")]
pub struct Cli {
    /// Master seed for every random substream.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Format of tabular data files.
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Worker threads for Monte Carlo loops; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    pub workers: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Chordal,
    Radial,
}

impl From<ModeArg> for loewner_core::Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Chordal => loewner_core::Mode::Chordal,
            ModeArg::Radial => loewner_core::Mode::Radial,
        }
    }
}

#[derive(Subcommand, Debug, Clone, Serialize, Deserialize)]
pub enum Command {
    /// Sample a √κ·B driver and its trace.
    Simulate(SimulateArgs),
    /// Dirichlet energy of a driver CSV.
    Energy(EnergyArgs),
    /// Recover the driver of a chordal trace CSV.
    Unzip(UnzipArgs),
    /// Rare-event probabilities across a decreasing κ grid.
    Rate(RateArgs),
    /// Return-event probabilities against the outer radius N.
    ReturnProb(ReturnProbArgs),
    /// Bessel hitting frequency against the exact probability.
    BesselCheck(BesselArgs),
    /// Violation frequencies of the modulus and derivative sets.
    Tightness(TightnessArgs),
    /// Distance between two trace CSVs.
    Metrics(MetricsArgs),
    /// Mean of the radial/chordal weight.
    RnCheck(RnArgs),
    /// Independent chords for a link pattern and their loop-free potential.
    Multichordal(MultichordalArgs),
    /// Rerun the experiment recorded in a manifest and compare digests.
    VerifyManifest(VerifyArgs),
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct SimulateArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Chordal)]
    pub mode: ModeArg,
    #[arg(long)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 512)]
    pub steps: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct EnergyArgs {
    /// Driver CSV with header `t,w`.
    #[arg(long)]
    pub driver: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Chordal)]
    pub mode: ModeArg,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct UnzipArgs {
    /// Trace CSV with header `t,re,im`.
    #[arg(long)]
    pub trace: PathBuf,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Cone,
    Return,
    TargetBall,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RateArgs {
    #[arg(long, value_enum)]
    pub event: EventKind,
    /// Cone half-angle from the real axis.
    #[arg(long, default_value_t = std::f64::consts::FRAC_PI_3)]
    pub theta: f64,
    /// Cone event radius; target ball radius.
    #[arg(long, default_value_t = 1.0)]
    pub radius: f64,
    #[arg(long, default_value_t = 1)]
    pub n: u32,
    #[arg(long = "big-n", default_value_t = 2)]
    pub big_n: u32,
    #[arg(long, value_enum, default_value_t = ModeArg::Chordal)]
    pub mode: ModeArg,
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.25,0.125")]
    pub kappas: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    pub samples: usize,
    #[arg(long, default_value_t = 128)]
    pub steps: usize,
    #[arg(long)]
    pub horizon: Option<f64>,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct ReturnProbArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Chordal)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    pub n: u32,
    #[arg(long = "big-ns", value_delimiter = ',', default_value = "2,4")]
    pub big_ns: Vec<u32>,
    #[arg(long, default_value_t = 3.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 512)]
    pub steps: usize,
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long, default_value_t = 0.5)]
    pub slack: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct BesselArgs {
    #[arg(long, default_value_t = 2.0)]
    pub a: f64,
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    pub x0: f64,
    #[arg(long, default_value_t = 0.5)]
    pub delta: f64,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub dt: f64,
    /// Paths stop once |X| exceeds this multiple of |x0|.
    #[arg(long, default_value_t = 1000.0)]
    pub escape_factor: f64,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct TightnessArgs {
    #[arg(long, value_delimiter = ',', default_value = "1,0.5,0.25,0.125")]
    pub kappas: Vec<f64>,
    #[arg(long, value_delimiter = ',', default_value = "8,32,128")]
    pub ns: Vec<usize>,
    #[arg(long, default_value_t = 500)]
    pub samples: usize,
    #[arg(long, default_value_t = 1024)]
    pub steps: usize,
    /// y levels for the derivative set; 0 skips it.
    #[arg(long, default_value_t = 0)]
    pub l_y_grid: usize,
    #[arg(long, default_value_t = 1.0)]
    pub c1: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub c3: f64,
    #[arg(long, default_value_t = 0.5)]
    pub beta: f64,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MetricKind {
    Hausdorff,
    Sup,
    Frechet,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct MetricsArgs {
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long, value_enum)]
    pub metric: MetricKind,
    #[arg(long, value_enum, default_value_t = ModeArg::Chordal)]
    pub mode: ModeArg,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct RnArgs {
    #[arg(long, default_value_t = 2.0)]
    pub kappa: f64,
    /// Capacity-time horizon T.
    #[arg(long, default_value_t = 0.5)]
    pub horizon: f64,
    #[arg(long, default_value_t = 0.3)]
    pub delta: f64,
    #[arg(long, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, default_value_t = 1000)]
    pub steps: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct MultichordalArgs {
    /// Pattern JSON `{"n":..,"pairs":[[a,b],..],"points":[..]}`.
    #[arg(long)]
    pub pattern: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    pub kappa: f64,
    #[arg(long, default_value_t = 1.0)]
    pub horizon: f64,
    #[arg(long, default_value_t = 256)]
    pub steps: usize,
    /// Unzipping resolution per chord.
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,
}

#[derive(Args, Debug, Clone, Serialize, Deserialize)]
pub struct VerifyArgs {
    /// Path to a `manifest.json`.
    pub manifest: PathBuf,
}

/// What a subcommand produced.
pub struct RunOutput {
    pub files: Vec<String>,
    pub seeds: Vec<SubstreamSeed>,
    /// `Some(false)` maps to exit code 2.
    pub verdict: Option<bool>,
    pub summary: serde_json::Value,
}

fn absolutize(p: &mut PathBuf) -> Result<()> {
    *p = fs::canonicalize(&*p).with_context(|| format!("cannot open {}", p.display()))?;
    Ok(())
}

/// Input paths are stored absolute so the manifest can be replayed from anywhere.
fn absolutize_inputs(cli: &mut Cli) -> Result<()> {
    match &mut cli.command {
        Command::Energy(a) => absolutize(&mut a.driver),
        Command::Unzip(a) => absolutize(&mut a.trace),
        Command::Metrics(a) => absolutize(&mut a.a).and_then(|_| absolutize(&mut a.b)),
        Command::Multichordal(a) => absolutize(&mut a.pattern),
        _ => Ok(()),
    }
}

fn subcommand_name(c: &Command) -> &'static str {
    match c {
        Command::Simulate(_) => "simulate",
        Command::Energy(_) => "energy",
        Command::Unzip(_) => "unzip",
        Command::Rate(_) => "rate",
        Command::ReturnProb(_) => "return-prob",
        Command::BesselCheck(_) => "bessel-check",
        Command::Tightness(_) => "tightness",
        Command::Metrics(_) => "metrics",
        Command::RnCheck(_) => "rn-check",
        Command::Multichordal(_) => "multichordal",
        Command::VerifyManifest(_) => "verify-manifest",
    }
}

/// Runs one experiment into `cli.out` and writes its manifest.
pub fn execute(cli: &Cli) -> Result<RunOutput> {
    fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;
    let start = Instant::now();
    let out = commands::run(cli)?;
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        subcommand: subcommand_name(&cli.command).to_string(),
        params: serde_json::to_value(cli)?,
        master_seed: cli.seed,
        substream_seeds: out.seeds.clone(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
        outputs: RunManifest::digest_outputs(&cli.out, &out.files)?,
    };
    manifest.write(&cli.out)?;
    Ok(out)
}

/// Replays a manifest into a scratch directory; PASS iff every digest matches.
fn verify_manifest(path: &Path, workers_override: Option<usize>) -> Result<RunOutput> {
    let manifest = RunManifest::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut replay: Cli = serde_json::from_value(manifest.params.clone()).context("manifest params do not parse")?;
    if matches!(replay.command, Command::VerifyManifest(_)) {
        bail!("refusing to verify a verify-manifest manifest");
    }
    let scratch = std::env::temp_dir().join(format!("loewner-verify-{}-{}", std::process::id(), manifest.master_seed));
    if scratch.exists() {
        fs::remove_dir_all(&scratch)?;
    }
    replay.out = scratch.clone();
    if let Some(w) = workers_override {
        replay.workers = w;
    }
    execute(&replay)?;
    let fresh = RunManifest::read(&scratch.join("manifest.json"))?;
    let mismatches: Vec<String> = manifest
        .outputs
        .iter()
        .filter(|o| !fresh.outputs.iter().any(|f| f.file == o.file && f.sha256 == o.sha256))
        .map(|o| o.file.clone())
        .collect();
    fs::remove_dir_all(&scratch).ok();
    Ok(RunOutput {
        files: vec![],
        seeds: vec![],
        verdict: Some(mismatches.is_empty()),
        summary: serde_json::json!({
            "manifest": path.display().to_string(),
            "files_checked": manifest.outputs.len(),
            "mismatches": mismatches,
            "workers": replay.workers,
            "pass": mismatches.is_empty(),
        }),
    })
}

fn real_main() -> Result<ExitCode> {
    let mut cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            e.print().ok();
            return Ok(ExitCode::from(code));
        }
    };
    let out = if let Command::VerifyManifest(v) = &cli.command {
        // An explicit --workers on the command line overrides the recorded one.
        let explicit = std::env::args().any(|a| a == "--workers" || a.starts_with("--workers="));
        verify_manifest(&v.manifest, explicit.then_some(cli.workers))?
    } else {
        absolutize_inputs(&mut cli)?;
        execute(&cli)?
    };
    println!("{}", serde_json::to_string_pretty(&out.summary)?);
    Ok(match out.verdict {
        Some(false) => ExitCode::from(2),
        _ => ExitCode::SUCCESS,
    })
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
