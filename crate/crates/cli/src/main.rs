//! `coarray-mimo`: geometry reports, SNR sweeps and result comparison.
//!
//! Exit codes: 0 success, 1 runtime failure (or a violated expectation in
//! `compare`), 2 usage or configuration error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use coarray_mimo::compare::{check_expectation, compare_pair, ExpectationFile, Metric};
use coarray_mimo::metrics::{complexity_report_timed, sinr};
use coarray_mimo::sim::{noise_power_for_snr, stream_rng, Stream, VERSION};
use coarray_mimo::{
    augmented_manifold, draw_channel, run_sweep, AnglePolicy, CovarianceMode, Error, ExperimentConfig, FilterBank,
    GeometryReport, GeometrySpec, LinearModel, SnrRange, SweepResult,
};

#[derive(Parser, Debug)]
#[command(name = "coarray-mimo", version, about = "Sparse-array multiuser uplink simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print sensor positions, co-array profile and virtual extent as JSON.
    Geometry(GeometryArgs),
    /// Run an SNR sweep from an experiment file.
    Sweep(SweepArgs),
    /// Paired comparison of two or more sweep results (JSON files).
    Compare(CompareArgs),
    /// One channel draw: per-user SINR, sum-rate and filter-design cost.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct GeometryArgs {
    /// Geometry spec, e.g. tlna:4,4, cpa:5,2, ula:16 or custom:0,1,4.
    spec: Option<String>,
    #[arg(long = "geometry", conflicts_with = "spec")]
    geometry: Option<String>,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Experiment file (.toml, or .json).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    trials: Option<usize>,
    /// SNR grid as start:step:stop in dB.
    #[arg(long, allow_hyphen_values = true)]
    snr: Option<String>,
    /// Run a single array instead of the file's list.
    #[arg(long)]
    geometry: Option<String>,
    /// exact or sample covariance for filter design.
    #[arg(long)]
    mode: Option<String>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// Sweep result JSON files; the first is compared against each other.
    files: Vec<PathBuf>,
    /// asr, ber_mmse, ber_osic or all.
    #[arg(long, default_value = "all")]
    metric: String,
    /// Expected orderings (TOML or JSON list under `expect`).
    #[arg(long)]
    expect: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct InspectArgs {
    #[arg(long)]
    geometry: String,
    #[arg(long, default_value_t = 8)]
    users: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0)]
    trial: usize,
    #[arg(long, default_value_t = 10.0, allow_hyphen_values = true)]
    snr: f64,
}

/// Failure split by exit code.
#[derive(Debug)]
enum Failure {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }
}

/// Configuration-shaped library errors are usage errors.
fn classify(e: Error) -> Failure {
    match e {
        Error::Config { .. } | Error::Parse { .. } | Error::NonCoprime { .. } | Error::InvalidParameter(_) => {
            Failure::Usage(e.into())
        }
        other => Failure::Runtime(other.into()),
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(anyhow!(msg.into()))
}

fn runtime(e: anyhow::Error) -> Failure {
    Failure::Runtime(e)
}

type CliResult<T> = std::result::Result<T, Failure>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Geometry(a) => cmd_geometry(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            let e = match &f {
                Failure::Usage(e) | Failure::Runtime(e) => e,
            };
            eprintln!("error: {e:#}");
            ExitCode::from(f.code())
        }
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents)
        .with_context(|| format!("writing {}", path.display()))
        .map_err(runtime)
}

fn cmd_geometry(a: GeometryArgs) -> CliResult<u8> {
    let spec = a.spec.or(a.geometry).ok_or_else(|| usage("missing geometry spec (e.g. tlna:4,4)"))?;
    let spec: GeometrySpec = spec.parse().map_err(classify)?;
    let layout = spec.0.build().map_err(classify)?;
    let report = GeometryReport::new(&layout).map_err(classify)?;
    let json = serde_json::to_string_pretty(&report).map_err(|e| runtime(e.into()))? + "\n";
    print!("{json}");
    if let Some(out) = a.out {
        write_file(&out, &json)?;
    }
    Ok(0)
}

/// Reproduction record written next to the results.
#[derive(Debug, Serialize, Deserialize)]
struct RunManifest {
    /// SHA-256 of the effective experiment config (after overrides).
    config_digest: String,
    seed: u64,
    timestamp_unix: u64,
    version: String,
    outputs: Vec<String>,
    config: ExperimentConfig,
}

fn config_digest(c: &ExperimentConfig) -> String {
    hex::encode(Sha256::digest(c.canonical_json().as_bytes()))
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { '_' })
        .collect()
}

fn effective_config(a: &SweepArgs) -> CliResult<ExperimentConfig> {
    if !a.config.is_file() {
        return Err(usage(format!("config file {} does not exist", a.config.display())));
    }
    let mut cfg = ExperimentConfig::from_path(&a.config).map_err(classify)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(trials) = a.trials {
        cfg.trials = trials;
    }
    if let Some(snr) = &a.snr {
        cfg.snr = Some(snr.parse::<SnrRange>().map_err(classify)?);
        cfg.snr_grid_db = None;
    }
    if let Some(g) = &a.geometry {
        cfg.arrays = vec![g.parse().map_err(classify)?];
    }
    if let Some(m) = &a.mode {
        cfg.covariance_mode = m.parse::<CovarianceMode>().map_err(classify)?;
    }
    Ok(cfg)
}

fn cmd_sweep(a: SweepArgs) -> CliResult<u8> {
    let cfg = effective_config(&a)?;
    let sims = cfg.sim_configs().map_err(classify)?;
    fs::create_dir_all(&a.out)
        .with_context(|| format!("creating {}", a.out.display()))
        .map_err(runtime)?;

    let mut outputs = Vec::new();
    for sim in &sims {
        let start = std::time::Instant::now();
        let result = run_sweep::<f64>(sim).map_err(|e| runtime(e.into()))?;
        eprintln!(
            "{}: {} trials x {} SNR points in {:.1} s",
            result.label(),
            sim.trials,
            sim.snr_grid_db.len(),
            start.elapsed().as_secs_f64()
        );
        let stem = file_stem(&result.label());
        let json = result.to_json().map_err(|e| runtime(e.into()))?;
        for (ext, body) in [("csv", result.to_csv()), ("json", json), ("dat", result.to_gnuplot())] {
            let path = a.out.join(format!("{stem}.{ext}"));
            write_file(&path, &body)?;
            outputs.push(path.display().to_string());
        }
    }

    let manifest = RunManifest {
        config_digest: config_digest(&cfg),
        seed: cfg.seed,
        timestamp_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        version: VERSION.to_string(),
        outputs,
        config: cfg,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| runtime(e.into()))? + "\n";
    write_file(&a.out.join("manifest.json"), &text)?;
    println!("wrote {} (digest {})", a.out.display(), manifest.config_digest);
    Ok(0)
}

fn load_result(path: &Path) -> CliResult<SweepResult> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    SweepResult::from_json(&text).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn parse_metrics(s: &str) -> CliResult<Vec<Metric>> {
    match s {
        "all" => Ok(Metric::ALL.to_vec()),
        other => Metric::ALL
            .into_iter()
            .find(|m| m.name() == other)
            .map(|m| vec![m])
            .ok_or_else(|| usage(format!("unknown metric {other:?} (asr, ber_mmse, ber_osic, all)"))),
    }
}

fn load_expectations(path: &Path) -> CliResult<ExpectationFile> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let parsed = if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn cmd_compare(a: CompareArgs) -> CliResult<u8> {
    if a.files.len() < 2 {
        return Err(usage("compare needs at least two result files"));
    }
    let metrics = parse_metrics(&a.metric)?;
    let results = a.files.iter().map(|p| load_result(p)).collect::<CliResult<Vec<_>>>()?;
    for other in &results[1..] {
        for &m in &metrics {
            let c = compare_pair(&results[0], other, m).map_err(classify)?;
            println!("{}", c.table());
        }
    }
    let Some(path) = a.expect else {
        return Ok(0);
    };
    let file = load_expectations(&path)?;
    let mut violated = 0;
    for e in &file.expect {
        let out = check_expectation(&results, e).map_err(classify)?;
        if out.holds() {
            println!("expectation {} > {} on {}: holds", e.better, e.worse, e.metric.name());
        } else {
            violated += 1;
            println!(
                "expectation {} > {} on {}: VIOLATED at snr_db {:?}",
                e.better,
                e.worse,
                e.metric.name(),
                out.violations
            );
            println!("{}", out.comparison.table());
        }
    }
    Ok(if violated == 0 { 0 } else { 1 })
}

#[derive(Serialize)]
struct InspectReport {
    geometry: String,
    snr_db: f64,
    half_extent: Option<usize>,
    channel: coarray_mimo::channel::ChannelExport,
    sinr_db: Vec<f64>,
    asr: f64,
    complexity: coarray_mimo::ComplexityReport,
}

fn cmd_inspect(a: InspectArgs) -> CliResult<u8> {
    let spec: GeometrySpec = a.geometry.parse().map_err(classify)?;
    let mut sim = coarray_mimo::SimConfig::new(spec.clone(), a.users, vec![a.snr], a.seed);
    sim.trials = 1;
    let (layout, j) = sim.validate().map_err(classify)?;
    let mut rng = stream_rng(a.seed, a.trial, 0, Stream::Channel);
    let channel = draw_channel::<f64, _>(&mut rng, &layout, a.users, &AnglePolicy::default(), sim.d_over_lambda)
        .map_err(|e| runtime(e.into()))?;
    let noise = noise_power_for_snr(a.snr);
    let powers = vec![1.0; a.users];
    let model = match j {
        Some(j) => {
            let m = augmented_manifold(&channel, j).map_err(|e| runtime(e.into()))?;
            let omega = m.virtual_source_powers(&powers).map_err(|e| runtime(e.into()))?;
            LinearModel::augmented(&m, omega, noise)
        }
        None => LinearModel::physical(&channel, powers, noise),
    }
    .map_err(|e| runtime(e.into()))?;
    let bank = FilterBank::design(&model).map_err(|e| runtime(e.into()))?;
    let sinr_db = (0..a.users)
        .map(|k| sinr(&bank.filter(k), &model, k).map(|s| 10.0 * s.log10()))
        .collect::<coarray_mimo::Result<Vec<_>>>()
        .map_err(|e| runtime(e.into()))?;
    let asr = coarray_mimo::achievable_sum_rate(&bank, &model).map_err(|e| runtime(e.into()))?;
    let complexity = complexity_report_timed(&model, 5, 20).map_err(|e| runtime(e.into()))?;
    let report = InspectReport {
        geometry: spec.to_string(),
        snr_db: a.snr,
        half_extent: j,
        channel: channel.to_export(),
        sinr_db,
        asr,
        complexity,
    };
    println!("{}", serde_json::to_string_pretty(&report).map_err(|e| runtime(e.into()))?);
    Ok(0)
}
