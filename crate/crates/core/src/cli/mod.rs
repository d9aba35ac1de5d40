//! Command-line front end.
//!
//! Every experiment subcommand reads one JSON config, optionally overrides
//! its seed and output directory, runs, and writes `trace.csv`,
//! `summary.json` and `manifest.json`. The process exits with 0 when the run
//! converged or certified, 2 when it completed but was flagged, and 1 on
//! error.

pub mod config;
pub mod output;
pub mod runs;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

pub use config::ExperimentConfig;
pub use output::{aggregate, Aggregate, RunManifest, RunSummary};
pub use runs::run_experiment;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_FLAGGED: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "manifold-lab", version, about = "Learnability experiments on data manifolds")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Debug, Subcommand)]
pub enum Cmd {
    /// Sample a (labelled) dataset from a manifold.
    Generate(RunArgs),
    /// Train students on random teachers over a hypersphere.
    TrainLearnable(RunArgs),
    /// Train students on lifted parities over the space-filling curve.
    TrainHard(RunArgs),
    /// Variance bound and correlation-scan scaling.
    Sq(RunArgs),
    /// Intrinsic dimension of the sphere suite or a point cloud.
    Iddim(RunArgs),
    /// Cover/packing duality and coupon-collector checks.
    Geometry(RunArgs),
    /// Aggregate `summary.json` files from several runs.
    Summarize(SummarizeArgs),
    /// Run one config under several seeds in child processes.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Run directories, each holding a `summary.json`.
    #[arg(required = true)]
    pub runs: Vec<PathBuf>,
    /// Write the aggregate here as well as to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Seeds as `a..b` (half-open) or a comma-separated list.
    #[arg(long, default_value = "0..5")]
    pub seeds: String,
    /// Parent directory; run `s` goes to `<out>/seed-<s>`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Concurrent child processes.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

/// Subcommand name for a config kind.
pub fn subcommand_for(kind: &str) -> &'static str {
    match kind {
        "generate" => "generate",
        "learnable" => "train-learnable",
        "hard" => "train-hard",
        "sq" => "sq",
        "iddim" => "iddim",
        _ => "geometry",
    }
}

pub fn parse_seeds(spec: &str) -> anyhow::Result<Vec<u64>> {
    let spec = spec.trim();
    if let Some((a, b)) = spec.split_once("..") {
        let a: u64 = a.trim().parse().context("bad seed range start")?;
        let b: u64 = b.trim().parse().context("bad seed range end")?;
        if a >= b {
            bail!("empty seed range {spec}");
        }
        return Ok((a..b).collect());
    }
    let seeds = spec
        .split(',')
        .map(|s| s.trim().parse::<u64>().with_context(|| format!("bad seed {s:?}")))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if seeds.is_empty() {
        bail!("no seeds given");
    }
    Ok(seeds)
}

fn load_config(path: &Path) -> anyhow::Result<(ExperimentConfig, String)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let cfg = ExperimentConfig::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    Ok((cfg, text))
}

fn default_out(cfg: &ExperimentConfig) -> PathBuf {
    cfg.output_dir().cloned().unwrap_or_else(|| PathBuf::from(format!("runs/{}-seed{}", cfg.kind(), cfg.seed())))
}

/// Run one experiment subcommand and return its exit code.
pub fn run_command(expected_kind: &str, args: &RunArgs) -> anyhow::Result<u8> {
    let (mut cfg, text) = load_config(&args.config)?;
    if cfg.kind() != expected_kind {
        bail!(
            "config kind {:?} does not match this subcommand; use `{}`",
            cfg.kind(),
            subcommand_for(cfg.kind())
        );
    }
    if let Some(seed) = args.seed {
        cfg.set_seed(seed);
    }
    let out = args.out.clone().unwrap_or_else(|| default_out(&cfg));
    let manifest = run_experiment(&cfg, &text, &out).with_context(|| format!("{} run failed", cfg.kind()))?;
    eprintln!(
        "{} seed {} finished in {:.1}s -> {}{}",
        manifest.kind,
        manifest.seed,
        manifest.wall_clock_seconds,
        out.display(),
        if manifest.flagged { " (flagged)" } else { "" }
    );
    Ok(if manifest.flagged { EXIT_FLAGGED } else { EXIT_OK })
}

fn read_summary(dir: &Path) -> anyhow::Result<RunSummary> {
    let path = dir.join(output::SUMMARY_FILE);
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn summarize(args: &SummarizeArgs) -> anyhow::Result<u8> {
    let summaries = args.runs.iter().map(|d| read_summary(d)).collect::<anyhow::Result<Vec<_>>>()?;
    let agg = aggregate(&summaries)?;
    let text = serde_json::to_string_pretty(&agg)? + "\n";
    if let Some(out) = &args.out {
        output::write_atomic(out, text.as_bytes())?;
    }
    print!("{text}");
    Ok(EXIT_OK)
}

pub fn sweep(args: &SweepArgs) -> anyhow::Result<u8> {
    let (cfg, _) = load_config(&args.config)?;
    let seeds = parse_seeds(&args.seeds)?;
    let root = args.out.clone().unwrap_or_else(|| PathBuf::from(format!("runs/{}-sweep", cfg.kind())));
    let exe = std::env::current_exe().context("locating own executable")?;
    let sub = subcommand_for(cfg.kind());
    let jobs = args.jobs.max(1);

    let mut codes = Vec::with_capacity(seeds.len());
    for chunk in seeds.chunks(jobs) {
        let children = chunk
            .iter()
            .map(|&s| {
                Command::new(&exe)
                    .arg(sub)
                    .arg("--config")
                    .arg(&args.config)
                    .arg("--seed")
                    .arg(s.to_string())
                    .arg("--out")
                    .arg(root.join(format!("seed-{s}")))
                    .spawn()
                    .with_context(|| format!("spawning seed {s}"))
            })
            .collect::<anyhow::Result<Vec<_>>>()?;
        for (mut child, &s) in children.into_iter().zip(chunk) {
            let status = child.wait()?;
            codes.push((s, status.code()));
        }
    }
    if let Some((s, code)) = codes.iter().find(|(_, c)| !matches!(c, Some(0) | Some(2))) {
        bail!("seed {s} failed with status {code:?}");
    }
    let dirs: Vec<PathBuf> = seeds.iter().map(|s| root.join(format!("seed-{s}"))).collect();
    summarize(&SummarizeArgs { runs: dirs, out: Some(root.join("aggregate.json")) })?;
    Ok(if codes.iter().any(|(_, c)| *c == Some(2)) { EXIT_FLAGGED } else { EXIT_OK })
}

pub fn dispatch(cli: &Cli) -> anyhow::Result<u8> {
    match &cli.command {
        Cmd::Generate(a) => run_command("generate", a),
        Cmd::TrainLearnable(a) => run_command("learnable", a),
        Cmd::TrainHard(a) => run_command("hard", a),
        Cmd::Sq(a) => run_command("sq", a),
        Cmd::Iddim(a) => run_command("iddim", a),
        Cmd::Geometry(a) => run_command("geometry", a),
        Cmd::Summarize(a) => summarize(a),
        Cmd::Sweep(a) => sweep(a),
    }
}

/// Entry point used by the binary.
pub fn main_entry() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
