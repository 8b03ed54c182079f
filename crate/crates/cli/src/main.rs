//! `dualchannel` command-line front end.
//!
//! Every command writes its results, a `config.json` echo that can be fed
//! back through `--config` to reproduce them, and a `manifest.json` with
//! SHA-256 digests of inputs and outputs. Results are computed in memory
//! first, so a failing run leaves no partial output.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use dualchannel::io::{self, json_bytes, read_dataset, sha256_hex};
use dualchannel::panel::Year;
use dualchannel::report::{analyze, digests, render, AnalysisConfig, Stages};
use dualchannel::simulate::{generate, SimConfig, SCHEMA_VERSION};

#[derive(Parser)]
#[command(name = "dualchannel", version, about = "Spatial and network diffusion analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset.
    Simulate(Common),
    /// Run every analysis stage on a dataset.
    Replicate(Analysis),
    /// lambda_2 series and mixing times.
    Spectral(Analysis),
    /// Spatial decay fits.
    FitDecay(Analysis),
    /// Traditional, spatial and network DID with pre-trend and placebo tests.
    EventStudy(EventArgs),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration (all fields optional).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Root random seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct Analysis {
    /// Dataset directory with firms.csv, panel.csv and edges.csv.
    dataset: PathBuf,
    #[command(flatten)]
    common: Common,
    /// Threshold for the spatial boundary and mixing time.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Firm-cluster bootstrap replicates per interval.
    #[arg(long)]
    bootstrap_reps: Option<usize>,
    /// Largest network solved densely if Lanczos fails.
    #[arg(long)]
    dense_cap: Option<usize>,
}

#[derive(Args)]
struct EventArgs {
    #[command(flatten)]
    analysis: Analysis,
    /// Comma-separated placebo event years.
    #[arg(long, value_delimiter = ',')]
    placebo_years: Option<Vec<Year>>,
}

/// Configuration document for every command.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct RunConfig {
    simulate: SimConfig,
    analysis: AnalysisConfig,
}

fn load_config(path: Option<&Path>) -> Result<RunConfig> {
    let Some(path) = path else {
        return Ok(RunConfig::default());
    };
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("{}: {e}", path.display()))
}

#[derive(Serialize)]
struct Manifest<'a> {
    schema_version: &'a str,
    command: &'a str,
    inputs: std::collections::BTreeMap<String, String>,
    outputs: std::collections::BTreeMap<String, String>,
}

/// Write `files` plus the config echo and manifest into `out`.
fn emit(
    out: &Path,
    command: &str,
    cfg: &RunConfig,
    inputs: &[PathBuf],
    mut files: Vec<(String, Vec<u8>)>,
) -> Result<()> {
    files.push(("config.json".into(), json_bytes(cfg)?));
    let mut input_digests = std::collections::BTreeMap::new();
    for p in inputs {
        let bytes = fs::read(p).with_context(|| format!("reading {}", p.display()))?;
        let name = p.file_name().map_or_else(|| p.display().to_string(), |n| n.to_string_lossy().into_owned());
        input_digests.insert(name, sha256_hex(&bytes));
    }
    let manifest =
        Manifest { schema_version: SCHEMA_VERSION, command, inputs: input_digests, outputs: digests(&files) };
    files.push(("manifest.json".into(), json_bytes(&manifest)?));
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    for (name, bytes) in &files {
        let p = out.join(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn simulate(args: &Common) -> Result<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(s) = args.seed {
        cfg.simulate.seed = s;
    }
    let ds = generate(&cfg.simulate)?;
    emit(&args.out, "simulate", &cfg, &[], io::dataset_files(&ds)?)
}

fn analysis_config(a: &Analysis) -> Result<RunConfig> {
    let mut cfg = load_config(a.common.config.as_deref())?;
    let c = &mut cfg.analysis;
    if let Some(s) = a.common.seed {
        c.seed = s;
    }
    if let Some(e) = a.epsilon {
        c.epsilon = e;
    }
    if let Some(b) = a.bootstrap_reps {
        c.bootstrap_reps = b;
    }
    if let Some(d) = a.dense_cap {
        c.dense_cap = d;
    }
    Ok(cfg)
}

fn run_analysis(command: &str, a: &Analysis, cfg: RunConfig, stages: Stages) -> Result<()> {
    if let (Ok(d), Ok(o)) = (a.dataset.canonicalize(), a.common.out.canonicalize()) {
        if d == o {
            bail!("output directory {} is the dataset directory; refusing to write next to inputs", o.display());
        }
    }
    cfg.analysis.validate()?;
    let ds = read_dataset(&a.dataset)?;
    let report = analyze(&ds, &cfg.analysis, stages)?;
    let files = render(&report)?;
    let mut inputs: Vec<PathBuf> =
        [io::FIRMS_FILE, io::PANEL_FILE, io::EDGES_FILE].iter().map(|f| a.dataset.join(f)).collect();
    if a.dataset.join(io::LOG_FILE).exists() {
        inputs.push(a.dataset.join(io::LOG_FILE));
    }
    emit(&a.common.out, command, &cfg, &inputs, files)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate(c) => simulate(c),
        Command::Replicate(a) => run_analysis("replicate", a, analysis_config(a)?, Stages::ALL),
        Command::Spectral(a) => run_analysis("spectral", a, analysis_config(a)?, Stages::SPECTRAL),
        Command::FitDecay(a) => run_analysis("fit-decay", a, analysis_config(a)?, Stages::DECAY),
        Command::EventStudy(e) => {
            let mut cfg = analysis_config(&e.analysis)?;
            if let Some(y) = &e.placebo_years {
                cfg.analysis.placebo_years = y.clone();
            }
            run_analysis("event-study", &e.analysis, cfg, Stages::EVENT_STUDY)
        }
    }
}
