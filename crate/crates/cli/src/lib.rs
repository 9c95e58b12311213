pub mod commands;
pub mod config;
pub mod error;
pub mod external;
pub mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use tsi_core::shortcuts::FeatureSet;

use crate::config::RunConfig;
use crate::error::CliError;
use crate::output::OutDir;

#[derive(Debug, Parser)]
#[command(name = "tsi", version, about = "Measure how much of a dataset's label information shortcut features carry")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,

    #[command(subcommand)]
    pub command: Command,
}

/// Flags override the matching config-file keys.
#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory (default `tsi_out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    /// Worker threads.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,

    #[arg(long, global = true)]
    pub train: Option<PathBuf>,

    #[arg(long, global = true)]
    pub dev: Option<PathBuf>,

    /// Shortcut feature set, e.g. `P`, `P+S`, `P+S+O`.
    #[arg(long, global = true)]
    pub features: Option<FeatureSet>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Label vocabulary, class balance and label entropy per split.
    Inspect,
    /// Write shortcut features and hashed n-gram vectors.
    Extract,
    /// Train control and full models and report the shortcut index.
    Tsi,
    /// Shortcut index for each configured feature set.
    SweepFeatures,
    /// Shortcut index across training-set fractions and seeds.
    SweepSize,
    /// Learned NLL against exact conditional entropy on the synthetic grid.
    SynthKl,
    /// kNN entropy estimates against the control model's NLL.
    KnnCompare,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Inspect => "inspect",
            Command::Extract => "extract",
            Command::Tsi => "tsi",
            Command::SweepFeatures => "sweep-features",
            Command::SweepSize => "sweep-size",
            Command::SynthKl => "synth-kl",
            Command::KnnCompare => "knn-compare",
        }
    }
}

pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig, CliError> {
    let mut cfg = match &global.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = global.seed {
        cfg.seed = s;
    }
    if let Some(o) = &global.out {
        cfg.out = Some(o.clone());
    }
    if let Some(t) = &global.train {
        cfg.data.train = Some(t.clone());
        cfg.data.planted = None;
    }
    if let Some(d) = &global.dev {
        cfg.data.dev = Some(d.clone());
    }
    if let Some(f) = global.features {
        cfg.shortcuts.features = f;
    }
    cfg.check_paths()?;
    Ok(cfg)
}

/// Runs one command and returns the summary printed to stdout.
pub fn run(cli: &Cli) -> Result<String, CliError> {
    if cli.global.jobs == 0 {
        return Err(CliError::Config("--jobs must be at least 1".into()));
    }
    let cfg = resolve_config(&cli.global)?;
    let root = cfg.out.clone().unwrap_or_else(|| PathBuf::from("tsi_out"));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.jobs)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    pool.install(|| {
        let out = OutDir::open(&root, &cfg.fingerprint(), cli.command.name())?;
        match cli.command {
            Command::Inspect => commands::inspect(&cfg, &out),
            Command::Extract => commands::extract(&cfg, &out),
            Command::Tsi => commands::tsi(&cfg, &out),
            Command::SweepFeatures => commands::sweep_features(&cfg, &out),
            Command::SweepSize => commands::sweep_size(&cfg, &out),
            Command::SynthKl => commands::synth_kl(&cfg, &out),
            Command::KnnCompare => commands::knn_compare(&cfg, &out),
        }
    })
}
