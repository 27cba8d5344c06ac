//! `dropin`: experiment driver for DropIn echo state networks.

mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dropin_core::data::SynthParams;
use dropin_core::TaskMode;

use crate::config::{ExperimentConfig, GridPreset, Purpose};
use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "dropin",
    version,
    about = "Train and evaluate DropIn echo state networks"
)]
struct Cli {
    /// Worker threads for grid search and ablation (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert the UCI movement archive into the canonical dataset layout.
    ImportUci {
        /// Archive root (contains dataset/ and groups/).
        #[arg(long)]
        dir: PathBuf,
        /// Import manifest JSON; the bundled movement manifest by default.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate a synthetic dataset with redundant input channels.
    Synth(SynthArgs),
    /// Train one model from the `model` section of the config.
    Train {
        #[command(flatten)]
        run: RunArgs,
        /// Retention probability, overriding `model.retention_p`.
        #[arg(long)]
        p: Option<f64>,
    },
    /// Cross-validated grid search, refit of the winner and test scoring.
    Gridsearch {
        #[command(flatten)]
        run: RunArgs,
        /// Retention probabilities to search, overriding `grid.retention_p`.
        #[arg(long, value_delimiter = ',')]
        p: Option<Vec<f64>>,
        /// Use the reduced grid.
        #[arg(long, conflicts_with = "full_grid")]
        fast: bool,
        /// Use the full grid.
        #[arg(long)]
        full_grid: bool,
    },
    /// Print the metric of a saved model on a canonical dataset.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated 0-based features held at zero.
        #[arg(long, value_delimiter = ',')]
        missing: Vec<usize>,
    },
    /// Metric for every subset of up to `k_max` missing features.
    Ablate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        k_max: usize,
        /// Comma-separated 0-based features to remove (default: all).
        #[arg(long, value_delimiter = ',')]
        ablatable: Option<Vec<usize>>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write predictions for one sequence file.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Sequence CSV with header `t,u_1..u_N` and optional target columns.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, value_delimiter = ',')]
        missing: Vec<usize>,
        /// Output CSV (default: stdout).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Config location and overrides shared by `train` and `gridsearch`.
/// Flags take precedence over the environment, which is only consulted
/// for the config path; flags also override fields inside the file.
#[derive(Debug, Args)]
struct RunArgs {
    #[arg(long, env = "DROPIN_CONFIG")]
    config: PathBuf,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed_weights: Option<u64>,
    #[arg(long)]
    seed_shuffle: Option<u64>,
    #[arg(long)]
    seed_mask: Option<u64>,
}

impl RunArgs {
    fn load(&self) -> CliResult<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output_dir = out.clone();
        }
        if let Some(s) = self.seed_weights {
            cfg.seeds.weights = s;
        }
        if let Some(s) = self.seed_shuffle {
            cfg.seeds.shuffle = s;
        }
        if let Some(s) = self.seed_mask {
            cfg.seeds.mask = s;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct SynthArgs {
    /// Base parameters as JSON; flags override individual fields.
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    n_sequences: Option<usize>,
    #[arg(long)]
    seq_len: Option<usize>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    noise_std: Option<f64>,
    #[arg(long, value_parser = parse_task)]
    task: Option<TaskMode>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

fn parse_task(s: &str) -> Result<TaskMode, String> {
    match s {
        "regression" => Ok(TaskMode::PerStepRegression),
        "classification" => Ok(TaskMode::LastStepClassification),
        _ => Err(format!(
            "unknown task `{s}` (expected regression or classification)"
        )),
    }
}

impl SynthArgs {
    fn params(&self) -> CliResult<SynthParams> {
        let mut p = match &self.params {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
                serde_json::from_str(&text)
                    .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?
            }
            None => SynthParams::default(),
        };
        if let Some(v) = self.n_sequences {
            p.n_sequences = v;
        }
        if let Some(v) = self.seq_len {
            p.seq_len = v;
        }
        if let Some(v) = self.channels {
            p.n_channels = v;
        }
        if let Some(v) = self.noise_std {
            p.noise_std = v;
        }
        if let Some(v) = self.task {
            p.task_mode = v;
        }
        if let Some(v) = self.seed {
            p.seed = v;
        }
        Ok(p)
    }
}

fn run(cli: Cli) -> CliResult<()> {
    if let Some(n) = cli.jobs {
        if n == 0 {
            return Err(CliError::Config("--jobs must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    }
    match cli.command {
        Command::ImportUci { dir, manifest, out } => {
            commands::import_uci(&dir, manifest.as_deref(), &out)
        }
        Command::Synth(args) => commands::synth(&args.params()?, &args.out),
        Command::Train { run, p } => {
            let mut cfg = run.load()?;
            if let (Some(p), Some(m)) = (p, cfg.model.as_mut()) {
                m.retention_p = p;
            }
            cfg.validate(Purpose::Train)?;
            commands::train(&cfg)
        }
        Command::Gridsearch {
            run,
            p,
            fast,
            full_grid,
        } => {
            let mut cfg = run.load()?;
            let grid = cfg.grid.get_or_insert_with(Default::default);
            if fast {
                grid.preset = GridPreset::Fast;
            }
            if full_grid {
                grid.preset = GridPreset::Full;
            }
            if let Some(p) = p {
                grid.retention_p = Some(p);
            }
            cfg.validate(Purpose::GridSearch)?;
            commands::gridsearch(&cfg, cli.jobs)
        }
        Command::Evaluate {
            model,
            data,
            missing,
        } => commands::evaluate(&model, &data, &missing),
        Command::Ablate {
            model,
            data,
            k_max,
            ablatable,
            out,
        } => commands::ablate(&model, &data, k_max, ablatable.as_deref(), &out),
        Command::Predict {
            model,
            input,
            missing,
            out,
        } => commands::predict(&model, &input, &missing, out.as_deref()),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp_millis()
        .init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!(
                "error category={} message={:?}",
                e.category().as_str(),
                e.to_string()
            );
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
