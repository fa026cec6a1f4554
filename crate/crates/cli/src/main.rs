mod commands;
mod svg;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, DataArgs, Output, RunConfig, TrainArgs};
use smoothctl::experiments::DEFAULT_SWEEP_SLOPE;
use smoothctl::models::LayerKind;

#[derive(Parser)]
#[command(
    name = "smoothctl",
    version,
    about = "Smoothness of graph convolutional features: checks and experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory, created if missing.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads for independent properties, sweep points and seeds.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct Data {
    /// Generate the two-community SBM benchmark from --seed.
    #[arg(long)]
    synthetic: bool,
    /// Edge list, one `u v` pair per line.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// CSV with one row per node.
    #[arg(long)]
    features: Option<PathBuf>,
    /// One integer label per line.
    #[arg(long)]
    labels: Option<PathBuf>,
    /// JSON object with `train`, `val` and `test` node lists.
    #[arg(long)]
    splits: Option<PathBuf>,
    /// JSON with optional `model`, `train` and `sbm` sections.
    #[arg(long)]
    config: Option<PathBuf>,
}

impl Data {
    fn args(&self) -> DataArgs<'_> {
        DataArgs {
            synthetic: self.synthetic,
            graph: self.graph.as_deref(),
            features: self.features.as_deref(),
            labels: self.labels.as_deref(),
            splits: self.splits.as_deref(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run every registered property and write verify.json.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Corrupt one residual of the named property (negative control).
        #[arg(long, hide = true)]
        inject_fault: Option<String>,
    },
    /// Sweep the eigenspace shift for ReLU and leaky ReLU on a random graph.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = DEFAULT_SWEEP_SLOPE)]
        slope: f64,
    },
    /// Iterate the two-node system from a grid of starting points.
    Trajectory {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
        alpha: f64,
    },
    /// Per-layer, per-dimension normalized smoothness of a trained model.
    Heatmap {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        /// model.json written by `train`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Train a model for node classification.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        data: Data,
        /// gcn, gcn-sct, gcnii, gcnii-sct, egnn or egnn-sct.
        #[arg(long, value_parser = parse_kind)]
        kind: Option<LayerKind>,
        #[arg(long)]
        layers: Option<usize>,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        dropout: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        /// Independent runs with seeds seed, seed+1, ...
        #[arg(long, default_value_t = 1)]
        runs: usize,
    },
    /// Two-sample t-score of two accuracy lists of equal length.
    Ttest {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<LayerKind, String> {
    s.parse().map_err(|e: smoothctl::Error| e.to_string())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Verify { common, inject_fault } => {
            let seed = commands::require_seed(common.seed, "verify")?;
            let out = Output::new(&common.out)?;
            commands::verify(seed, &out, common.jobs, inject_fault.as_deref())
        }
        Command::Sweep { common, slope } => {
            let seed = commands::require_seed(common.seed, "sweep")?;
            let out = Output::new(&common.out)?;
            commands::sweep(seed, slope, &out, common.jobs)
        }
        Command::Trajectory { common, alpha } => {
            if !alpha.is_finite() {
                return Err(CliError::Input(format!("--alpha must be finite, got {alpha}")));
            }
            commands::trajectory(alpha, &Output::new(&common.out)?)
        }
        Command::Heatmap { common, data, model } => {
            let cfg = RunConfig::load(data.config.as_deref())?;
            let out = Output::new(&common.out)?;
            commands::heatmap(model.as_deref(), &data.args(), common.seed, cfg, &out)
        }
        Command::Train {
            common,
            data,
            kind,
            layers,
            hidden,
            dropout,
            epochs,
            runs,
        } => {
            let cfg = RunConfig::load(data.config.as_deref())?;
            let out = Output::new(&common.out)?;
            let args = TrainArgs {
                seed: common.seed,
                kind,
                layers,
                hidden,
                dropout,
                epochs,
                runs,
            };
            commands::train_cmd(&args, &data.args(), cfg, &out, common.jobs)
        }
        Command::Ttest { common, a, b } => commands::ttest(&a, &b, &Output::new(&common.out)?),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(CliError::Failed(m)) => {
            eprintln!("failed: {m}");
            ExitCode::from(1)
        }
    }
}
