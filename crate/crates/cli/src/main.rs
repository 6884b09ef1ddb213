//! `relabel`: generate noisy datasets, train the correction policy, clean
//! labels, fine-tune and evaluate, from the command line.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use relabel_core::datagen::NoiseKind;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] relabel_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl CliError {
    /// 2 for anything the user can fix in the inputs, 3 for numerical
    /// divergence, 1 otherwise.
    fn exit_code(&self) -> u8 {
        use relabel_core::Error as E;
        match self {
            CliError::Core(E::Divergence(_)) => 3,
            CliError::Core(E::Io(_)) | CliError::Io(_) | CliError::Csv(_) => 1,
            CliError::Config(_) | CliError::Core(_) => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "relabel", version, about = "Noisy-label correction experiments")]
struct Cli {
    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run seed; overrides the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (a file path for `generate`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for data-parallel loops.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log more (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a Gaussian-blob dataset with synthetic label noise.
    Generate(GenerateArgs),
    /// Warm up extractor and classifier on the noisy labels.
    Pretrain(DataArgs),
    /// Train the correction policy from a warmed-up extractor.
    TrainPolicy(TrainPolicyArgs),
    /// Run the trained policy over a dataset and write the cleaned labels.
    Clean(CleanArgs),
    /// Fine-tune extractor and classifier on cleaned labels.
    Finetune(FinetuneArgs),
    /// Full pipeline: warm-up, policy training, cleaning, fine-tuning.
    Run(RunArgs),
    /// One full run per value of a hyperparameter grid.
    Sweep(SweepArgs),
    /// Accuracy of a trained classifier on a labelled CSV.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 200)]
    pub per_class: usize,
    #[arg(long, default_value_t = 10)]
    pub dim: usize,
    /// Distance between class means.
    #[arg(long, default_value_t = 6.0)]
    pub separation: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// `idn` or `symmetric`.
    #[arg(long, default_value = "idn")]
    pub noise: NoiseKind,
    #[arg(long, default_value_t = 0.3)]
    pub rate: f64,
    /// Also write a clean test set here.
    #[arg(long)]
    pub test_out: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub test_per_class: usize,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Training CSV; defaults to the config's dataset or generated fixture.
    #[arg(long)]
    pub data: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainPolicyArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Warmed-up extractor checkpoint.
    #[arg(long)]
    pub extractor: PathBuf,
    /// Initial critic checkpoint; a fresh critic when omitted.
    #[arg(long)]
    pub critic: Option<PathBuf>,
    /// Ablations to switch on (no_nla, no_lcr, no_init_random, shared_extractor).
    #[arg(long = "ablate")]
    pub ablate: Vec<String>,
}

#[derive(Debug, Args)]
pub struct CleanArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Trained policy extractor checkpoint.
    #[arg(long)]
    pub extractor: PathBuf,
}

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    /// Cleaned training CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Extractor checkpoint to start from.
    #[arg(long)]
    pub extractor: PathBuf,
    /// Classifier checkpoint to start from.
    #[arg(long)]
    pub classifier: PathBuf,
    /// Labelled test CSV for the final accuracy.
    #[arg(long)]
    pub test: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Labelled test CSV; defaults to the config's test set or the fixture's.
    #[arg(long)]
    pub test: Option<PathBuf>,
    /// Ablations to switch on (no_nla, no_lcr, no_init_random, shared_extractor).
    #[arg(long = "ablate")]
    pub ablate: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Parameter of the `train` config section; overrides the config's sweep.
    #[arg(long)]
    pub param: Option<String>,
    /// Comma-separated grid, e.g. `3,10,20`.
    #[arg(long)]
    pub values: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    /// Run every grid point in its own child process.
    #[arg(long)]
    pub processes: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// CSV with a `true_label` column.
    #[arg(long)]
    pub data: PathBuf,
    /// Extractor checkpoint.
    #[arg(long)]
    pub extractor: PathBuf,
    /// Classifier checkpoint.
    #[arg(long)]
    pub classifier: PathBuf,
}

pub struct Globals {
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }

    let globals = Globals {
        config: cli.config,
        seed: cli.seed,
        out: cli.out,
    };
    let result = match cli.command {
        Command::Generate(a) => commands::generate(&globals, &a),
        Command::Pretrain(a) => commands::pretrain(&globals, &a),
        Command::TrainPolicy(a) => commands::train_policy(&globals, &a),
        Command::Clean(a) => commands::clean(&globals, &a),
        Command::Finetune(a) => commands::finetune(&globals, &a),
        Command::Run(a) => commands::run(&globals, &a),
        Command::Sweep(a) => commands::sweep(&globals, &a),
        Command::Eval(a) => commands::eval(&globals, &a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
