mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use resgin::model::Variant;

use crate::config::FileConfig;

#[derive(Debug, Parser)]
#[command(name = "resgin", version, about = "Drug-pair synergy classification with residual GIN encoders")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Cross-validate on a labelled dataset and save one checkpoint per fold.
    Train(RunArgs),
    /// Score drug pairs with a saved checkpoint.
    Predict(PredictArgs),
    /// Run the ablation, depth or learning-rate/dropout experiments.
    Experiment(ExperimentArgs),
    /// Write the synthetic toy dataset.
    ToyData(ToyArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Sample CSV: drug_a_smiles, drug_b_smiles, cell_line, label.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Expression table: a header row, then one cell line per row.
    #[arg(long)]
    cells: Option<PathBuf>,
    /// JSON file of hyperparameters; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; results go to <out>/<run-name>.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    run_name: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    folds: Option<usize>,
    /// Only train the first N folds.
    #[arg(long)]
    fold_limit: Option<usize>,
    #[arg(long)]
    layers: Option<usize>,
    /// resgin, gin-nores or gcn-res.
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long)]
    parallel_folds: Option<usize>,
    /// Report TNR as tn / (tn + fn) instead of specificity.
    #[arg(long)]
    tnr_literal: bool,
    /// Abort on the first invalid data row instead of collecting all of them.
    #[arg(long)]
    fail_fast: bool,
    /// Do not print per-epoch progress.
    #[arg(long, short)]
    quiet: bool,
}

impl RunArgs {
    fn flags(&self) -> FileConfig {
        FileConfig {
            data: self.data.clone(),
            cells: self.cells.clone(),
            out: self.out.clone(),
            run_name: self.run_name.clone(),
            seed: self.seed,
            n_folds: self.folds,
            fold_limit: self.fold_limit,
            layer_count: self.layers,
            variant: self.variant,
            lr: self.lr,
            dropout: self.dropout,
            num_epochs: self.epochs,
            train_batch_size: self.batch,
            parallel_folds: self.parallel_folds,
            tnr_form: self.tnr_literal.then_some(resgin::eval::TnrForm::Literal),
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// CSV with drug_a_smiles, drug_b_smiles, cell_line and an optional label column.
    #[arg(long, alias = "data")]
    pairs: PathBuf,
    #[arg(long)]
    cells: PathBuf,
    /// Output CSV; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of highest-attention atoms listed per drug.
    #[arg(long, default_value_t = 3)]
    top_k: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExperimentName {
    Ablate,
    DepthSweep,
    Sensitivity,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    name: ExperimentName,
    #[command(flatten)]
    run: RunArgs,
    /// Depths for depth-sweep.
    #[arg(long, value_delimiter = ',')]
    depths: Option<Vec<usize>>,
    /// Variants for depth-sweep.
    #[arg(long, value_delimiter = ',')]
    variants: Option<Vec<Variant>>,
    /// Learning rates for sensitivity.
    #[arg(long, value_delimiter = ',')]
    lrs: Option<Vec<f64>>,
    /// Dropout rates for sensitivity.
    #[arg(long, value_delimiter = ',')]
    dropouts: Option<Vec<f64>>,
}

#[derive(Debug, Args)]
pub struct ToyArgs {
    /// Directory that receives samples.csv and expression.tsv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = resgin::data::toy::TOY_PAIRS)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => commands::train(args),
        Command::Predict(args) => commands::predict(args),
        Command::Experiment(args) => commands::experiment(args),
        Command::ToyData(args) => commands::toy_data(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if matches!(e, error::CliError::Usage(_)) {
                eprintln!("run `resgin --help` for usage");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
