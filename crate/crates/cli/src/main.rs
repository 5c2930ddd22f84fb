mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "mivs", version, about = "Differential-relay FDIA simulator and recurrent trip validator")]
pub struct Cli {
    /// Master seed.
    #[arg(long, global = true, env = "MIVS_SEED")]
    seed: Option<u64>,
    /// Worker threads for dataset generation.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Run configuration file; command-line flags override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a labeled fault/FDIA dataset and its train/test split.
    Gen(GenArgs),
    /// Train a validator on a dataset.
    Train(TrainArgs),
    /// Evaluate a validator on a labeled dataset.
    Eval(EvalArgs),
    /// Craft an attack, run the relay, and optionally the validator.
    Attack(AttackArgs),
    /// Time single-window inference.
    Bench(BenchArgs),
    /// Describe a checkpoint or the default architecture.
    ModelInfo(ModelInfoArgs),
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// ac or dc.
    #[arg(long)]
    kind: Option<String>,
    /// Line profile: ac1, ac2, dc1, dc2.
    #[arg(long)]
    line: Option<String>,
    #[arg(long)]
    faults: Option<usize>,
    #[arg(long)]
    attacks: Option<usize>,
    #[arg(long = "fs-hz")]
    fs_hz: Option<f64>,
    #[arg(long = "window-ms")]
    window_ms: Option<f64>,
    /// Share of attacks kept at minimal tripping magnitude.
    #[arg(long = "minimal-fraction")]
    minimal_fraction: Option<f64>,
    #[arg(long = "train-fraction")]
    train_fraction: Option<f64>,
    /// Output prefix; writes `<out>.train.ds`, `<out>.test.ds` and companions.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    /// Training dataset (`.ds`).
    #[arg(long)]
    data: Option<PathBuf>,
    /// Checkpoint path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-unit base in kA.
    #[arg(long = "i-nom")]
    i_nom: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long = "batch-size")]
    batch_size: Option<usize>,
    #[arg(long = "lr")]
    learning_rate: Option<f64>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long = "val-fraction")]
    val_fraction: Option<f64>,
    #[arg(long = "clip-norm")]
    clip_norm: Option<f64>,
    /// Width of every recurrent layer.
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dense1: Option<usize>,
    #[arg(long)]
    dense2: Option<usize>,
    /// sequence or final.
    #[arg(long)]
    readout: Option<String>,
    /// Sweep hidden width, dense1 width and learning rate; keep the best.
    #[arg(long = "grid-search")]
    grid_search: bool,
    #[arg(long = "grid-hidden")]
    grid_hidden: Option<String>,
    #[arg(long = "grid-dense1")]
    grid_dense1: Option<String>,
    #[arg(long = "grid-lr")]
    grid_lr: Option<String>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    /// Scenario CSV; defaults to the `.csv` next to the dataset when present.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    /// Also evaluate with white noise at this SNR (dB).
    #[arg(long = "noise-snr")]
    noise_snr: Option<f64>,
    /// Also write a threshold sweep table.
    #[arg(long)]
    sweep: bool,
    /// Report prefix.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct AttackArgs {
    #[arg(long)]
    kind: Option<String>,
    #[arg(long)]
    line: Option<String>,
    #[arg(long = "fs-hz")]
    fs_hz: Option<f64>,
    /// scale, add, or tsa.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Additive offset in kA.
    #[arg(long, allow_hyphen_values = true)]
    delta: Option<f64>,
    #[arg(long = "shift-ms")]
    shift_ms: Option<f64>,
    /// increase or decrease; both are searched when omitted.
    #[arg(long)]
    direction: Option<String>,
    /// Comma-separated pair indices.
    #[arg(long)]
    pairs: Option<String>,
    #[arg(long = "onset-s")]
    onset_s: Option<f64>,
    /// Validator checkpoint to consult after the relay trips.
    #[arg(long)]
    model: Option<PathBuf>,
    /// CSV of the attacked stream.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long = "fs-hz")]
    fs_hz: Option<f64>,
    #[arg(long = "window-ms")]
    window_ms: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct ModelInfoArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    kind: Option<String>,
    #[arg(long = "fs-hz")]
    fs_hz: Option<f64>,
    #[arg(long = "window-ms")]
    window_ms: Option<f64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
