//! Command-line entry point wiring data generation, training, evaluation,
//! inference and regeneration analysis.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric divergence,
//! 4 IO or format/version error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(
    name = "ycycle",
    version,
    about = "Wheel-loader working-cycle detection: synthetic telemetry, CRDNN training, evaluation and regeneration analysis"
)]
struct Cli {
    /// Optional TOML config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled synthetic Y-cycle dataset.
    Generate {
        /// Output directory (created if missing).
        #[arg(long)]
        out: PathBuf,
        /// Total cycle count; the default roster mix is kept proportionally.
        #[arg(long)]
        cycles: Option<usize>,
        /// Telemetry file format: text or binary.
        #[arg(long, default_value = "text")]
        format: String,
    },
    /// Train one architecture at one window size.
    Train {
        /// Dataset directory (as written by `generate`).
        #[arg(long)]
        data: PathBuf,
        /// Architecture: 1lstm, 2lstm or 2bilstm.
        #[arg(long, default_value = "2bilstm")]
        arch: String,
        /// Window size; one of 9, 15, 25.
        #[arg(long, default_value_t = 25)]
        window_size: usize,
        /// Where to write the trained model.
        #[arg(long)]
        model: PathBuf,
        /// Where to write the training report.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        train_stride: Option<usize>,
        #[arg(long)]
        eval_stride: Option<usize>,
        /// Fraction of loading/unloading time deliberately mislabeled as
        /// travel in the training split (robustness probe), 0..0.05.
        #[arg(long, default_value_t = 0.0)]
        mislabel_rate: f64,
    },
    /// Train the full 3 architectures x 3 window sizes comparison grid.
    Grid {
        #[arg(long)]
        data: PathBuf,
        /// Output directory for reports, the comparison table and the best model.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        patience: Option<usize>,
        #[arg(long)]
        train_stride: Option<usize>,
        #[arg(long)]
        eval_stride: Option<usize>,
    },
    /// Evaluate a trained model against a labeled dataset.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Write the metrics bundle here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Classify a telemetry recording window by window.
    Infer {
        #[arg(long)]
        model: PathBuf,
        /// One telemetry file (text or binary).
        #[arg(long)]
        input: PathBuf,
        /// Window stride override; defaults to the model's eval stride.
        #[arg(long)]
        stride: Option<usize>,
    },
    /// Regeneration-potential analysis and parameter sweep.
    Regen {
        /// Friction coefficients to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.01, 0.05, 0.3])]
        mu: Vec<f64>,
        /// Deceleration-onset speeds (m/s) to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = vec![2.78])]
        speeds: Vec<f64>,
        /// Material masses (kg) to sweep.
        #[arg(long, value_delimiter = ',', default_values_t = vec![4000.0])]
        materials: Vec<f64>,
        /// Write the sweep table here as well as to stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    let mut run_cfg = match &cli.config {
        Some(path) => match config::RunConfig::load(path) {
            Ok(cfg) => cfg,
            Err(e) => return fail(e),
        },
        None => config::RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        run_cfg.seed = seed;
    }

    let result = match cli.command {
        Command::Generate {
            out,
            cycles,
            format,
        } => commands::generate(&run_cfg, &out, cycles, &format),
        Command::Train {
            data,
            arch,
            window_size,
            model,
            report,
            max_epochs,
            batch_size,
            learning_rate,
            patience,
            train_stride,
            eval_stride,
            mislabel_rate,
        } => {
            let mut cfg = run_cfg.clone();
            apply_overrides(
                &mut cfg,
                max_epochs,
                batch_size,
                learning_rate,
                patience,
                train_stride,
                eval_stride,
            );
            commands::train(
                &cfg,
                &data,
                &arch,
                window_size,
                &model,
                report.as_deref(),
                mislabel_rate,
            )
        }
        Command::Grid {
            data,
            out,
            max_epochs,
            learning_rate,
            patience,
            train_stride,
            eval_stride,
        } => {
            let mut cfg = run_cfg.clone();
            apply_overrides(
                &mut cfg,
                max_epochs,
                None,
                learning_rate,
                patience,
                train_stride,
                eval_stride,
            );
            commands::grid(&cfg, &data, &out)
        }
        Command::Eval { model, data, out } => commands::eval(&model, &data, out.as_deref()),
        Command::Infer {
            model,
            input,
            stride,
        } => commands::infer(&model, &input, stride),
        Command::Regen {
            mu,
            speeds,
            materials,
            out,
        } => commands::regen(&mu, &speeds, &materials, out.as_deref()),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e),
    }
}

#[allow(clippy::too_many_arguments)]
fn apply_overrides(
    cfg: &mut config::RunConfig,
    max_epochs: Option<usize>,
    batch_size: Option<usize>,
    learning_rate: Option<f64>,
    patience: Option<usize>,
    train_stride: Option<usize>,
    eval_stride: Option<usize>,
) {
    if let Some(v) = max_epochs {
        cfg.train.max_epochs = v;
    }
    if let Some(v) = batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = learning_rate {
        cfg.train.initial_learning_rate = v;
    }
    if let Some(v) = patience {
        cfg.train.early_stop_patience = v;
    }
    if let Some(v) = train_stride {
        cfg.window.train_stride = v;
    }
    if let Some(v) = eval_stride {
        cfg.window.eval_stride = v;
    }
}

fn fail(e: ycycle_core::Error) -> ExitCode {
    use ycycle_core::Error;
    eprintln!("error: {e}");
    let code = match e {
        Error::Config(_)
        | Error::Input(_)
        | Error::EmptyInput(_)
        | Error::Shape(_)
        | Error::UndefinedMetric(_) => 2,
        Error::Numeric(_) | Error::Diverged { .. } => 3,
        Error::Io { .. } | Error::Format(_) => 4,
    };
    ExitCode::from(code)
}
