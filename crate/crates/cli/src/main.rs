mod commands;
mod common;
mod svg;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{calibrate, gaussian, kl, select, sweep};

#[derive(Parser, Debug)]
#[command(name = "slopkit", version, about = "Sharpened logarithmic opinion pools: calibration, sweeps and analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Calibrate pool weights on a score table.
    Calibrate(calibrate::CalibrateArgs),
    /// Accuracy sweep over proxy accuracies on synthetic multiple-choice tasks.
    Sweep(sweep::SweepArgs),
    /// Closed-form accuracy analysis for a Gaussian score model.
    AnalyzeGaussian(gaussian::GaussianArgs),
    /// KL between the pool and the exact law of pooled soft Best-of-N.
    KlCheck(kl::KlArgs),
    /// Select among candidates from a file.
    Select(select::SelectArgs),
}

fn configure_threads() {
    if let Some(n) = std::env::var("SLOPKIT_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            // only fails if a pool already exists
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    configure_threads();
    let result = match cli.command {
        Command::Calibrate(a) => calibrate::run(a),
        Command::Sweep(a) => sweep::run(a),
        Command::AnalyzeGaussian(a) => gaussian::run(a),
        Command::KlCheck(a) => kl::run(a),
        Command::Select(a) => select::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code as u8)
        }
    }
}
