//! `kronsb`: simulate blurred images, build Kronecker-sum approximations of
//! the blur, and restore with split Bregman TV.

use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod approx;
mod common;
mod deblur;
mod error;
mod metrics;
mod settings;
mod simulate;
mod sweep;

#[derive(Parser, Debug)]
#[command(name = "kronsb", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Blur a test image with a PSF and add Gaussian noise.
    Simulate(simulate::SimulateArgs),
    /// Approximate a blur matrix by a sum of Kronecker products.
    Approx(approx::ApproxArgs),
    /// Restore an image with split Bregman TV.
    Deblur(deblur::DeblurArgs),
    /// Run split Bregman over a grid of regularization parameters.
    Sweep(sweep::SweepArgs),
    /// Compute RE, ISNR, SNR and predicted speedups.
    Metrics(metrics::MetricsArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Approx(a) => approx::run(a),
        Command::Deblur(a) => deblur::run(a),
        Command::Sweep(a) => sweep::run(a),
        Command::Metrics(a) => metrics::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
