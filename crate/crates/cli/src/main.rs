#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;

use commands::Detector;

#[derive(Parser)]
#[command(name = "thermwatch", version, about = "Overheating detection on winding temperature residuals")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    overrides: Overrides,
}

/// Flags that override keys of the JSON config.
#[derive(Args, Debug, Clone, Default)]
pub struct Overrides {
    /// JSON experiment config; built-in defaults when absent.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seeds fault sampling and, for synthetic data, the generator.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Artifact directory shared by all commands.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// negative, positive, none, all or a comma-separated list.
    #[arg(long, global = true)]
    pub scenario: Option<String>,
    /// cusum, ewma, none, threshold, all or a comma-separated list.
    #[arg(long, global = true)]
    pub method: Option<String>,
    /// Allowed validation false alarms for the tuned detector.
    #[arg(long, global = true)]
    pub qval: Option<usize>,
    /// Write per-step traces from `run`.
    #[arg(long, global = true)]
    pub trace: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic fleet of the config.
    Synth,
    /// Fit one baseline model per motor on its training range.
    Train,
    /// Tune a detector threshold on the validation range.
    Tune {
        #[arg(long, value_enum, default_value_t = Detector::Anomaly)]
        detector: Detector,
    },
    /// Inject faults into the test range under each selected scenario.
    Inject,
    /// Run the selected methods over the injected test data.
    Run,
    /// Train, tune, inject, run and report the full grid in one go.
    Experiment,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::from(e.use_stderr()));
        }
    };
    let result = match cli.command {
        Command::Synth => commands::synth(&cli.overrides),
        Command::Train => commands::train(&cli.overrides),
        Command::Tune { detector } => commands::tune(&cli.overrides, detector),
        Command::Inject => commands::inject(&cli.overrides),
        Command::Run => commands::run(&cli.overrides),
        Command::Experiment => commands::experiment(&cli.overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if let Some(hint) = commands::hint(&e) {
                eprintln!("hint: {hint}");
            }
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
