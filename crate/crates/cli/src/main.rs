//! `abr-tl`: feature extraction, cross-validated SVM evaluation and report
//! rendering for ABR report images.
//!
//! Exit codes: 0 success, 1 one or more models failed, 2 configuration error.

use std::path::PathBuf;
use std::process::ExitCode;

use abr_core::features::BackendKind;
use abr_core::pipeline::{self, ModelOutcome, Stage};
use abr_core::RunConfig;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "abr-tl", version, about = "Transfer-learning ABR classification with an SVM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the CNNs and populate the feature cache.
    Extract(Common),
    /// Cross-validate (using cached features when valid) and write all reports.
    Evaluate(Common),
    /// Re-render tables and ROC files from an existing results.json.
    Report(Common),
}

#[derive(Debug, Args)]
struct Common {
    /// Run configuration file.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the inference backend.
    #[arg(long, value_parser = ["interchange", "mock"])]
    backend: Option<String>,
    /// Override the master seed.
    #[arg(long, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads (default: logical cores).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
}

const EXIT_PARTIAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn load_config(args: &Common) -> Result<RunConfig, String> {
    let mut config = RunConfig::load(&args.config).map_err(|e| e.to_string())?;
    if let Some(b) = &args.backend {
        config.backend = b.parse::<BackendKind>()?;
    }
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(jobs) = args.jobs {
        config.jobs = jobs;
    }
    Ok(config)
}

fn print_outcomes(models: &[ModelOutcome]) {
    for m in models {
        match m {
            ModelOutcome::Ok { model_name, report, .. } => println!(
                "{model_name}: mean accuracy {:.2}% (max {:.2}%, std {:.4}), AUC {:.4}",
                report.accuracy.mean * 100.0,
                report.accuracy.max * 100.0,
                report.accuracy.std,
                report.auc
            ),
            ModelOutcome::Failed { model_name, error } => eprintln!("{model_name}: FAILED: {error}"),
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (args, stage) = match &cli.command {
        Command::Extract(a) => (a, Some(Stage::Extract)),
        Command::Evaluate(a) => (a, Some(Stage::Evaluate)),
        Command::Report(a) => (a, None),
    };
    let config = match load_config(args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    let Some(stage) = stage else {
        return match pipeline::rerender_reports(&config) {
            Ok(results) => {
                println!("re-rendered reports for {} models in {}", results.models.len(), config.output_dir.display());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(EXIT_PARTIAL)
            }
        };
    };

    match pipeline::run_pipeline(&config, stage) {
        Ok(outcome) => {
            match stage {
                Stage::Evaluate => print_outcomes(&outcome.models),
                Stage::Extract => {
                    for m in &outcome.models {
                        if let ModelOutcome::Failed { model_name, error } = m {
                            eprintln!("{model_name}: FAILED: {error}");
                        }
                    }
                    println!("feature cache: {}", config.cache_dir.display());
                }
            }
            if outcome.any_failed() {
                ExitCode::from(EXIT_PARTIAL)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_PARTIAL)
        }
    }
}
