//! Command-line front end. Exit codes: 0 success, 1 usage or configuration
//! error, 2 data or format error, 3 numeric failure.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::error::Error;
use crate::pipeline::{Overrides, Pipeline};

#[derive(Parser, Debug)]
#[command(name = "actclust", version, about = "Explain a classifier by clustering its layer activations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train the baseline classifier and record its predictions.
    TrainBaseline(Common),
    /// Export activations of the selected layers for both splits.
    DumpActivations(Common),
    /// Train one clustering model per selected layer.
    TrainClusters(Common),
    /// Fit cluster-to-label posteriors and assemble the surrogate.
    BuildSurrogate(Common),
    /// Report surrogate accuracy and fidelity; prints test metrics as JSON.
    Evaluate(Common),
    /// Rank similar training examples for test queries.
    Explain(Common),
    /// List the training examples nearest each cluster centroid.
    Concepts(Common),
    /// Write thumbnails and report.html.
    Report(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated layer weights, one per selected layer.
    #[arg(long, value_delimiter = ',')]
    weights: Option<Vec<f64>>,
    /// Number of similar examples per query.
    #[arg(long)]
    top_k: Option<usize>,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Run seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 1,
        e if e.is_numeric() => 3,
        _ => 2,
    }
}

/// Parses `argv` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_cli<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(command: Command) -> crate::Result<()> {
    let (Command::TrainBaseline(c)
    | Command::DumpActivations(c)
    | Command::TrainClusters(c)
    | Command::BuildSurrogate(c)
    | Command::Evaluate(c)
    | Command::Explain(c)
    | Command::Concepts(c)
    | Command::Report(c)) = &command;
    let pipeline = Pipeline::load(
        &c.config,
        Overrides {
            out: c.out.clone(),
            seed: c.seed,
            weights: c.weights.clone(),
            top_k: c.top_k,
        },
    )?;
    match command {
        Command::TrainBaseline(_) => {
            let r = pipeline.train_baseline()?;
            log::info!("baseline train accuracy {:.4}, test accuracy {:.4}", r.train_accuracy, r.test_accuracy);
        }
        Command::DumpActivations(_) => pipeline.dump_activations()?,
        Command::TrainClusters(_) => {
            for d in pipeline.train_clusters()? {
                log::info!("clustering finished after {} epochs", d.dec_epochs);
            }
        }
        Command::BuildSurrogate(_) => {
            pipeline.build_surrogate()?;
        }
        Command::Evaluate(_) => {
            let s = pipeline.evaluate()?;
            println!(
                "{}",
                serde_json::json!({ "accuracy": s.test.accuracy, "fidelity": s.test.fidelity })
            );
        }
        Command::Explain(_) => {
            for f in pipeline.explain()? {
                log::info!("wrote similar_{}.json ({} queries)", f.tag, f.queries.len());
            }
        }
        Command::Concepts(_) => {
            for l in pipeline.concepts()?.layers {
                log::info!("{}: mean concept purity {:.3}", l.layer_name, l.purity.mean);
            }
        }
        Command::Report(_) => {
            let path = pipeline.report()?;
            log::info!("wrote {}", path.display());
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_one() {
        assert_eq!(run_cli(["actclust", "frobnicate"]), 1);
        assert_eq!(run_cli(["actclust", "evaluate"]), 1);
        assert_eq!(run_cli(["actclust", "evaluate", "--config", "x.json", "--bogus"]), 1);
        assert_eq!(run_cli(["actclust", "--help"]), 0);
    }

    #[test]
    fn error_classes_map_to_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), 1);
        assert_eq!(exit_code(&Error::Missing(vec![])), 2);
        assert_eq!(exit_code(&Error::Alignment("x".into())), 2);
        assert_eq!(exit_code(&Error::Training("x".into())), 3);
        assert_eq!(exit_code(&Error::Degenerate("x".into())), 3);
    }

    #[test]
    fn missing_config_is_a_data_error() {
        assert_eq!(run_cli(["actclust", "evaluate", "--config", "/nonexistent/run.json"]), 2);
    }
}
