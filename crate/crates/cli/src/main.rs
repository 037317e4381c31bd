use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use derivgp::constraints::classify_critical_2d;
use derivgp::objectives;
use derivgp_cli::config::{prepare, RunConfig};
use derivgp_cli::runner::{execute, write_outputs};
use derivgp_cli::templates::{render, Scale};
use derivgp_cli::{bench, CliError};

/// Bayesian stationary-point search with Gaussian derivative processes.
#[derive(Parser)]
#[command(name = "derivgp", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a run configuration and write trace.csv, stages.csv,
    /// estimates.json and count.json into its output directory.
    Run {
        /// TOML configuration file (see `gen-config` for templates).
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Classify a critical point of a 2-d objective by the second-derivative test.
    Classify {
        /// Objective name (must be two-dimensional, e.g. example3).
        objective: String,
        /// Point coordinates.
        #[arg(num_args = 2, allow_negative_numbers = true)]
        point: Vec<f64>,
        /// Tolerance band treated as inconclusive.
        #[arg(long, default_value_t = 1e-3)]
        det_tol: f64,
        /// Count-data file for example4.
        #[arg(long)]
        data_file: Option<PathBuf>,
    },
    /// Run a benchmark reproduction and print a pass/fail table.
    Bench {
        /// One of: 1, 2, 3, 4, 5-d2, 5-d5, 5-d10.
        id: String,
        /// desk (minutes) or paper (the original long protocol).
        #[arg(default_value = "desk")]
        scale: Scale,
        /// Count-data file for example4.
        #[arg(long)]
        data_file: Option<PathBuf>,
    },
    /// Print a canonical run configuration for an experiment variant.
    GenConfig {
        /// Variant such as 1-min, 2-max, 3-saddle1, 4, 5-d2, ...
        variant: String,
        #[arg(long, default_value = "desk")]
        scale: Scale,
    },
}

fn classify_objective(
    name: &str,
    data_file: Option<&PathBuf>,
) -> Result<objectives::Objective, CliError> {
    match name {
        "example3" => Ok(objectives::example3()),
        "example4" => {
            let path = data_file
                .cloned()
                .unwrap_or_else(|| PathBuf::from("data/aids_quarterly.txt"));
            objectives::load_count_data(&path)
                .and_then(objectives::example4)
                .map_err(|e| CliError::Validation(e.to_string()))
        }
        "example5" => Ok(objectives::example5(2, 0, 101).0),
        "example1" | "example2" => Err(CliError::Validation(format!(
            "classification needs a 2-d objective; {name} is one-dimensional"
        ))),
        other => Err(CliError::Validation(format!("unknown objective {other:?}"))),
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Run { config, output_dir } => {
            let cfg = RunConfig::from_path(&config)?;
            let prep = prepare(&cfg)?;
            let artifacts = execute(&prep)?;
            let dir = output_dir
                .or_else(|| prep.output_dir.clone())
                .unwrap_or_else(|| PathBuf::from("out/run"));
            write_outputs(&artifacts, prep.objective.dim(), &dir)?;
            if artifacts.no_critical_point {
                println!(
                    "no critical point in region: {} mode {} found no support point",
                    prep.meta.objective, prep.meta.mode
                );
            } else {
                for e in artifacts.estimates() {
                    println!(
                        "estimate {:?}  grad_norm {:.6e}  f {:.6}  cluster {}  {}",
                        e.x_hat,
                        e.grad_norm,
                        e.f_value,
                        e.cluster_size,
                        e.classification
                            .map(|c| c.to_string())
                            .unwrap_or_else(|| "-".into())
                    );
                }
            }
            println!("outputs written to {}", dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Classify {
            objective,
            point,
            det_tol,
            data_file,
        } => {
            let obj = classify_objective(&objective, data_file.as_ref())?;
            let label = classify_critical_2d(&point, &obj, det_tol)
                .map_err(|e| CliError::Validation(e.to_string()))?;
            println!("{label}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Bench {
            id,
            scale,
            data_file,
        } => {
            let report = bench::run_bench(&id, scale, data_file)?;
            print!("{}", report.render_table());
            if report.skipped.is_some() || report.all_passed() {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::from(3))
            }
        }
        Command::GenConfig { variant, scale } => {
            print!("{}", render(&variant, scale)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
