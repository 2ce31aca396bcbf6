use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use imputekit::core::jointgauss::JointPrior;
use imputekit::core::rng::DEFAULT_SEED;
use imputekit::core::sim::MCAR_RATE;
use imputekit::core::RngStream;
use imputekit::csv_io::{load_csv, write_csv};
use imputekit::experiment::{generate, run_experiment, ExperimentConfig, ExperimentId};
use imputekit::impute::{run_impute, ImputeOptions, Method};
use imputekit::report::{diagnose, read_json, read_traces, write_qq};
use imputekit::spec_file::SpecFile;

#[derive(Parser)]
#[command(name = "imputekit", version, about = "Chained-equations and joint Gaussian multiple imputation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Iterative,
    Joint,
}

#[derive(Clone, Copy, ValueEnum)]
enum JointPriorArg {
    /// |Σ|^{-(p+1)/2}
    Niw,
    /// |Σ|^{-1}: Jeffreys prior on every conditional regression
    ConditionalJeffreys,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated dataset as CSV.
    Generate {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        experiment: u8,
        /// Rows (experiments 2 and 3).
        #[arg(long)]
        n: Option<usize>,
        /// Block sizes n_a,n_b,n_c (experiment 1).
        #[arg(long, value_delimiter = ',', num_args = 3)]
        pattern: Option<Vec<usize>>,
        #[arg(long, default_value_t = MCAR_RATE)]
        rate: f64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Multiply impute a CSV dataset.
    Impute {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "iterative")]
        method: MethodArg,
        #[arg(long, value_enum, default_value = "niw")]
        joint_prior: JointPriorArg,
        #[arg(long, default_value_t = 5)]
        m: usize,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long, default_value_t = 1000)]
        burn: usize,
        #[arg(long, default_value_t = 10)]
        thin: usize,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare one statistic across two trace files; prints the summary JSON.
    Diagnose {
        #[arg(long, num_args = 2, value_names = ["LEFT", "RIGHT"])]
        traces: Vec<PathBuf>,
        #[arg(long)]
        stat: String,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        #[arg(long, default_value_t = 99)]
        qq_points: usize,
        /// Also write the Q-Q points here.
        #[arg(long)]
        qq_out: Option<PathBuf>,
    },
    /// Run a simulation study.
    Experiment {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
        id: u8,
        /// JSON overrides; absent keys take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Worker threads; 0 uses available parallelism.
        #[arg(long, default_value_t = 0)]
        workers: usize,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Generate { experiment, n, pattern, rate, seed, out } => {
            let id = ExperimentId::from_number(experiment)?;
            let sizes = match (id, n, pattern) {
                (ExperimentId::Exp1, None, p) => p.unwrap_or_else(|| vec![200, 80, 80]),
                (ExperimentId::Exp1, Some(_), _) => bail!("experiment 1 takes --pattern, not --n"),
                (_, _, Some(_)) => bail!("--pattern applies to experiment 1 only"),
                (ExperimentId::Exp2, n, None) => vec![n.unwrap_or(1000)],
                (ExperimentId::Exp3, n, None) => vec![n.unwrap_or(2000)],
            };
            let dm = generate(id, &sizes, rate, &mut RngStream::new(seed).substream("data"))?;
            write_csv(&dm, &out)?;
        }
        Command::Impute { data, spec, method, joint_prior, m, iters, burn, thin, seed, out } => {
            let spec = match spec {
                Some(p) => SpecFile::load(&p)?,
                None => SpecFile::default(),
            };
            let dm = spec.apply_schema(load_csv(&data)?)?;
            let method = match method {
                MethodArg::Iterative => Method::Iterative,
                MethodArg::Joint => Method::Joint,
            };
            let joint_prior = match joint_prior {
                JointPriorArg::Niw => JointPrior::Niw,
                JointPriorArg::ConditionalJeffreys => JointPrior::ConditionalJeffreys,
            };
            let opts = ImputeOptions { method, m, iters, burn_in: burn, thin, seed, joint_prior };
            let run = run_impute(&dm, &spec, &opts, &out)?;
            println!("wrote {} imputed datasets to {}", run.files.len(), out.display());
        }
        Command::Diagnose { traces, stat, bins, qq_points, qq_out } => {
            let left = read_traces(&traces[0])?;
            let right = read_traces(&traces[1])?;
            let (summary, qq) = diagnose(&left, &right, &stat, bins, qq_points)?;
            if let Some(p) = qq_out {
                write_qq(&p, &qq)?;
            }
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::Experiment { id, config, out, workers } => {
            let id = ExperimentId::from_number(id)?;
            let cfg = match config {
                Some(p) => {
                    let v: serde_json::Value = read_json(&p)?;
                    // A summary.json embeds its config under "config".
                    let v = match v.get("config") {
                        Some(inner) if inner.is_object() => inner.clone(),
                        _ => v,
                    };
                    ExperimentConfig::from_value(v, Some(id)).with_context(|| format!("reading {}", p.display()))?
                }
                None => ExperimentConfig::defaults(id),
            };
            let summary = run_experiment(&cfg, &out, workers)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            if !summary.failures().is_empty() {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
