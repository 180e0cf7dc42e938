use std::fs::{self, File};
use std::io;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::DVector;

use drlqg::config::{ConfigError, PolicyFile, ProblemConfig, SamplerFile, WorstCaseFile};
use drlqg::equilibrium::worst_case_for_policy;
use drlqg::report::{self, Evaluation, Summary};
use drlqg::sim_eval::{analytic_cost, monte_carlo_cost};
use drlqg::{iterated_best_response, reproduce_motivating_example, Error, NoiseSampler};

#[derive(Parser)]
#[command(
    name = "drlqg",
    version,
    about = "Distributionally robust output-feedback LQG synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute the equilibrium policy and worst-case noise moments.
    Synthesize {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        /// Overrides the worst-case solver tolerance.
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Worst-case noise moments against a fixed policy.
    WorstCase {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Monte Carlo cost of a policy next to its analytic expected cost.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        policy: PathBuf,
        /// `reference`, `worst-case`, `dirac`, or a sampler TOML file.
        #[arg(long, default_value = "reference")]
        sampler: String,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        /// Defaults to the config's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
        #[arg(long)]
        tolerance: Option<f64>,
    },
    /// Stationary versus non-stationary comparison on the scalar example.
    Example {
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

enum Failure {
    Input(String),
    Solver(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        match &e {
            ConfigError::Invalid { source, .. } if is_solver_error(source) => {
                Failure::Solver(e.to_string())
            }
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if is_solver_error(&e) {
            Failure::Solver(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Input(e.to_string())
    }
}

fn is_solver_error(e: &Error) -> bool {
    matches!(
        e,
        Error::NoConvergence { .. }
            | Error::DegenerateReference { .. }
            | Error::SingularMeanSystem { .. }
            | Error::MultiplierBound { .. }
    )
}

fn load(
    config: &Path,
    tolerance: Option<f64>,
) -> Result<
    (
        ProblemConfig,
        drlqg::ControlProblemF64,
        drlqg::AmbiguitySpecF64,
    ),
    Failure,
> {
    let mut cfg = ProblemConfig::load(config)?;
    if let Some(tol) = tolerance {
        if tol.is_nan() || tol <= 0.0 {
            return Err(Failure::Input(format!(
                "--tolerance must be positive, got {tol}"
            )));
        }
        cfg.solver.tolerance = tol;
    }
    let (problem, amb) = cfg.build(config)?;
    Ok((cfg, problem, amb))
}

fn create(dir: &Path, name: &str) -> Result<File, Failure> {
    fs::create_dir_all(dir)?;
    Ok(File::create(dir.join(name))?)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<(), Failure> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(name), text)?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Synthesize {
            config,
            out_dir,
            tolerance,
        } => {
            let (cfg, problem, amb) = load(&config, tolerance)?;
            let eq = iterated_best_response(&problem, &amb, &cfg.equilibrium_options())?;
            write_text(
                &out_dir,
                "policy.toml",
                &PolicyFile::from_policy(&eq.policy).to_toml(),
            )?;
            write_text(
                &out_dir,
                "nature.toml",
                &SamplerFile::from_moments(&eq.nature).to_toml(),
            )?;
            write_text(
                &out_dir,
                "worst_case.toml",
                &WorstCaseFile::from_solution(&eq.worst_case).to_toml(),
            )?;
            report::write_trace(create(&out_dir, "trace.csv")?, &eq.trace)?;
            let summary = Summary {
                value: eq.value,
                gap: eq.gap,
                iterations: eq.iterations,
                lambda_v: eq.worst_case.lambda_v,
                lambda_w: eq.worst_case.lambda_w,
                cost_core: eq.worst_case.cost_core,
            };
            report::write_summary(create(&out_dir, "summary.csv")?, &summary)?;
            report::write_summary(io::stdout().lock(), &summary)?;
        }
        Command::WorstCase {
            config,
            policy,
            out_dir,
            tolerance,
        } => {
            let (cfg, problem, amb) = load(&config, tolerance)?;
            let policy = PolicyFile::load(&policy)?;
            let sol = worst_case_for_policy(&problem, &policy, &amb, &cfg.solver_options())?;
            let text = WorstCaseFile::from_solution(&sol).to_toml();
            write_text(&out_dir, "worst_case.toml", &text)?;
            print!("{text}");
        }
        Command::Evaluate {
            config,
            policy,
            sampler,
            samples,
            seed,
            out_dir,
            tolerance,
        } => {
            let (cfg, problem, amb) = load(&config, tolerance)?;
            let policy = PolicyFile::load(&policy)?;
            let (v, w) = match sampler.as_str() {
                "reference" => {
                    let r = amb.reference_moments();
                    (
                        NoiseSampler::gaussian(r.mean_v, r.cov_v)?,
                        NoiseSampler::gaussian(r.mean_w, r.cov_w)?,
                    )
                }
                "worst-case" => {
                    let sol = worst_case_for_policy(&problem, &policy, &amb, &cfg.solver_options())?;
                    (
                        NoiseSampler::gaussian(sol.mean_v, sol.cov_v)?,
                        NoiseSampler::gaussian(sol.mean_w, sol.cov_w)?,
                    )
                }
                "dirac" => (
                    NoiseSampler::dirac(DVector::zeros(problem.state_dim())),
                    NoiseSampler::dirac(DVector::zeros(problem.output_dim())),
                ),
                path if path.ends_with(".toml") => SamplerFile::load(Path::new(path))?,
                other => {
                    return Err(Failure::Input(format!(
                        "unknown sampler `{other}`: expected reference, worst-case, dirac or a .toml file"
                    )))
                }
            };
            let seed = seed.unwrap_or(cfg.seed);
            let (mean, stderr) = monte_carlo_cost(&problem, &policy, &v, &w, samples, seed)?;
            let analytic = analytic_cost(&problem, &policy, &v, &w)?;
            let eval = Evaluation {
                samples,
                seed,
                mean,
                stderr,
                analytic,
            };
            report::write_evaluation(create(&out_dir, "evaluation.csv")?, &eval)?;
            report::write_evaluation(io::stdout().lock(), &eval)?;
        }
        Command::Example { out_dir } => {
            let rep = reproduce_motivating_example();
            if let Some(dir) = out_dir {
                report::write_example(create(&dir, "example.csv")?, &rep)?;
            }
            report::write_example(io::stdout().lock(), &rep)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Solver(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
