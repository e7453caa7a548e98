use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dp_iadmm::analysis::{
    canonical_toys, expectation_gap_check, write_bound_report, write_bound_report_to, GapCheckConfig,
};
use dp_iadmm::harness::{aggregate, parse_config, run_experiment};
use dp_iadmm::mechanisms::{laplace_ratio_audit, AuditOutcome, HistogramSpec};
use dp_iadmm::Error;

#[derive(Parser)]
#[command(
    version,
    about = "Differentially private inexact ADMM for federated logistic regression"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every seed of an experiment config and aggregate the results.
    Run {
        config: PathBuf,
        /// Overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides `threads`.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Rebuild aggregate.csv and best.csv from the run_seed*.csv files in a directory.
    Aggregate { dir: PathBuf },
    /// Monte-Carlo check of the expected-gap bounds on the toy problems.
    CheckBounds {
        #[arg(long, default_value_t = 1000)]
        rounds: usize,
        #[arg(long, default_value_t = 50)]
        runs: usize,
        /// Comma-separated privacy budgets; `inf` for non-private.
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, f64::INFINITY])]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        /// CSV destination; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Histogram audit of the Laplace density-ratio bound.
    AuditDp {
        #[arg(long, default_value_t = 10_000_000)]
        draws: u64,
        #[arg(long, default_value_t = 0.1)]
        slack: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

enum Failure {
    Lib(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

fn exit_code(e: &Error) -> u8 {
    match e.category() {
        "usage" => 2,
        "config" => 3,
        "format" => 4,
        "io" => 5,
        "numerical" => 6,
        _ => 7,
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { config, out, threads } => {
            let mut cfg = parse_config(&config)?;
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if let Some(n) = threads {
                cfg.threads = n;
            }
            let res = run_experiment(&cfg)?;
            let b = &res.aggregate.best;
            println!(
                "{} runs={} best_final_test_error={} best_overall_test_error={} -> {}",
                b.mode,
                b.runs,
                b.best_final_test_error,
                b.best_overall_test_error,
                res.output_dir.display()
            );
        }
        Command::Aggregate { dir } => {
            let agg = aggregate(&dir)?;
            println!(
                "{} rows over {} runs, best final test error {}",
                agg.rows.len(),
                agg.best.runs,
                agg.best.best_final_test_error
            );
        }
        Command::CheckBounds {
            rounds,
            runs,
            eps,
            seed,
            out,
        } => {
            let toys = canonical_toys(seed)?;
            let mut rows = Vec::new();
            for &e in &eps {
                for toy in &toys {
                    let r = expectation_gap_check(toy, &GapCheckConfig::new(rounds, e, runs, seed))?;
                    log::info!(
                        "{} eps={}: lhs {:.4e} (sd {:.2e}) rhs {:.4e}, gamma {:.3}, max dual norm {:.3}",
                        r.regime,
                        e,
                        r.lhs,
                        r.lhs_std,
                        r.rhs,
                        r.gamma,
                        r.max_lambda_norm
                    );
                    rows.push(r);
                }
            }
            match out {
                Some(path) => write_bound_report(&path, &rows)?,
                None => write_bound_report_to(io::stdout().lock(), &rows)?,
            }
            let failed = rows.iter().filter(|r| !r.pass).count();
            if failed > 0 {
                return Err(Failure::Check(format!(
                    "{failed} of {} bound checks failed",
                    rows.len()
                )));
            }
        }
        Command::AuditDp { draws, slack, seed } => {
            let mut out = io::stdout().lock();
            let _ = writeln!(out, "eps_bar,shift_over_sensitivity,max_log_ratio,bound,pass");
            let mut failed = 0;
            for eps in [0.5, 1.0, 2.0] {
                for ratio in [0.0, 0.5, 1.0] {
                    let bound = eps * ratio + slack;
                    let outcome = laplace_ratio_audit(1.0 / eps, ratio, draws, HistogramSpec::default(), seed)?;
                    let (shown, pass) = match outcome {
                        AuditOutcome::Measured { max_log_ratio, .. } => {
                            (max_log_ratio.to_string(), max_log_ratio <= bound)
                        }
                        AuditOutcome::Inconclusive { .. } => ("inconclusive".to_string(), true),
                    };
                    failed += usize::from(!pass);
                    let _ = writeln!(out, "{eps},{ratio},{shown},{bound},{pass}");
                }
            }
            if failed > 0 {
                return Err(Failure::Check(format!("{failed} audit cells exceeded the bound")));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Lib(e)) => {
            eprintln!("error[{}]: {e}", e.category());
            ExitCode::from(exit_code(&e))
        }
        Err(Failure::Check(msg)) => {
            eprintln!("error[check]: {msg}");
            ExitCode::from(1)
        }
    }
}
