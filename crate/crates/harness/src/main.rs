use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use trackreg_harness::report::{collect_summaries, tables};
use trackreg_harness::{
    emit_crlb, emit_report, run_monte_carlo, scenario_crlb, HarnessError, Method, Scenario,
};

#[derive(Parser)]
#[command(
    name = "trackreg",
    version,
    about = "Sensor bias estimation from fused tracks"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Fbe,
    Ex,
    Exl,
    Baseline,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Fbe => Method::Fbe,
            MethodArg::Ex => Method::Ex,
            MethodArg::Exl => Method::Exl,
            MethodArg::Baseline => Method::Baseline,
        }
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Monte Carlo simulation of one estimator on a scenario.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// Defaults to the scenario's `mc_runs`.
        #[arg(long)]
        runs: Option<usize>,
        /// Defaults to the scenario's `rng_seed`.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Lower bound on the bias estimates of a scenario.
    Crlb {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize result directories.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        tables: bool,
    },
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.cmd {
        Cmd::Simulate {
            scenario,
            method,
            runs,
            seed,
            out,
        } => {
            let s = Scenario::load(&scenario)?;
            let runs = runs.unwrap_or(s.mc_runs);
            if runs == 0 {
                return Err(HarnessError::Validation("--runs must be at least 1".into()));
            }
            let seed = seed.unwrap_or(s.rng_seed);
            let m = run_monte_carlo(&s, method.into(), runs, seed)?;
            emit_report(&m, &out)?;
            log::info!(
                "{} runs of {} written to {}",
                runs,
                m.method.label(),
                out.display()
            );
        }
        Cmd::Crlb { scenario, out } => {
            let s = Scenario::load(&scenario)?;
            s.validate()?;
            let bound = scenario_crlb(&s)?;
            emit_crlb(&bound, s.mc_runs, &out)?;
        }
        Cmd::Report {
            input,
            tables: show,
        } => {
            let summaries = collect_summaries(&input)?;
            if show {
                print!("{}", tables(&summaries));
            } else {
                for s in &summaries {
                    println!("{} (frame {}): {} metrics", s.label, s.frame, s.rows.len());
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
