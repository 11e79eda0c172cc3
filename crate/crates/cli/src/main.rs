//! `kinhall` command-line driver.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 invariant
//! violation, 3 solver failure. The worker thread count follows
//! `RAYON_NUM_THREADS`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use kinhall::cli_io::suites::DEFAULT_SEED;
use kinhall::cli_io::{format_table, parse_config, read_checkpoint, run, run_from, run_suite, RunOutcome, RunStatus, Suite};
use kinhall::diagnostics::horizon_estimate;
use kinhall::moments::moment_bound_constants;
use kinhall::Error;

#[derive(Parser, Debug)]
#[command(name = "kinhall", version, about = "Kinetic-ion / Hall-resistive plasma solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation described by a configuration file.
    Run {
        config: PathBuf,
        /// Output directory (overrides the configuration's [output] directory).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Accepted for interface uniformity; runs are deterministic.
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Run a self-check suite: moments, poisson, induction, vlasov,
    /// splitting, energy, perturbed or all.
    Check {
        suite: String,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Print the moment-bound constants and sample time horizons.
    DeriveConstants,
    /// Continue a run from a checkpoint up to the configuration's t_end.
    Resume {
        checkpoint: PathBuf,
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

const USAGE: u8 = 1;
const INVARIANT: u8 = 2;
const SOLVER: u8 = 3;

fn error_code(e: &Error) -> u8 {
    match e {
        Error::NonConvergence { .. }
        | Error::SingularSystem(_)
        | Error::ExcessiveTruncation { .. }
        | Error::MomentCorrection { .. } => SOLVER,
        _ => USAGE,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(error_code(&e))
}

fn report(outcome: &RunOutcome, out: &Path) -> ExitCode {
    let s = &outcome.state;
    let row = s.ledger.current;
    println!(
        "steps: {}  t = {:.6}  E_tot = {:.12e}  v-box outflow = {:.3e}  output: {}",
        outcome.steps_taken,
        s.t,
        row.e_tot,
        s.box_outflow,
        out.display()
    );
    match &outcome.status {
        RunStatus::Completed => ExitCode::SUCCESS,
        RunStatus::InvariantViolation { step, message } => {
            eprintln!("invariant violated after step {step}: {message}");
            ExitCode::from(INVARIANT)
        }
        RunStatus::SolverFailure { step, error, dump } => {
            eprintln!("solver failure in step {}: {error}; state dumped to {}", step + 1, dump.display());
            ExitCode::from(SOLVER)
        }
    }
}

fn derive_constants() {
    let (c, cp) = moment_bound_constants();
    println!("moment interpolation constants (minimisation over the split radius R):");
    println!("  C  = (4 pi/3)^(2/5) [(2/3)^(3/5) + (3/2)^(2/5)] = {c:.15}");
    println!("  C' = pi^(1/5) [4^(-4/5) + 4^(1/5)]              = {cp:.15}");
    println!("perturbed-energy time horizon T* = ln(1 + C_data / ||J_imp||_inf):");
    println!("  {:>12}  {:>12}  {:>20}", "||J_imp||", "C_data", "T*");
    for (j, cd) in [(1.0, 1.0), (0.1, 1.0), (1.0, 0.1), (10.0, 1.0), (0.0, 1.0)] {
        let t = horizon_estimate(j, cd).expect("positive C_data");
        println!("  {j:>12}  {cd:>12}  {t:>20.15}");
    }
    println!("  T*(1, 1) = ln 2 = {:.15}", 2f64.ln());
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match cli.command {
        Command::Run { config, out, seed: _ } => {
            let setup = match parse_config(&config) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let out = out.unwrap_or_else(|| setup.output_dir.clone());
            match run(&setup, &out) {
                Ok(o) => report(&o, &out),
                Err(e) => fail(e),
            }
        }
        Command::Resume { checkpoint, config, out } => {
            let setup = match parse_config(&config) {
                Ok(s) => s,
                Err(e) => return fail(e),
            };
            let out = out.unwrap_or_else(|| setup.output_dir.clone());
            let result = read_checkpoint(&checkpoint, &setup.grid, &setup.config)
                .and_then(|state| run_from(&setup, state, &out));
            match result {
                Ok(o) => report(&o, &out),
                Err(e) => fail(e),
            }
        }
        Command::Check { suite, seed } => {
            let Some(suite) = Suite::parse(&suite) else {
                eprintln!(
                    "error: unknown suite \"{suite}\" (expected moments, poisson, induction, vlasov, splitting, energy, perturbed or all)"
                );
                return ExitCode::from(USAGE);
            };
            match run_suite(suite, seed) {
                Ok(rows) => {
                    print!("{}", format_table(&rows));
                    let failed = rows.iter().filter(|r| !r.pass).count();
                    println!("{} checks, {failed} failed (seed {seed})", rows.len());
                    if failed == 0 {
                        ExitCode::SUCCESS
                    } else {
                        ExitCode::from(INVARIANT)
                    }
                }
                Err(e) => fail(e),
            }
        }
        Command::DeriveConstants => {
            derive_constants();
            ExitCode::SUCCESS
        }
    }
}
