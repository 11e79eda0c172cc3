//! The time loop behind `run` and `resume`.

use std::path::{Path, PathBuf};

use crate::diagnostics::{balance_residual, compute_perturbed_source, PerturbedLedger};
use crate::error::{Error, Result};
use crate::grid_state::SimulationState;
use crate::splitting::step;

use super::checkpoint::write_checkpoint;
use super::config::RunSetup;
use super::output::{write_fields, EnergyRecord, EnergyWriter};

/// Largest tolerated per-step increase of `E_tot` without an imposed field.
pub const MONOTONICITY_SLACK: f64 = 1e-10;

#[derive(Debug)]
pub enum RunStatus {
    Completed,
    /// A hard invariant failed after the given step; the run stopped there.
    InvariantViolation { step: u64, message: String },
    /// A solver error aborted the step after `step`; the state before the
    /// failing step was dumped to `dump`.
    SolverFailure { step: u64, error: Error, dump: PathBuf },
}

impl RunStatus {
    /// Process exit code: 0 success, 2 invariant violation, 3 solver failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunStatus::Completed => 0,
            RunStatus::InvariantViolation { .. } => 2,
            RunStatus::SolverFailure { .. } => 3,
        }
    }
}

#[derive(Debug)]
pub struct RunOutcome {
    pub status: RunStatus,
    pub state: SimulationState,
    pub steps_taken: u64,
}

fn checkpoint_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("checkpoint_{step:08}.bin"))
}

fn fields_path(dir: &Path, step: u64) -> PathBuf {
    dir.join(format!("fields_{step:08}.csv"))
}

/// Runs `setup` from its initial state, writing into `out_dir`.
pub fn run(setup: &RunSetup, out_dir: &Path) -> Result<RunOutcome> {
    let state = setup.initial_state()?;
    run_from(setup, state, out_dir)
}

/// Continues from `state` up to step `setup.steps`. `energy.csv` starts with
/// the row of `state`, so a resumed series overlaps its parent by one row.
pub fn run_from(setup: &RunSetup, mut state: SimulationState, out_dir: &Path) -> Result<RunOutcome> {
    std::fs::create_dir_all(out_dir)?;
    let cfg = &setup.config;
    let imposed = cfg.imposed.is_some();
    let mut energy = EnergyWriter::create(&out_dir.join("energy.csv"), imposed)?;
    let perturbed = |s: &SimulationState| -> Option<PerturbedLedger> { imposed.then(|| compute_perturbed_source(s, cfg)) };
    let mut pert = perturbed(&state);
    energy.write(&EnergyRecord {
        ledger: state.ledger.current,
        dissipation_step: 0.0,
        residual: 0.0,
        perturbed: pert.map(|p| (p, 0.0)),
    })?;
    let cadence = cfg.output_cadence as u64;
    if cadence > 0 && state.step.is_multiple_of(cadence) {
        write_fields(&fields_path(out_dir, state.step), &state)?;
    }

    let start = state.step;
    while state.step < setup.steps {
        let before = state.clone();
        let report = match step(&mut state, cfg) {
            Ok(r) => r,
            Err(error) => {
                let dump = out_dir.join("checkpoint_failure.bin");
                write_checkpoint(&dump, &before)?;
                return Ok(RunOutcome {
                    status: RunStatus::SolverFailure {
                        step: before.step,
                        error,
                        dump,
                    },
                    steps_taken: before.step - start,
                    state: before,
                });
            }
        };
        let row = state.ledger.current;
        let prev = before.ledger.current;
        let next_pert = perturbed(&state);
        let balance = match (pert, next_pert) {
            (Some(a), Some(b)) => Some((b, balance_residual(&a, &b, cfg.dt))),
            _ => None,
        };
        pert = next_pert;
        energy.write(&EnergyRecord {
            ledger: row,
            dissipation_step: report.dissipation,
            residual: row.e_tot - prev.e_tot + report.dissipation,
            perturbed: balance,
        })?;
        if cadence > 0 && state.step.is_multiple_of(cadence) {
            write_fields(&fields_path(out_dir, state.step), &state)?;
            write_checkpoint(&checkpoint_path(out_dir, state.step), &state)?;
        }

        let violation = if state.f.min() < 0.0 {
            Some(format!("f has a negative value {:e}", state.f.min()))
        } else if let Some(n) = state.fields.n_e.iter().find(|n| !(**n > 0.0)) {
            Some(format!("n_e has a non-positive value {n:e}"))
        } else if !imposed && row.e_tot > prev.e_tot + MONOTONICITY_SLACK {
            Some(format!("E_tot increased by {:e} (limit {MONOTONICITY_SLACK:e})", row.e_tot - prev.e_tot))
        } else {
            None
        };
        if let Some(message) = violation {
            write_checkpoint(&out_dir.join("checkpoint_violation.bin"), &state)?;
            return Ok(RunOutcome {
                status: RunStatus::InvariantViolation {
                    step: state.step,
                    message,
                },
                steps_taken: state.step - start,
                state,
            });
        }
    }
    if cadence == 0 || !state.step.is_multiple_of(cadence) {
        write_checkpoint(&checkpoint_path(out_dir, state.step), &state)?;
    }
    Ok(RunOutcome {
        status: RunStatus::Completed,
        steps_taken: state.step - start,
        state,
    })
}
