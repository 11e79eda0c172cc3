//! CSV outputs: the per-step energy time series and field snapshots.

use std::fs::File;
use std::path::Path;

use crate::diagnostics::{LedgerRow, PerturbedLedger};
use crate::error::Result;
use crate::grid_state::SimulationState;
use crate::moments::compute_moments;

pub const ENERGY_COLUMNS: [&str; 8] = ["t", "E_I", "E_m", "E_es", "E_free", "E_tot", "dissipation_step", "residual"];
pub const IMPOSED_COLUMNS: [&str; 3] = ["E_m_pert", "S", "balance_residual"];
pub const FIELD_COLUMNS: [&str; 10] = ["x", "n_I", "n_e", "uIx", "uIy", "uIz", "By", "Bz", "Jy", "Jz"];

fn num(v: f64) -> String {
    format!("{v:e}")
}

/// One line of `energy.csv`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyRecord {
    pub ledger: LedgerRow,
    /// `dt Σ η |J^θ|²` of the step (0 on the initial row).
    pub dissipation_step: f64,
    /// `ΔE_tot + dissipation_step`.
    pub residual: f64,
    /// Imposed-field mode: perturbed ledger and the balance-residual rate.
    pub perturbed: Option<(PerturbedLedger, f64)>,
}

pub struct EnergyWriter {
    csv: csv::Writer<File>,
    imposed: bool,
}

impl EnergyWriter {
    pub fn create(path: &Path, imposed: bool) -> Result<Self> {
        let mut csv = csv::Writer::from_path(path)?;
        let mut header: Vec<&str> = ENERGY_COLUMNS.to_vec();
        if imposed {
            header.extend(IMPOSED_COLUMNS);
        }
        csv.write_record(&header)?;
        Ok(Self { csv, imposed })
    }

    pub fn write(&mut self, r: &EnergyRecord) -> Result<()> {
        let l = &r.ledger;
        let mut rec: Vec<String> = [l.t, l.e_i, l.e_m, l.e_es, l.e_free, l.e_tot, r.dissipation_step, r.residual]
            .into_iter()
            .map(num)
            .collect();
        if self.imposed {
            let (p, b) = r.perturbed.unwrap_or_default();
            rec.extend([p.e_m_pert, p.s, b].map(num));
        }
        self.csv.write_record(&rec)?;
        self.csv.flush()?;
        Ok(())
    }
}

/// Writes `x, n_I, n_e, u_I, By, Bz, Jy, Jz` per cell center. `B` and `J`
/// are the evolved fields (the perturbation in imposed-field mode).
pub fn write_fields(path: &Path, state: &SimulationState) -> Result<()> {
    let m = compute_moments(&state.f);
    let fs = &state.fields;
    let mut csv = csv::Writer::from_path(path)?;
    csv.write_record(FIELD_COLUMNS)?;
    for (i, &x) in state.grid().x_centers.iter().enumerate() {
        let u = m.velocity(i);
        let row = [x, m.n[i], fs.n_e[i], u[0], u[1], u[2], fs.by[i], fs.bz[i], fs.jy[i], fs.jz[i]];
        csv.write_record(row.map(num))?;
    }
    csv.flush()?;
    Ok(())
}
