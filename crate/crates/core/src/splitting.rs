//! One time step as a composition of three frozen-coefficient stages:
//!
//! 1. Vlasov–Poisson: free streaming and the electrostatic kick, with the
//!    field unchanged (drift–kick–drift, Poisson re-solved after each drift);
//! 2. magnetic stage 1: the linear implicit field solve with `n_I`, `n_e`
//!    and `B` frozen, and the matching ion velocity translation;
//! 3. magnetic stage 2: rotation of the ion velocities about the frozen
//!    field around the ion drift.
//!
//! Stage 2 conserves energy, the Vlasov–Poisson stage conserves it up to its
//! discretization error, and stage 1 dissipates exactly the resistive
//! term, so the total energy decays step by step.

use std::time::Instant;

use crate::diagnostics::{ledger_from_moments, EnergyLedger, LedgerRow};
use crate::error::Result;
use crate::grid_state::{DistributionFunction, FieldState, RunConfig, SimulationState, SplittingOrder, Vec3};
use crate::induction::{solve_stage1, Stage1Input};
use crate::moments::compute_moments;
use crate::poisson::{solve_log_ne, solve_log_ne_from};
use crate::vlasov::{advect_x, RemapReport, ion_momentum_rotation, kick_acceleration, rotate_v, shift_v};

#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub name: &'static str,
    pub dt: f64,
    pub before: LedgerRow,
    pub after: LedgerRow,
    pub seconds: f64,
    /// Frozen axis field used by the magnetic stages, per node.
    pub frozen_d: Vec<Vec3>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageTrace {
    pub stages: Vec<StageRecord>,
}

impl StageTrace {
    /// Sum of the stage-wise total-energy changes.
    pub fn total_change(&self) -> f64 {
        self.stages.iter().map(|s| s.after.e_tot - s.before.e_tot).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct StepReport {
    pub trace: StageTrace,
    /// `dt Σ η |J^θ|²` summed over the magnetic stage-1 solves of the step.
    pub dissipation: f64,
    /// `dt S^θ` summed likewise (imposed-field mode).
    pub source: f64,
    /// Mass pushed across the velocity-box boundary during the step.
    pub outflow: RemapReport,
    /// Newton iterations of the Poisson solves.
    pub newton_iters: usize,
}

/// Builds the state at `t = 0`: solves for `n_e` and records the first ledger row.
pub fn initialize_state(
    f: DistributionFunction,
    bx0: f64,
    by: Vec<f64>,
    bz: Vec<f64>,
    cfg: &RunConfig,
) -> Result<SimulationState> {
    cfg.validate()?;
    let dx = f.grid.dx;
    let nx = f.grid.nx;
    let m = compute_moments(&f);
    let sol = solve_log_ne(&m.n, cfg.lambda, dx, cfg.newton_tol)?;
    let fields = FieldState::new(bx0, by, bz, sol.log_ne, dx);
    let mut state = SimulationState {
        t: 0.0,
        step: 0,
        f,
        fields,
        ledger: EnergyLedger::default(),
        box_outflow: 0.0,
        m_last: vec![[0.0; 3]; nx],
    };
    let row = ledger_from_moments(&state, cfg, &m, 0.0);
    state.ledger = EnergyLedger::new(row);
    Ok(state)
}

fn snapshot(state: &SimulationState, cfg: &RunConfig, d_cum: f64) -> LedgerRow {
    let m = compute_moments(&state.f);
    ledger_from_moments(state, cfg, &m, d_cum)
}

/// Total field at the centers, `(Bx0, B_imp + B_pert)`.
pub fn total_field(state: &SimulationState, cfg: &RunConfig) -> Vec<Vec3> {
    let fs = &state.fields;
    (0..fs.by.len())
        .map(|i| {
            let (iy, iz) = cfg.imposed.as_ref().map_or((0.0, 0.0), |imp| (imp.by[i], imp.bz[i]));
            [fs.bx0, fs.by[i] + iy, fs.bz[i] + iz]
        })
        .collect()
}

fn resolve_poisson(state: &mut SimulationState, cfg: &RunConfig) -> Result<usize> {
    let m = compute_moments(&state.f);
    let sol = solve_log_ne_from(&m.n, cfg.lambda, state.grid().dx, cfg.newton_tol, &state.fields.log_ne)?;
    state.fields.set_log_ne(sol.log_ne);
    Ok(sol.newton_iters)
}

/// What a single stage did besides updating the state.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct StageOutcome {
    pub outflow: RemapReport,
    pub newton_iters: usize,
    /// `dt Σ η |J^θ|²` (magnetic stage 1 only).
    pub dissipation: f64,
    /// `dt S^θ` (magnetic stage 1 in imposed-field mode only).
    pub source: f64,
    /// Frozen axis field of the magnetic stages, per node.
    pub d: Vec<Vec3>,
}

/// Vlasov–Poisson stage over `dt`.
pub fn stage_vlasov_poisson(state: &mut SimulationState, cfg: &RunConfig, dt: f64) -> Result<StageOutcome> {
    let dx = state.grid().dx;
    advect_x(&mut state.f, 0.5 * dt, cfg.kernel);
    let mut iters = resolve_poisson(state, cfg)?;
    let acc = kick_acceleration(&state.fields.log_ne, cfg.t_e, dx);
    let delta_v: Vec<Vec3> = acc.iter().map(|a| [a * dt, 0.0, 0.0]).collect();
    let outflow = shift_v(&mut state.f, &delta_v, cfg.kernel)?;
    advect_x(&mut state.f, 0.5 * dt, cfg.kernel);
    iters += resolve_poisson(state, cfg)?;
    Ok(StageOutcome {
        outflow,
        newton_iters: iters,
        ..Default::default()
    })
}

/// Frozen-coefficient implicit field solve and ion translation over `dt`.
pub fn stage_magnetic_1(state: &mut SimulationState, cfg: &RunConfig, dt: f64) -> Result<StageOutcome> {
    let m = compute_moments(&state.f);
    let mut b_frozen = total_field(state, cfg);
    let dx = state.grid().dx;
    let fs = &state.fields;
    let solve = |b_frozen: &[Vec3]| {
        solve_stage1(Stage1Input {
            by: &fs.by,
            bz: &fs.bz,
            b_frozen,
            n_i: &m.n,
            n_e: &fs.n_e,
            nu: &m.nu,
            eta: &cfg.eta,
            imposed: cfg.imposed.as_ref(),
            theta: cfg.theta,
            dt,
            dx,
            linear_tol: cfg.linear_tol,
        })
    };
    let mut sol = solve(&b_frozen)?;
    if cfg.midpoint_field {
        for (i, b) in b_frozen.iter_mut().enumerate() {
            b[1] += 0.5 * (sol.by[i] - fs.by[i]);
            b[2] += 0.5 * (sol.bz[i] - fs.bz[i]);
        }
        sol = solve(&b_frozen)?;
    }
    let d = (0..m.n.len())
        .map(|i| {
            let s = m.n[i] / fs.n_e[i];
            b_frozen[i].map(|b| s * b)
        })
        .collect();
    let outflow = shift_v(&mut state.f, &sol.delta_v, cfg.kernel)?;
    state.fields.set_tangential(sol.by, sol.bz, dx);
    state.m_last = sol.m;
    Ok(StageOutcome {
        outflow,
        dissipation: sol.dissipation,
        source: sol.source,
        d,
        ..Default::default()
    })
}

/// Rotation stage over `dt`.
pub fn stage_magnetic_2(state: &mut SimulationState, cfg: &RunConfig, dt: f64) -> Result<StageOutcome> {
    let m = compute_moments(&state.f);
    let b = total_field(state, cfg);
    let n_e = &state.fields.n_e;
    let nx = m.n.len();
    let d: Vec<Vec3> = (0..nx)
        .map(|i| {
            let s = 1.0 - m.n[i] / n_e[i];
            b[i].map(|c| s * c)
        })
        .collect();
    let nu_after: Vec<Vec3> = (0..nx).map(|i| ion_momentum_rotation(m.nu[i], d[i], dt)).collect();
    let drift: Vec<Vec3> = (0..nx)
        .map(|i| ion_momentum_rotation(m.nu[i], d[i], 0.5 * dt).map(|c| c / n_e[i]))
        .collect();
    let outflow = rotate_v(&mut state.f, &b, &drift, &nu_after, dt, cfg.kernel)?;
    Ok(StageOutcome {
        outflow,
        d,
        ..Default::default()
    })
}

/// Advances `state` by `cfg.dt` and appends a ledger row.
pub fn step(state: &mut SimulationState, cfg: &RunConfig) -> Result<StepReport> {
    let dt = cfg.dt;
    let mut report = StepReport::default();
    let d_cum = state.ledger.current.d_cum;
    let plan: Vec<(u8, f64)> = match cfg.splitting {
        SplittingOrder::Lie => vec![(0, dt), (1, dt), (2, dt)],
        SplittingOrder::Strang => vec![(0, 0.5 * dt), (2, 0.5 * dt), (1, dt), (2, 0.5 * dt), (0, 0.5 * dt)],
    };
    let mut before = state.ledger.current;
    for (stage, h) in plan {
        let clock = Instant::now();
        let (name, out) = match stage {
            0 => ("vlasov_poisson", stage_vlasov_poisson(state, cfg, h)?),
            1 => ("magnetic_1", stage_magnetic_1(state, cfg, h)?),
            _ => ("magnetic_2", stage_magnetic_2(state, cfg, h)?),
        };
        report.outflow.absorb(out.outflow);
        report.newton_iters += out.newton_iters;
        report.dissipation += out.dissipation;
        report.source += out.source;
        let frozen_d = out.d;
        let after = snapshot(state, cfg, d_cum + report.dissipation);
        report.trace.stages.push(StageRecord {
            name,
            dt: h,
            before,
            after,
            seconds: clock.elapsed().as_secs_f64(),
            frozen_d,
        });
        before = after;
    }
    state.t += dt;
    state.step += 1;
    state.box_outflow += report.outflow.outflow_mass;
    let mut row = before;
    row.t = state.t;
    state.ledger.record(row);
    Ok(report)
}
