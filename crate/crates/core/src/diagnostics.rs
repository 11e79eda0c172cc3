//! Energy accounting, imposed-field source terms, the perturbed-energy
//! horizon, and the ion momentum-balance residual.
//!
//! The total energy is
//!
//! ```text
//! E_tot = E_I + E_m + T_e (E_es + E_free),
//! E_es   = λ²/2 ∫ |∂_x ln n_e|²,   E_free = ∫ (n_e ln n_e - n_e + 1),
//! ```
//!
//! which is non-increasing under the homogeneous wall conditions, the decay
//! rate being the resistive dissipation `∫ η |J|²`.

use crate::grid_state::{RunConfig, SimulationState, Vec3};
use crate::induction::{derivative, face_currents, face_weight};
use crate::moments::{compute_moments, MomentSet};
use crate::poisson::electrostatic_energy;
use crate::sum;
use crate::vlasov::cross3;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LedgerRow {
    pub t: f64,
    pub e_i: f64,
    pub e_m: f64,
    pub e_es: f64,
    pub e_free: f64,
    pub e_tot: f64,
    /// Cumulative resistive dissipation `Σ_k dt Σ_f ω_f η |J^θ|²`.
    pub d_cum: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EnergyLedger {
    pub current: LedgerRow,
    pub history: Vec<LedgerRow>,
}

impl EnergyLedger {
    pub fn new(first: LedgerRow) -> Self {
        Self {
            current: first,
            history: vec![first],
        }
    }

    pub fn record(&mut self, row: LedgerRow) {
        self.current = row;
        self.history.push(row);
    }
}

/// Free-energy integrand `n ln n - n + 1`, non-negative for `n > 0`.
pub fn free_energy_density(n: f64) -> f64 {
    n * n.ln() - n + 1.0
}

/// Energy terms of `state`, with the cumulative dissipation `d_cum`.
pub fn compute_ledger(state: &SimulationState, cfg: &RunConfig, d_cum: f64) -> LedgerRow {
    let m = compute_moments(&state.f);
    ledger_from_moments(state, cfg, &m, d_cum)
}

pub fn ledger_from_moments(state: &SimulationState, cfg: &RunConfig, m: &MomentSet, d_cum: f64) -> LedgerRow {
    let g = state.grid();
    let dx = g.dx;
    let fs = &state.fields;
    let e_i = sum::sum(m.energy.iter().map(|e| e * dx));
    let e_m = magnetic_energy(state, cfg, true);
    let e_es = electrostatic_energy(&fs.log_ne, cfg.lambda, dx);
    let e_free = sum::sum(fs.n_e.iter().map(|&n| free_energy_density(n) * dx));
    LedgerRow {
        t: state.t,
        e_i,
        e_m,
        e_es,
        e_free,
        e_tot: e_i + e_m + cfg.t_e * (e_es + e_free),
        d_cum,
    }
}

/// `½ Σ |B|² dx`, including the constant axial part. With `total = false`
/// in imposed-field mode only the perturbation is counted.
pub fn magnetic_energy(state: &SimulationState, cfg: &RunConfig, total: bool) -> f64 {
    let fs = &state.fields;
    let dx = state.grid().dx;
    let n = fs.by.len();
    let (iy, iz) = match (&cfg.imposed, total) {
        (Some(imp), true) => (imp.by.clone(), imp.bz.clone()),
        _ => (vec![0.0; n], vec![0.0; n]),
    };
    let axial = if total { fs.bx0 * fs.bx0 } else { 0.0 };
    0.5 * sum::sum((0..n).map(|i| {
        let y = fs.by[i] + iy[i];
        let z = fs.bz[i] + iz[i];
        (axial + y * y + z * z) * dx
    }))
}

/// Per-step residual of the energy balance:
/// `(E_tot(t_{k+1}) - E_tot(t_k)) + dt Σ η |J^θ|²`.
pub fn dissipation_residual(e_tot_prev: f64, e_tot_next: f64, dissipation_step: f64) -> f64 {
    e_tot_next - e_tot_prev + dissipation_step
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PerturbedLedger {
    pub e_m_pert: f64,
    pub e_tot_pert: f64,
    /// The three integrals of the source: resistive, Hall, ion transport.
    pub s_terms: [f64; 3],
    pub s: f64,
    /// Instantaneous resistive dissipation of the perturbation, `Σ η |J_pert|² dx`.
    pub dissipation_rate: f64,
    pub j_imp_inf: f64,
}

/// Perturbed energy and the source
/// `S = -∫ η J_imp·J_pert - ∫ (J_imp ∧ B)·J_pert / n_e + ∫ (J_imp ∧ B)·n_I u_I / n_e`
/// evaluated at the current state (zero without an imposed field).
pub fn compute_perturbed_source(state: &SimulationState, cfg: &RunConfig) -> PerturbedLedger {
    let m = compute_moments(&state.f);
    perturbed_from_moments(state, cfg, &m)
}

pub fn perturbed_from_moments(state: &SimulationState, cfg: &RunConfig, m: &MomentSet) -> PerturbedLedger {
    let g = state.grid();
    let dx = g.dx;
    let n = g.nx;
    let fs = &state.fields;
    let e_m_pert = magnetic_energy(state, cfg, false);
    let row = ledger_from_moments(state, cfg, m, 0.0);
    let e_tot_pert = row.e_i + e_m_pert + cfg.t_e * (row.e_es + row.e_free);
    let jp = face_currents(&fs.by, &fs.bz, dx);
    let dissipation_rate = sum::sum(
        (0..=n).map(|f| face_weight(f, n, dx) * cfg.eta.faces[f] * (jp[f][1] * jp[f][1] + jp[f][2] * jp[f][2])),
    );
    let Some(imp) = &cfg.imposed else {
        return PerturbedLedger {
            e_m_pert,
            e_tot_pert,
            dissipation_rate,
            ..Default::default()
        };
    };
    let b: Vec<Vec3> = (0..n).map(|i| [fs.bx0, imp.by[i] + fs.by[i], imp.bz[i] + fs.bz[i]]).collect();
    let b_over_ne_face = |f: usize| -> Vec3 {
        let at = |i: usize| -> Vec3 { std::array::from_fn(|k| b[i][k] / fs.n_e[i]) };
        if f == 0 {
            at(0)
        } else if f == n {
            at(n - 1)
        } else {
            let (l, r) = (at(f - 1), at(f));
            std::array::from_fn(|k| 0.5 * (l[k] + r[k]))
        }
    };
    let mut terms = [0.0; 3];
    let mut s1 = Vec::with_capacity(n + 1);
    let mut s2 = Vec::with_capacity(n + 1);
    for f in 0..=n {
        let w = face_weight(f, n, dx);
        let ji = [0.0, imp.jy_faces[f], imp.jz_faces[f]];
        let hall = cross3(ji, b_over_ne_face(f));
        s1.push(-w * cfg.eta.faces[f] * (ji[1] * jp[f][1] + ji[2] * jp[f][2]));
        s2.push(-w * (hall[1] * jp[f][1] + hall[2] * jp[f][2]));
    }
    terms[0] = sum::sum(s1);
    terms[1] = sum::sum(s2);
    terms[2] = sum::sum((0..n).map(|i| {
        let jc = [0.0, 0.5 * (imp.jy_faces[i] + imp.jy_faces[i + 1]), 0.5 * (imp.jz_faces[i] + imp.jz_faces[i + 1])];
        let t = cross3(jc, b[i]);
        let nu = m.nu[i];
        dx * (t[0] * nu[0] + t[1] * nu[1] + t[2] * nu[2]) / fs.n_e[i]
    }));
    PerturbedLedger {
        e_m_pert,
        e_tot_pert,
        s_terms: terms,
        s: terms[0] + terms[1] + terms[2],
        dissipation_rate,
        j_imp_inf: imp.j_inf(),
    }
}

/// Rate residual of the perturbed-energy balance over one step,
///
/// ```text
/// (E_tot_pert(t+dt) - E_tot_pert(t))/dt + <Σ η |J_pert|²> - <S>,
/// ```
///
/// where `<·>` is the trapezoidal mean of the two instantaneous values.
pub fn balance_residual(prev: &PerturbedLedger, next: &PerturbedLedger, dt: f64) -> f64 {
    (next.e_tot_pert - prev.e_tot_pert) / dt + 0.5 * (prev.dissipation_rate + next.dissipation_rate)
        - 0.5 * (prev.s + next.s)
}

/// Time horizon `T* = ln(1 + C/‖J_imp‖_∞)` up to which the perturbed energy
/// is bounded; `+∞` when the imposed current vanishes.
pub fn horizon_estimate(j_imp_inf: f64, c_data: f64) -> crate::error::Result<f64> {
    if !(c_data > 0.0) {
        return Err(crate::error::Error::InvalidInput(format!("C must be > 0, got {c_data}")));
    }
    if !(j_imp_inf >= 0.0) {
        return Err(crate::error::Error::InvalidInput(format!("‖J_imp‖ must be >= 0, got {j_imp_inf}")));
    }
    if j_imp_inf == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((c_data / j_imp_inf).ln_1p())
}

/// Nodewise residual of the ion momentum balance between two states `dt`
/// apart,
///
/// ```text
/// ∂_t(n_I u_I) + ∂_x Π_x· + T_e ∂_x n_e e_x - J∧B
///     - (n_e - n_I)/n_e [T_e ∂_x n_e e_x + (n_I u_I - J)∧B],
/// ```
///
/// with `Π = Σ f v⊗v dv³`; spatial terms are averaged over the two states.
pub fn momentum_residual(prev: &SimulationState, next: &SimulationState, dt: f64, cfg: &RunConfig) -> Vec<Vec3> {
    let spatial = |s: &SimulationState| -> Vec<Vec3> {
        let g = s.grid();
        let n = g.nx;
        let dx = g.dx;
        let m = compute_moments(&s.f);
        // First row of the momentum-flux tensor, Σ f v_x v dv³.
        let flux: Vec<Vec3> = (0..n)
            .map(|ix| {
                let node = s.f.node(ix);
                let mut acc = [0.0; 3];
                for (k, fv) in node.iter().enumerate() {
                    let v = g.velocity(k);
                    for c in 0..3 {
                        acc[c] += fv * v[0] * v[c];
                    }
                }
                acc.map(|a| a * g.dv3())
            })
            .collect();
        let dflux: Vec<Vec<f64>> = (0..3)
            .map(|c| derivative(&flux.iter().map(|p| p[c]).collect::<Vec<_>>(), dx))
            .collect();
        let fs = &s.fields;
        let (iy, iz) = match &cfg.imposed {
            Some(imp) => (imp.by.clone(), imp.bz.clone()),
            None => (vec![0.0; n], vec![0.0; n]),
        };
        let by: Vec<f64> = (0..n).map(|i| fs.by[i] + iy[i]).collect();
        let bz: Vec<f64> = (0..n).map(|i| fs.bz[i] + iz[i]).collect();
        let (jy, jz) = crate::induction::compute_current(&by, &bz, dx);
        let dne = derivative(&fs.n_e, dx);
        (0..n)
            .map(|i| {
                let b = [fs.bx0, by[i], bz[i]];
                let j = [0.0, jy[i], jz[i]];
                let jxb = cross3(j, b);
                let nu = m.nu[i];
                let rel = (fs.n_e[i] - m.n[i]) / fs.n_e[i];
                let drive = cross3(std::array::from_fn(|k| nu[k] - j[k]), b);
                std::array::from_fn(|k| {
                    let grad = if k == 0 { cfg.t_e * dne[i] } else { 0.0 };
                    dflux[k][i] + grad - jxb[k] - rel * (grad + drive[k])
                })
            })
            .collect()
    };
    let a = spatial(prev);
    let b = spatial(next);
    let m0 = compute_moments(&prev.f);
    let m1 = compute_moments(&next.f);
    (0..a.len())
        .map(|i| std::array::from_fn(|k| (m1.nu[i][k] - m0.nu[i][k]) / dt + 0.5 * (a[i][k] + b[i][k])))
        .collect()
}
