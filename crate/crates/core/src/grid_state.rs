//! Discrete phase space, simulation state and run configuration.
//!
//! The spatial domain is the interval `[0, L]` split into `nx` uniform
//! cells; the velocity space is the cube `[-v_max, v_max]^3` split into
//! `nv` cells per component. `f` is stored cell-averaged with the v_z
//! index fastest:
//!
//! ```text
//! idx(ix, a, b, c) = ((ix * nv + a) * nv + b) * nv + c
//! ```

use std::fmt;

use statrs::function::erf::erfc;

use crate::diagnostics::EnergyLedger;
use crate::error::{Error, Result};
use crate::induction;
use crate::remap::RemapKernel;

pub type Vec3 = [f64; 3];

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseSpaceGrid {
    pub length: f64,
    pub nx: usize,
    pub nv: usize,
    pub v_max: f64,
    pub dx: f64,
    pub dv: f64,
    pub x_centers: Vec<f64>,
    /// Velocity cell centers, exactly antisymmetric: `v[nv-1-a] == -v[a]`.
    pub v_nodes: Vec<f64>,
}

impl PhaseSpaceGrid {
    pub fn new(length: f64, nx: usize, nv: usize, v_max: f64) -> Result<Self> {
        if !(length > 0.0 && length.is_finite()) {
            return Err(Error::InvalidInput(format!("L must be > 0, got {length}")));
        }
        if nx == 0 {
            return Err(Error::InvalidInput("Nx must be >= 1".into()));
        }
        if nv < 2 || !nv.is_multiple_of(2) {
            return Err(Error::InvalidInput(format!(
                "Nv must be even so that v_x -> -v_x maps the grid onto itself, got {nv}"
            )));
        }
        if !(v_max > 0.0 && v_max.is_finite()) {
            return Err(Error::InvalidInput(format!("v_max must be > 0, got {v_max}")));
        }
        let dx = length / nx as f64;
        let dv = 2.0 * v_max / nv as f64;
        let x_centers = (0..nx).map(|i| (i as f64 + 0.5) * dx).collect();
        let half = nv / 2;
        let mut v_nodes = vec![0.0; nv];
        for k in 0..half {
            let v = (k as f64 + 0.5) * dv;
            v_nodes[half + k] = v;
            v_nodes[half - 1 - k] = -v;
        }
        Ok(Self {
            length,
            nx,
            nv,
            v_max,
            dx,
            dv,
            x_centers,
            v_nodes,
        })
    }

    /// Number of velocity cells per x node.
    #[inline]
    pub fn node_len(&self) -> usize {
        self.nv * self.nv * self.nv
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.nx * self.node_len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn idx(&self, ix: usize, a: usize, b: usize, c: usize) -> usize {
        ((ix * self.nv + a) * self.nv + b) * self.nv + c
    }

    #[inline]
    pub fn dv3(&self) -> f64 {
        self.dv * self.dv * self.dv
    }

    /// Position of face `f` (face 0 is the left wall, face `nx` the right one).
    #[inline]
    pub fn face_x(&self, f: usize) -> f64 {
        f as f64 * self.dx
    }

    /// Velocity of local (per x node) index `k`.
    #[inline]
    pub fn velocity(&self, k: usize) -> Vec3 {
        let nv = self.nv;
        [
            self.v_nodes[k / (nv * nv)],
            self.v_nodes[(k / nv) % nv],
            self.v_nodes[k % nv],
        ]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DistributionFunction {
    pub grid: PhaseSpaceGrid,
    pub values: Vec<f64>,
}

impl DistributionFunction {
    pub fn zeros(grid: &PhaseSpaceGrid) -> Self {
        Self {
            values: vec![0.0; grid.len()],
            grid: grid.clone(),
        }
    }

    pub fn node(&self, ix: usize) -> &[f64] {
        let n = self.grid.node_len();
        &self.values[ix * n..(ix + 1) * n]
    }

    pub fn node_mut(&mut self, ix: usize) -> &mut [f64] {
        let n = self.grid.node_len();
        &mut self.values[ix * n..(ix + 1) * n]
    }

    /// Total mass `sum f dx dv^3`, summed node by node in a fixed order.
    pub fn total_mass(&self) -> f64 {
        let w = self.grid.dx * self.grid.dv3();
        crate::sum::sum(self.values.iter().map(|&v| v * w))
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Magnetic field, current and electron density on the cell centers.
///
/// In imposed-field mode `by`/`bz` hold the perturbation `B - B_imp`; the
/// axial component `bx0` is constant in x, so `div B = 0` holds by
/// construction.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldState {
    pub bx0: f64,
    pub by: Vec<f64>,
    pub bz: Vec<f64>,
    pub n_e: Vec<f64>,
    pub log_ne: Vec<f64>,
    pub jy: Vec<f64>,
    pub jz: Vec<f64>,
}

impl FieldState {
    pub fn new(bx0: f64, by: Vec<f64>, bz: Vec<f64>, log_ne: Vec<f64>, dx: f64) -> Self {
        let n_e = log_ne.iter().map(|u| u.exp()).collect();
        let (jy, jz) = induction::compute_current(&by, &bz, dx);
        Self {
            bx0,
            by,
            bz,
            n_e,
            log_ne,
            jy,
            jz,
        }
    }

    pub fn set_log_ne(&mut self, log_ne: Vec<f64>) {
        self.n_e = log_ne.iter().map(|u| u.exp()).collect();
        self.log_ne = log_ne;
    }

    pub fn set_tangential(&mut self, by: Vec<f64>, bz: Vec<f64>, dx: f64) {
        let (jy, jz) = induction::compute_current(&by, &bz, dx);
        self.by = by;
        self.bz = bz;
        self.jy = jy;
        self.jz = jz;
    }

    pub fn b_at(&self, i: usize) -> Vec3 {
        [self.bx0, self.by[i], self.bz[i]]
    }
}

/// Resistivity sampled on cell centers and on faces.
#[derive(Clone, Debug, PartialEq)]
pub struct EtaProfile {
    pub centers: Vec<f64>,
    pub faces: Vec<f64>,
}

impl EtaProfile {
    pub fn constant(grid: &PhaseSpaceGrid, eta: f64) -> Self {
        Self::from_fn(grid, |_| eta)
    }

    pub fn from_fn(grid: &PhaseSpaceGrid, eta: impl Fn(f64) -> f64) -> Self {
        Self {
            centers: grid.x_centers.iter().map(|&x| eta(x)).collect(),
            faces: (0..=grid.nx).map(|f| eta(grid.face_x(f))).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.centers
            .iter()
            .chain(&self.faces)
            .copied()
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.centers
            .iter()
            .chain(&self.faces)
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Imposed background field `B_imp` sampled on centers plus one ghost
/// sample beyond each wall, and its current on faces.
#[derive(Clone, Debug, PartialEq)]
pub struct ImposedField {
    pub by: Vec<f64>,
    pub bz: Vec<f64>,
    /// `[left, right]` samples at `x = -dx/2` and `x = L + dx/2`.
    pub by_ghost: [f64; 2],
    pub bz_ghost: [f64; 2],
    pub jy_faces: Vec<f64>,
    pub jz_faces: Vec<f64>,
}

impl ImposedField {
    pub fn from_fn(grid: &PhaseSpaceGrid, profile: impl Fn(f64) -> (f64, f64)) -> Self {
        let nx = grid.nx;
        let (by, bz): (Vec<f64>, Vec<f64>) = grid.x_centers.iter().map(|&x| profile(x)).unzip();
        let (lby, lbz) = profile(-0.5 * grid.dx);
        let (rby, rbz) = profile(grid.length + 0.5 * grid.dx);
        let ext = |inner: &[f64], l: f64, r: f64, f: usize| -> (f64, f64) {
            let left = if f == 0 { l } else { inner[f - 1] };
            let right = if f == nx { r } else { inner[f] };
            (left, right)
        };
        let mut jy_faces = vec![0.0; nx + 1];
        let mut jz_faces = vec![0.0; nx + 1];
        for f in 0..=nx {
            let (zl, zr) = ext(&bz, lbz, rbz, f);
            let (yl, yr) = ext(&by, lby, rby, f);
            jy_faces[f] = -(zr - zl) / grid.dx;
            jz_faces[f] = (yr - yl) / grid.dx;
        }
        Self {
            by,
            bz,
            by_ghost: [lby, rby],
            bz_ghost: [lbz, rbz],
            jy_faces,
            jz_faces,
        }
    }

    /// `||B_imp||_{1,inf}`: max field magnitude plus max current magnitude.
    pub fn w1_inf(&self) -> f64 {
        let b = self
            .by
            .iter()
            .zip(&self.bz)
            .map(|(y, z)| y.hypot(*z))
            .fold(0.0, f64::max);
        b + self.j_inf()
    }

    /// `||J_imp||_inf` over faces.
    pub fn j_inf(&self) -> f64 {
        self.jy_faces
            .iter()
            .zip(&self.jz_faces)
            .map(|(y, z)| y.hypot(*z))
            .fold(0.0, f64::max)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SplittingOrder {
    Lie,
    Strang,
}

impl fmt::Display for SplittingOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SplittingOrder::Lie => write!(f, "lie"),
            SplittingOrder::Strang => write!(f, "strang"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub lambda: f64,
    pub t_e: f64,
    pub eta: EtaProfile,
    pub imposed: Option<ImposedField>,
    pub dt: f64,
    pub t_end: f64,
    pub splitting: SplittingOrder,
    pub newton_tol: f64,
    pub linear_tol: f64,
    /// Implicitness of the magnetic solve, in `[1/2, 1]`.
    pub theta: f64,
    /// Freeze the magnetic stage-1 coefficients at a predicted mid-stage
    /// field instead of the field at the start of the stage (one extra linear
    /// solve; second-order consistent source and Hall terms).
    pub midpoint_field: bool,
    pub kernel: RemapKernel,
    /// Steps between field snapshots / checkpoints; 0 disables them.
    pub output_cadence: usize,
}

impl RunConfig {
    /// Defaults used by tests and suites: backward Euler, limited parabolic
    /// remap, Lie splitting.
    pub fn new(grid: &PhaseSpaceGrid, lambda: f64, t_e: f64, eta: f64, dt: f64) -> Self {
        Self {
            lambda,
            t_e,
            eta: EtaProfile::constant(grid, eta),
            imposed: None,
            dt,
            t_end: dt,
            splitting: SplittingOrder::Lie,
            newton_tol: 1e-12,
            linear_tol: 1e-12,
            theta: 1.0,
            midpoint_field: false,
            kernel: RemapKernel::default(),
            output_cadence: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Validation(msg));
        if !(self.lambda > 0.0) {
            return bad(format!("lambda must be > 0, got {}", self.lambda));
        }
        if !(self.t_e > 0.0) {
            return bad(format!("T_e must be > 0, got {}", self.t_e));
        }
        let eta_min = self.eta.min();
        if !(eta_min > 0.0) {
            return bad(format!(
                "eta_min must be > 0 (resistivity bounded away from zero), got {eta_min}"
            ));
        }
        if !self.eta.max().is_finite() {
            return bad("eta_max must be finite".into());
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be > 0, got {}", self.dt));
        }
        if !(self.t_end >= 0.0) {
            return bad(format!("t_end must be >= 0, got {}", self.t_end));
        }
        for (name, tol) in [("newton_tol", self.newton_tol), ("linear_tol", self.linear_tol)] {
            if !(tol > 0.0 && tol < 1.0) {
                return bad(format!("{name} must lie in (0, 1), got {tol}"));
            }
        }
        if !(0.5..=1.0).contains(&self.theta) {
            return bad(format!("theta must lie in [0.5, 1], got {}", self.theta));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SimulationState {
    pub t: f64,
    pub step: u64,
    pub f: DistributionFunction,
    pub fields: FieldState,
    pub ledger: EnergyLedger,
    /// Mass the velocity remaps pushed across the velocity-box boundary since
    /// t = 0 (redistributed inside the box, so not lost).
    pub box_outflow: f64,
    /// Time-integrated current of the last magnetic stage, per center.
    pub m_last: Vec<Vec3>,
}

impl SimulationState {
    pub fn grid(&self) -> &PhaseSpaceGrid {
        &self.f.grid
    }
}

/// Samples `density(x) (2 pi T)^{-3/2} exp(-|v - drift(x)|^2 / 2T)` on the grid.
pub fn make_maxwellian(
    grid: &PhaseSpaceGrid,
    density: &[f64],
    temperature: f64,
    drift: &[Vec3],
) -> Result<DistributionFunction> {
    if density.len() != grid.nx || drift.len() != grid.nx {
        return Err(Error::InvalidInput("profile length must equal Nx".into()));
    }
    if !(temperature > 0.0) {
        return Err(Error::InvalidInput(format!("temperature must be > 0, got {temperature}")));
    }
    if let Some(d) = density.iter().find(|d| !(**d >= 0.0)) {
        return Err(Error::InvalidInput(format!("density must be >= 0, got {d}")));
    }

    let sigma = temperature.sqrt();
    let total: f64 = density.iter().sum();
    if total > 0.0 {
        let mut outside = 0.0;
        for (n, u) in density.iter().zip(drift) {
            let inside: f64 = u
                .iter()
                .map(|&uk| {
                    let lo = (-grid.v_max - uk) / (sigma * std::f64::consts::SQRT_2);
                    let hi = (grid.v_max - uk) / (sigma * std::f64::consts::SQRT_2);
                    1.0 - 0.5 * erfc(-lo) - 0.5 * erfc(hi)
                })
                .product();
            outside += n * (1.0 - inside);
        }
        let fraction = outside / total;
        if fraction > 1e-8 {
            return Err(Error::TailTruncation { fraction });
        }
    }

    let norm = (2.0 * std::f64::consts::PI * temperature).powf(-1.5);
    let mut f = DistributionFunction::zeros(grid);
    let vn = &grid.v_nodes;
    for ix in 0..grid.nx {
        let n = density[ix];
        let u = drift[ix];
        let node = f.node_mut(ix);
        let mut k = 0;
        for &vx in vn {
            let ex = (vx - u[0]) * (vx - u[0]);
            for &vy in vn {
                let exy = ex + (vy - u[1]) * (vy - u[1]);
                for &vz in vn {
                    let e = exy + (vz - u[2]) * (vz - u[2]);
                    node[k] = n * norm * (-e / (2.0 * temperature)).exp();
                    k += 1;
                }
            }
        }
    }
    Ok(f)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Violation {
    NegativeF { index: usize, value: f64 },
    NonFiniteF { index: usize },
    NonPositiveNe { node: usize, value: f64 },
    LogNeMismatch { node: usize },
    CurrentMismatch { node: usize },
    NonFiniteField { node: usize },
    NegativeTime,
}

/// Lists violated state invariants; empty when the state is valid.
pub fn validate_state(state: &SimulationState) -> Vec<Violation> {
    let mut out = Vec::new();
    if !(state.t >= 0.0) {
        out.push(Violation::NegativeTime);
    }
    for (index, &v) in state.f.values.iter().enumerate() {
        if !v.is_finite() {
            out.push(Violation::NonFiniteF { index });
        } else if v < 0.0 {
            out.push(Violation::NegativeF { index, value: v });
        }
    }
    let fs = &state.fields;
    for node in 0..fs.n_e.len() {
        let vals = [fs.by[node], fs.bz[node], fs.n_e[node], fs.log_ne[node], fs.jy[node], fs.jz[node]];
        if vals.iter().any(|v| !v.is_finite()) || !fs.bx0.is_finite() {
            out.push(Violation::NonFiniteField { node });
            continue;
        }
        if !(fs.n_e[node] > 0.0) {
            out.push(Violation::NonPositiveNe {
                node,
                value: fs.n_e[node],
            });
        } else if (fs.n_e[node].ln() - fs.log_ne[node]).abs() > 1e-12 * (1.0 + fs.log_ne[node].abs()) {
            out.push(Violation::LogNeMismatch { node });
        }
    }
    let (jy, jz) = induction::compute_current(&fs.by, &fs.bz, state.f.grid.dx);
    let scale = jy
        .iter()
        .chain(&jz)
        .fold(1.0_f64, |m, v| m.max(v.abs()));
    for node in 0..jy.len() {
        if (jy[node] - fs.jy[node]).abs() > 1e-12 * scale || (jz[node] - fs.jz[node]).abs() > 1e-12 * scale {
            out.push(Violation::CurrentMismatch { node });
        }
    }
    out
}
