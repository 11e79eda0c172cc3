//! Acceptance criteria of the solver, one verdict line per criterion.
//!
//! Every judged quantity is recomputed here from the raw state (distribution
//! values, field arrays, `ln n_e`) with compensated sums; the library's own
//! diagnostics are only compared against these recomputations.
//!
//! The long runs use the reference setup: `L = 2π`, 64 cells, 32³ velocity
//! nodes on `[-6, 6]³`, `λ = 0.5`, `T_e = 1`, `η = 0.1`, a uniform
//! Maxwellian and `B_y(0) = 0.1 sin(πx/L)`.

#![allow(clippy::needless_range_loop)]

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use kinhall::diagnostics::{compute_perturbed_source, horizon_estimate};
use kinhall::grid_state::{
    make_maxwellian, DistributionFunction, ImposedField, PhaseSpaceGrid, RunConfig, SimulationState, SplittingOrder,
    Vec3,
};
use kinhall::induction::{solve_stage1, Stage1Input};
use kinhall::moments::moment_bound_constants;
use kinhall::poisson::solve_log_ne;
use kinhall::splitting::{initialize_state, stage_magnetic_1, stage_magnetic_2, step};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;

const L: f64 = 2.0 * PI;
const NX: usize = 64;
const NV: usize = 32;
const V_MAX: f64 = 6.0;
const LAMBDA: f64 = 0.5;
const T_E: f64 = 1.0;
const ETA: f64 = 0.1;
const REFERENCE_STEPS: usize = 500;
const SEED: u64 = 20240611;

// ---------------------------------------------------------------- oracles

fn ksum(it: impl IntoIterator<Item = f64>) -> f64 {
    let (mut s, mut c) = (0.0_f64, 0.0_f64);
    for x in it {
        let t = s + x;
        c += if s.abs() >= x.abs() { (s - t) + x } else { (x - t) + s };
        s = t;
    }
    s + c
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Density, momentum and kinetic energy density (`½∫f|v|²`) per cell.
struct Moments {
    n: Vec<f64>,
    nu: Vec<Vec3>,
    e: Vec<f64>,
}

fn moments(f: &DistributionFunction) -> Moments {
    let g = &f.grid;
    let w = g.dv3();
    let vel: Vec<Vec3> = (0..g.node_len()).map(|k| g.velocity(k)).collect();
    let mut out = Moments {
        n: Vec::with_capacity(g.nx),
        nu: Vec::with_capacity(g.nx),
        e: Vec::with_capacity(g.nx),
    };
    for ix in 0..g.nx {
        let node = f.node(ix);
        out.n.push(w * ksum(node.iter().copied()));
        out.nu.push(std::array::from_fn(|c| w * ksum(node.iter().zip(&vel).map(|(f, v)| f * v[c]))));
        out.e.push(0.5 * w * ksum(node.iter().zip(&vel).map(|(f, v)| f * dot(*v, *v))));
    }
    out
}

fn total_mass(f: &DistributionFunction) -> f64 {
    ksum(f.values.iter().copied()) * f.grid.dv3() * f.grid.dx
}

/// Sampled imposed field: centers plus the ghost samples half a cell
/// outside each wall, from which the face currents are differenced.
struct Imposed {
    by: Vec<f64>,
    bz: Vec<f64>,
    j_faces: Vec<Vec3>,
}

fn imposed_oracle(grid: &PhaseSpaceGrid, profile: impl Fn(f64) -> (f64, f64)) -> Imposed {
    let dx = grid.dx;
    let (by, bz) = grid.x_centers.iter().map(|&x| profile(x)).unzip();
    let j_faces = (0..=grid.nx)
        .map(|f| {
            let x = f as f64 * dx;
            let (ly, lz) = profile(x - 0.5 * dx);
            let (ry, rz) = profile(x + 0.5 * dx);
            [0.0, -(rz - lz) / dx, (ry - ly) / dx]
        })
        .collect();
    Imposed { by, bz, j_faces }
}

#[derive(Clone, Copy, Debug)]
struct Energies {
    e_i: f64,
    e_m: f64,
    e_es: f64,
    e_free: f64,
    e_tot: f64,
}

/// Energy terms of `state`. With `imposed`, `e_m` counts only the tangential
/// perturbation (the perturbed energy); otherwise the full field.
fn energies(state: &SimulationState, m: &Moments, imposed: Option<&Imposed>) -> Energies {
    let dx = state.f.grid.dx;
    let fs = &state.fields;
    let e_i = ksum(m.e.iter().map(|e| e * dx));
    let e_m = match imposed {
        Some(_) => 0.5 * ksum((0..fs.by.len()).map(|i| (fs.by[i].powi(2) + fs.bz[i].powi(2)) * dx)),
        None => 0.5 * ksum((0..fs.by.len()).map(|i| (fs.bx0.powi(2) + fs.by[i].powi(2) + fs.bz[i].powi(2)) * dx)),
    };
    let u = &fs.log_ne;
    let e_es = 0.5 * LAMBDA * LAMBDA * ksum(u.windows(2).map(|w| ((w[1] - w[0]) / dx).powi(2) * dx));
    let e_free = ksum(u.iter().map(|&u| {
        let n = u.exp();
        (n * u - n + 1.0) * dx
    }));
    Energies {
        e_i,
        e_m,
        e_es,
        e_free,
        e_tot: e_i + e_m + T_E * (e_es + e_free),
    }
}

/// Currents `(0, J_y, J_z)` on faces of a tangential field vanishing at the walls.
fn face_currents(by: &[f64], bz: &[f64], dx: f64) -> Vec<Vec3> {
    let n = by.len();
    (0..=n)
        .map(|f| {
            let (ly, lz) = if f == 0 { (-by[0], -bz[0]) } else { (by[f - 1], bz[f - 1]) };
            let (ry, rz) = if f == n { (-by[n - 1], -bz[n - 1]) } else { (by[f], bz[f]) };
            [0.0, -(rz - lz) / dx, (ry - ly) / dx]
        })
        .collect()
}

fn face_weight(f: usize, n: usize, dx: f64) -> f64 {
    if f == 0 || f == n {
        0.5 * dx
    } else {
        dx
    }
}

/// `Σ_f ω_f η |J_f|²` for a uniform resistivity.
fn dissipation_rate(j: &[Vec3], dx: f64) -> f64 {
    let n = j.len() - 1;
    ksum(j.iter().enumerate().map(|(f, j)| face_weight(f, n, dx) * ETA * dot(*j, *j)))
}

/// Source of the perturbed energy: resistive, Hall and ion-transport parts.
fn perturbed_source(state: &SimulationState, m: &Moments, imp: &Imposed) -> f64 {
    let dx = state.f.grid.dx;
    let fs = &state.fields;
    let n = fs.by.len();
    let jp = face_currents(&fs.by, &fs.bz, dx);
    let b: Vec<Vec3> = (0..n).map(|i| [fs.bx0, imp.by[i] + fs.by[i], imp.bz[i] + fs.bz[i]]).collect();
    let b_over_ne = |i: usize| -> Vec3 { b[i].map(|c| c / fs.log_ne[i].exp()) };
    let resistive = ksum((0..=n).map(|f| -face_weight(f, n, dx) * ETA * dot(imp.j_faces[f], jp[f])));
    let hall = ksum((0..=n).map(|f| {
        let bf = if f == 0 {
            b_over_ne(0)
        } else if f == n {
            b_over_ne(n - 1)
        } else {
            let (l, r) = (b_over_ne(f - 1), b_over_ne(f));
            std::array::from_fn(|k| 0.5 * (l[k] + r[k]))
        };
        -face_weight(f, n, dx) * dot(cross(imp.j_faces[f], bf), jp[f])
    }));
    let transport = ksum((0..n).map(|i| {
        let jc: Vec3 = std::array::from_fn(|k| 0.5 * (imp.j_faces[i][k] + imp.j_faces[i + 1][k]));
        dx * dot(cross(jc, b[i]), m.nu[i]) / fs.log_ne[i].exp()
    }));
    resistive + hall + transport
}

/// Normal ion velocity at the two walls from the wall trace of `f`: the
/// four-point face value of the line unfolded through the wall, which pairs
/// each `v_x` with its mirror image.
fn wall_velocity(f: &DistributionFunction) -> f64 {
    let g = &f.grid;
    let plane = g.nv * g.nv;
    let half = g.nv / 2;
    let mut worst: f64 = 0.0;
    for (near, far) in [(0, 1), (g.nx - 1, g.nx - 2)] {
        let (mut mass, mut flux) = (Vec::new(), Vec::new());
        for p in 0..half {
            let (pos, neg) = (half + p, half - 1 - p);
            for k in 0..plane {
                let at = |i: usize, a: usize| f.node(i)[a * plane + k];
                let trace = (7.0 * (at(near, pos) + at(near, neg)) - at(far, pos) - at(far, neg)) / 12.0;
                for a in [pos, neg] {
                    mass.push(trace);
                    flux.push(g.v_nodes[a] * trace);
                }
            }
        }
        let m = ksum(mass);
        if m > 0.0 {
            worst = worst.max((ksum(flux) / m).abs());
        }
    }
    worst
}

/// Mass, positivity, v-box outflow and neutrality, tracked over every step
/// of every run in this file.
struct Watch {
    mass_defect: f64,
    min_f: f64,
    outflow: f64,
    neutrality: f64,
}

impl Watch {
    fn new() -> Self {
        Self {
            mass_defect: 0.0,
            min_f: f64::INFINITY,
            outflow: 0.0,
            neutrality: 0.0,
        }
    }

    fn observe(&mut self, m0: f64, state: &SimulationState, m: &Moments) {
        let dx = state.f.grid.dx;
        self.mass_defect = self.mass_defect.max(rel(total_mass(&state.f), m0));
        self.min_f = self.min_f.min(state.f.values.iter().copied().fold(f64::INFINITY, f64::min));
        self.outflow = self.outflow.max(state.box_outflow / m0);
        let ne = ksum(state.fields.log_ne.iter().map(|u| u.exp() * dx));
        let ni = ksum(m.n.iter().map(|n| n * dx));
        self.neutrality = self.neutrality.max((ne - ni).abs());
    }
}

// ---------------------------------------------------------------- setups

fn reference_grid() -> PhaseSpaceGrid {
    PhaseSpaceGrid::new(L, NX, NV, V_MAX).expect("reference grid")
}

fn reference_state(grid: &PhaseSpaceGrid, cfg: &RunConfig, by_amp: f64) -> SimulationState {
    let f = make_maxwellian(grid, &[1.0; NX], 1.0, &[[0.0; 3]; NX]).expect("maxwellian");
    let by = grid.x_centers.iter().map(|x| by_amp * (PI * x / L).sin()).collect();
    initialize_state(f, 0.0, by, vec![0.0; NX], cfg).expect("initial state")
}

/// A small non-trivial state for the single-stage checks: non-uniform
/// density, sheared drift, oblique field.
fn small_state(nx: usize, nv: usize) -> (RunConfig, SimulationState) {
    let grid = PhaseSpaceGrid::new(1.0, nx, nv, 7.0).expect("grid");
    let cfg = RunConfig::new(&grid, 0.3, T_E, ETA, 0.02);
    let dens: Vec<f64> = grid.x_centers.iter().map(|x| 1.0 + 0.3 * (2.0 * PI * x).cos()).collect();
    let drift: Vec<Vec3> = grid.x_centers.iter().map(|x| [0.2 * (PI * x).sin(), 0.3, -0.2 * x]).collect();
    let f = make_maxwellian(&grid, &dens, 1.0, &drift).expect("maxwellian");
    let by = grid.x_centers.iter().map(|x| 0.5 * (PI * x).sin()).collect();
    let bz = grid.x_centers.iter().map(|x| 0.3 * (PI * x).cos()).collect();
    let state = initialize_state(f, 0.4, by, bz, &cfg).expect("initial state");
    (cfg, state)
}

// ---------------------------------------------------------------- report

struct Verdict {
    id: usize,
    name: &'static str,
    pass: bool,
    detail: String,
}

fn print(v: &Verdict, seconds: f64) {
    let tag = if v.pass { "PASS" } else { "FAIL" };
    println!("{tag}  criterion {:>2}  {:<40} {}  [{seconds:.1}s]", v.id, v.name, v.detail);
}

// ---------------------------------------------------------------- criteria

/// Criteria 1 and 11 share the reference run.
fn reference_run(watch: &mut Watch) -> (Verdict, Verdict) {
    let grid = reference_grid();
    let cfg = RunConfig::new(&grid, LAMBDA, T_E, ETA, 0.01);
    let mut state = reference_state(&grid, &cfg, 0.1);
    let m = moments(&state.f);
    let m0 = total_mass(&state.f);
    let mut prev = energies(&state, &m, None);
    let mut increase = f64::NEG_INFINITY;
    let mut ledger_gap = rel(prev.e_tot, state.ledger.current.e_tot);
    let mut wall = wall_velocity(&state.f);
    for _ in 0..REFERENCE_STEPS {
        step(&mut state, &cfg).expect("reference step");
        let m = moments(&state.f);
        let e = energies(&state, &m, None);
        increase = increase.max(e.e_tot - prev.e_tot);
        ledger_gap = ledger_gap.max(rel(e.e_tot, state.ledger.current.e_tot));
        wall = wall.max(wall_velocity(&state.f));
        watch.observe(m0, &state, &m);
        prev = e;
    }
    let c1 = Verdict {
        id: 1,
        name: "energy monotonicity (reference run)",
        pass: increase <= 1e-10 && ledger_gap <= 1e-12,
        detail: format!(
            "max E_tot increase {increase:.3e} <= 1e-10 over {REFERENCE_STEPS} steps; ledger vs recomputed {ledger_gap:.1e} <= 1e-12"
        ),
    };
    let c11 = Verdict {
        id: 11,
        name: "no-slip at the walls",
        pass: wall <= 1e-10,
        detail: format!("max |u_I . n| {wall:.3e} <= 1e-10 over the reference run"),
    };
    (c1, c11)
}

fn residual_order(watch: &mut Watch) -> Verdict {
    let grid = reference_grid();
    let run = |dt: f64, watch: &mut Watch| -> (f64, f64) {
        let mut cfg = RunConfig::new(&grid, LAMBDA, T_E, ETA, dt);
        cfg.theta = 0.5;
        let mut state = reference_state(&grid, &cfg, 0.1);
        let m0 = total_mass(&state.f);
        let mut prev = energies(&state, &moments(&state.f), None);
        let (mut worst, mut d_gap): (f64, f64) = (0.0, 0.0);
        for _ in 0..50 {
            let j0 = face_currents(&state.fields.by, &state.fields.bz, grid.dx);
            let rep = step(&mut state, &cfg).expect("theta step");
            let j1 = face_currents(&state.fields.by, &state.fields.bz, grid.dx);
            let jt: Vec<Vec3> = j0.iter().zip(&j1).map(|(a, b)| std::array::from_fn(|k| 0.5 * (a[k] + b[k]))).collect();
            let d = dt * dissipation_rate(&jt, grid.dx);
            d_gap = d_gap.max(rel(d, rep.dissipation));
            let m = moments(&state.f);
            let e = energies(&state, &m, None);
            worst = worst.max((e.e_tot - prev.e_tot + d).abs());
            watch.observe(m0, &state, &m);
            prev = e;
        }
        (worst, d_gap)
    };
    let (coarse, g1) = run(0.01, watch);
    let (fine, g2) = run(0.005, watch);
    let ratio = coarse / fine;
    let gap = g1.max(g2);
    Verdict {
        id: 2,
        name: "dissipation residual order (theta = 1/2)",
        pass: ratio >= 3.5 && gap <= 1e-12,
        detail: format!(
            "max |res| {coarse:.3e} (dt 0.01) / {fine:.3e} (dt 0.005) = {ratio:.2} >= 3.5; reported vs recomputed dissipation {gap:.1e}"
        ),
    }
}

fn equilibrium(watch: &mut Watch) -> Verdict {
    let grid = reference_grid();
    let cfg = RunConfig::new(&grid, LAMBDA, T_E, ETA, 0.01);
    let f = make_maxwellian(&grid, &[1.0; NX], 1.0, &[[0.0; 3]; NX]).expect("maxwellian");
    let mut state = initialize_state(f, 0.3, vec![0.0; NX], vec![0.0; NX], &cfg).expect("state");
    let m0 = total_mass(&state.f);
    let e0 = energies(&state, &moments(&state.f), None);
    let r0 = state.ledger.current;
    let drift = |a: f64, b: f64| if b == 0.0 { a.abs() } else { rel(a, b) };
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        step(&mut state, &cfg).expect("equilibrium step");
        let m = moments(&state.f);
        let e = energies(&state, &m, None);
        let r = state.ledger.current;
        for (a, b) in [
            (e.e_i, e0.e_i),
            (e.e_m, e0.e_m),
            (e.e_es, e0.e_es),
            (e.e_free, e0.e_free),
            (e.e_tot, e0.e_tot),
            (r.e_i, r0.e_i),
            (r.e_m, r0.e_m),
            (r.e_es, r0.e_es),
            (r.e_free, r0.e_free),
            (r.e_tot, r0.e_tot),
            (r.d_cum, r0.d_cum),
        ] {
            worst = worst.max(drift(a, b));
        }
        watch.observe(m0, &state, &m);
    }
    Verdict {
        id: 3,
        name: "equilibrium fixed point",
        pass: worst <= 1e-12,
        detail: format!("max ledger-column drift {worst:.3e} <= 1e-12 over 100 steps"),
    }
}

fn mass_and_positivity(watch: &Watch) -> Verdict {
    let pass = watch.mass_defect <= 1e-12 && watch.min_f >= 0.0 && watch.outflow <= 1e-8;
    Verdict {
        id: 4,
        name: "mass and positivity (all runs)",
        pass,
        detail: format!(
            "max relative mass defect {:.3e} <= 1e-12; min f {:.3e} >= 0; v-box outflow {:.3e} <= 1e-8",
            watch.mass_defect, watch.min_f, watch.outflow
        ),
    }
}

fn poisson(watch: &Watch) -> Verdict {
    let lambda = 0.5;
    let exact = |x: f64| 0.1 * (PI * x).cos();
    let n_ion = |x: f64| exact(x).exp() + lambda * lambda * 0.1 * PI * PI * (PI * x).cos();
    let mut errors = Vec::new();
    let mut neutrality = watch.neutrality;
    for nx in [32, 64, 128] {
        let dx = 1.0 / nx as f64;
        let xs: Vec<f64> = (0..nx).map(|i| (i as f64 + 0.5) * dx).collect();
        let n_i: Vec<f64> = xs.iter().map(|&x| n_ion(x)).collect();
        let sol = solve_log_ne(&n_i, lambda, dx, 1e-13).expect("manufactured solve");
        errors.push(xs.iter().zip(&sol.log_ne).map(|(&x, u)| (u - exact(x)).abs()).fold(0.0, f64::max));
        let ne = ksum(sol.log_ne.iter().map(|u| u.exp() * dx));
        neutrality = neutrality.max((ne - ksum(n_i.iter().map(|n| n * dx))).abs());
    }
    let (r1, r2) = (errors[0] / errors[1], errors[1] / errors[2]);
    let ok = |r: f64| (3.5..=4.5).contains(&r);
    Verdict {
        id: 5,
        name: "Poisson convergence and neutrality",
        pass: ok(r1) && ok(r2) && neutrality <= 1e-10,
        detail: format!(
            "error ratios {r1:.3}, {r2:.3} in [3.5, 4.5]; max |sum n_e - sum n_I| dx {neutrality:.2e} <= 1e-10"
        ),
    }
}

/// Minimum over `R > 0` of `R^k + R^-m`, by golden-section search on `ln R`.
fn min_power_sum(k: f64, m: f64) -> f64 {
    let g = |s: f64| (k * s).exp() + (-m * s).exp();
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (-5.0_f64, 5.0_f64);
    for _ in 0..200 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if g(c) < g(d) {
            b = d;
        } else {
            a = c;
        }
    }
    g(0.5 * (a + b))
}

fn moment_inequalities() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let grid = PhaseSpaceGrid::new(1.0, 4, 8, 4.0).expect("grid");
    let c = (4.0 * PI / 3.0).powf(0.4) * min_power_sum(3.0, 2.0);
    let cp = PI.powf(0.2) * min_power_sum(4.0, 1.0);
    let (lib_c, lib_cp) = moment_bound_constants();
    let dx = grid.dx;
    let lp = |v: &[f64], p: f64| ksum(v.iter().map(|x| x.abs().powf(p) * dx)).powf(1.0 / p);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let mut f = DistributionFunction::zeros(&grid);
        let sparsity: f64 = rng.random_range(0.0..1.0);
        let scale: f64 = rng.random_range(0.01..10.0);
        let centre: Vec3 = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let width: f64 = rng.random_range(0.3..3.0);
        for ix in 0..grid.nx {
            for k in 0..grid.node_len() {
                let v = grid.velocity(k);
                let r2: f64 = (0..3).map(|c| (v[c] - centre[c]).powi(2)).sum();
                let shape = if sparsity < 0.5 { (-r2 / (2.0 * width * width)).exp() } else { 1.0 };
                if rng.random_range(0.0..1.0) >= sparsity * 0.9 {
                    f.node_mut(ix)[k] = scale * shape * rng.random_range(0.0..1.0);
                }
            }
        }
        let m = moments(&f);
        let f_inf = f.values.iter().copied().fold(0.0, f64::max);
        let second = 2.0 * ksum(m.e.iter().map(|e| e * dx));
        let mom: Vec<f64> = m.nu.iter().map(|v| dot(*v, *v).sqrt()).collect();
        let r53 = lp(&m.n, 5.0 / 3.0) / (c * f_inf.powf(0.4) * second.powf(0.6));
        let r54 = lp(&mom, 1.25) / (cp * f_inf.powf(0.2) * second.powf(0.8));
        worst = worst.max(r53).max(r54);
    }
    let gap = rel(c, lib_c).max(rel(cp, lib_cp));
    let pass = worst <= 1.0 && gap <= 1e-12 && (c - 3.4763).abs() < 5e-5 && (cp - 2.0736).abs() < 2e-4;
    Verdict {
        id: 6,
        name: "moment inequalities",
        pass,
        detail: format!("worst ratio {worst:.4} <= 1 over 1000 f; C = {c:.6}, C' = {cp:.6}, library gap {gap:.1e} <= 1e-12"),
    }
}

fn elliptic_bounds() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let nx = 48;
    let dx = 1.0 / nx as f64;
    let norm53 = |v: &[f64]| ksum(v.iter().map(|x| x.abs().powf(5.0 / 3.0) * dx)).powf(0.6);
    let (mut min_ne, mut worst, mut resid, mut neutral) = (f64::INFINITY, f64::NEG_INFINITY, 0.0_f64, 0.0_f64);
    for _ in 0..50 {
        let amp: f64 = rng.random_range(0.0..0.95);
        let lambda: f64 = rng.random_range(0.05..1.0);
        let n_i: Vec<f64> = (0..nx).map(|_| 1.0 + amp * rng.random_range(-1.0..1.0)).collect();
        let sol = solve_log_ne(&n_i, lambda, dx, 1e-12).expect("random solve");
        let u = &sol.log_ne;
        let n_e: Vec<f64> = u.iter().map(|u| u.exp()).collect();
        let k = lambda * lambda / (dx * dx);
        for i in 0..nx {
            let left = if i > 0 { u[i - 1] - u[i] } else { 0.0 };
            let right = if i + 1 < nx { u[i + 1] - u[i] } else { 0.0 };
            resid = resid.max((-k * (left + right) + n_e[i] - n_i[i]).abs());
        }
        min_ne = min_ne.min(n_e.iter().copied().fold(f64::INFINITY, f64::min));
        worst = worst.max(norm53(&n_e) / norm53(&n_i) - 1.0);
        neutral = neutral.max((ksum(n_e.iter().map(|n| n * dx)) - ksum(n_i.iter().map(|n| n * dx))).abs());
    }
    Verdict {
        id: 7,
        name: "elliptic two-sided bounds",
        pass: min_ne > 0.0 && worst <= 1e-10 && neutral <= 1e-10 && resid <= 1e-11,
        detail: format!(
            "min n_e {min_ne:.3e} > 0; ||n_e||_5/3 / ||n_I||_5/3 - 1 = {worst:.2e} <= 1e-10; residual {resid:.1e}; neutrality {neutral:.1e}"
        ),
    }
}

fn rotation_invariants() -> Verdict {
    let (cfg, mut state) = small_state(6, 24);
    let (mut dnorm, mut dpar, mut identical) = (0.0_f64, 0.0_f64, true);
    for _ in 0..5 {
        let before = moments(&state.f);
        let fields = state.fields.clone();
        let d: Vec<Vec3> = (0..before.n.len())
            .map(|i| {
                let s = 1.0 - before.n[i] / fields.log_ne[i].exp();
                [fields.bx0, fields.by[i], fields.bz[i]].map(|c| s * c)
            })
            .collect();
        stage_magnetic_2(&mut state, &cfg, 0.1).expect("rotation stage");
        let after = moments(&state.f);
        for i in 0..d.len() {
            dnorm = dnorm.max((dot(after.nu[i], after.nu[i]).sqrt() - dot(before.nu[i], before.nu[i]).sqrt()).abs());
            let dn = dot(d[i], d[i]).sqrt();
            if dn > 0.0 {
                dpar = dpar.max((dot(after.nu[i], d[i]) - dot(before.nu[i], d[i])).abs() / dn);
            }
        }
        identical &= fields.bx0.to_bits() == state.fields.bx0.to_bits()
            && fields.by.iter().zip(&state.fields.by).all(|(a, b)| a.to_bits() == b.to_bits())
            && fields.bz.iter().zip(&state.fields.bz).all(|(a, b)| a.to_bits() == b.to_bits());
    }
    Verdict {
        id: 8,
        name: "rotation-stage invariants",
        pass: dnorm <= 1e-14 && dpar <= 1e-14 && identical,
        detail: format!(
            "max change |n_I u_I| {dnorm:.2e}, along d {dpar:.2e} <= 1e-14; B bit-identical: {identical}"
        ),
    }
}

fn field_stage_structure() -> Verdict {
    // n_I across the full stage on a drifting, magnetized state.
    let (cfg, mut state) = small_state(8, 24);
    let before = moments(&state.f);
    stage_magnetic_1(&mut state, &cfg, cfg.dt).expect("field stage");
    let after = moments(&state.f);
    let dn = before.n.iter().zip(&after.n).map(|(a, b)| rel(*a, *b)).fold(0.0, f64::max);

    // The linear solve on its own, without ion momentum.
    let grid = PhaseSpaceGrid::new(1.0, 24, 2, 1.0).expect("grid");
    let nx = grid.nx;
    let dx = grid.dx;
    let eta = kinhall::grid_state::EtaProfile::constant(&grid, ETA);
    let zero3 = vec![[0.0; 3]; nx];
    let frozen: Vec<Vec3> = grid.x_centers.iter().map(|x| [0.5, 0.3 * x, -0.2]).collect();
    let n_i: Vec<f64> = grid.x_centers.iter().map(|x| 1.0 + 0.2 * x).collect();
    let n_e: Vec<f64> = grid.x_centers.iter().map(|x| 1.0 + 0.1 * x * x).collect();
    let dt = 0.05;
    let solve = |by: &[f64], bz: &[f64], frozen: &[Vec3], theta: f64| {
        solve_stage1(Stage1Input {
            by,
            bz,
            b_frozen: frozen,
            n_i: &n_i,
            n_e: &n_e,
            nu: &zero3,
            eta: &eta,
            imposed: None,
            theta,
            dt,
            dx,
            linear_tol: 1e-13,
        })
        .expect("stage-1 solve")
    };
    let field = |a: f64, b: f64, c: f64| -> Vec<f64> { grid.x_centers.iter().map(|x| a * (b * x + c).sin()).collect() };
    let (by1, bz1, by2, bz2) = (field(1.0, PI, 0.0), field(0.4, 5.0, 0.3), field(-0.7, 2.0, 1.0), field(0.2, 9.0, 0.0));
    let add = |a: &[f64], b: &[f64]| -> Vec<f64> { a.iter().zip(b).map(|(x, y)| x + y).collect() };
    let s1 = solve(&by1, &bz1, &frozen, 0.5);
    let s2 = solve(&by2, &bz2, &frozen, 0.5);
    let s12 = solve(&add(&by1, &by2), &add(&bz1, &bz2), &frozen, 0.5);
    let sup = (0..nx)
        .map(|i| (s12.by[i] - s1.by[i] - s2.by[i]).abs().max((s12.bz[i] - s1.bz[i] - s2.bz[i]).abs()))
        .fold(0.0, f64::max);

    // Resistive-only backward Euler: ΔE_m + dt Σ ω η |J^{n+1}|² + ½‖ΔB‖² = 0.
    let r = solve(&by1, &bz1, &zero3, 1.0);
    let em = |y: &[f64], z: &[f64]| 0.5 * ksum(y.iter().zip(z).map(|(a, b)| (a * a + b * b) * dx));
    let jump = 0.5 * ksum((0..nx).map(|i| ((r.by[i] - by1[i]).powi(2) + (r.bz[i] - bz1[i]).powi(2)) * dx));
    let d = dt * dissipation_rate(&face_currents(&r.by, &r.bz, dx), dx);
    let e0 = em(&by1, &bz1);
    let identity = (em(&r.by, &r.bz) - e0 + d + jump).abs() / e0;
    Verdict {
        id: 9,
        name: "field-stage structure",
        pass: dn <= 1e-12 && sup <= 1e-10 && identity <= 1e-12,
        detail: format!(
            "n_I change {dn:.1e} <= 1e-12; superposition {sup:.1e} <= 1e-10; backward-Euler identity {identity:.1e} <= 1e-12"
        ),
    }
}

fn perturbed_energy(watch: &mut Watch) -> Verdict {
    let grid = reference_grid();

    // Uniform imposed field: no source, and the perturbed energy decays.
    let profile = |_: f64| (0.2, -0.1);
    let imp = imposed_oracle(&grid, profile);
    let mut cfg = RunConfig::new(&grid, LAMBDA, T_E, ETA, 0.01);
    cfg.imposed = Some(ImposedField::from_fn(&grid, profile));
    let mut state = reference_state(&grid, &cfg, 0.1);
    let m0 = total_mass(&state.f);
    let m = moments(&state.f);
    let mut prev = energies(&state, &m, Some(&imp)).e_tot;
    let mut s_max = perturbed_source(&state, &m, &imp).abs();
    let mut increase = f64::NEG_INFINITY;
    let mut gap: f64 = 0.0;
    for _ in 0..REFERENCE_STEPS {
        let rep = step(&mut state, &cfg).expect("uniform-field step");
        let m = moments(&state.f);
        let e = energies(&state, &m, Some(&imp)).e_tot;
        let lib = compute_perturbed_source(&state, &cfg);
        s_max = s_max.max(perturbed_source(&state, &m, &imp).abs()).max(lib.s.abs()).max(rep.source.abs());
        gap = gap.max(rel(e, lib.e_tot_pert));
        increase = increase.max(e - prev);
        watch.observe(m0, &state, &m);
        prev = e;
    }

    // Non-uniform imposed field: the balance residual refines with dt.
    let profile = |x: f64| (0.1 * (PI * x / L).sin(), 0.0);
    let imp = imposed_oracle(&grid, profile);
    let balance = |dt: f64, steps: usize, watch: &mut Watch| -> f64 {
        let mut cfg = RunConfig::new(&grid, LAMBDA, T_E, ETA, dt);
        cfg.theta = 0.5;
        cfg.splitting = SplittingOrder::Strang;
        cfg.midpoint_field = true;
        cfg.imposed = Some(ImposedField::from_fn(&grid, profile));
        let mut state = reference_state(&grid, &cfg, 0.0);
        let m0 = total_mass(&state.f);
        let sample = |state: &SimulationState| {
            let m = moments(&state.f);
            let e = energies(state, &m, Some(&imp)).e_tot;
            let dx = state.f.grid.dx;
            let d = dissipation_rate(&face_currents(&state.fields.by, &state.fields.bz, dx), dx);
            (e, d, perturbed_source(state, &m, &imp), m)
        };
        let (mut e0, mut d0, mut s0, _) = sample(&state);
        let mut worst: f64 = 0.0;
        for _ in 0..steps {
            step(&mut state, &cfg).expect("imposed-field step");
            let (e1, d1, s1, m) = sample(&state);
            let r = (e1 - e0) / dt + 0.5 * (d0 + d1) - 0.5 * (s0 + s1);
            worst = worst.max(r.abs());
            watch.observe(m0, &state, &m);
            (e0, d0, s0) = (e1, d1, s1);
        }
        worst
    };
    let coarse = balance(0.01, 20, watch);
    let fine = balance(0.005, 40, watch);
    let ratio = coarse / fine;

    let t_star = horizon_estimate(1.0, 1.0).expect("horizon");
    let horizon_err = (t_star - std::f64::consts::LN_2).abs();
    let pass = s_max == 0.0 && increase <= 1e-10 && gap <= 1e-12 && ratio >= 3.5 && horizon_err <= 1e-14;
    Verdict {
        id: 10,
        name: "perturbed-energy bookkeeping",
        pass,
        detail: format!(
            "uniform B_imp: |S| {s_max:e} == 0, max E_tot_pert increase {increase:.3e} <= 1e-10; \
             J_imp != 0: balance residual {coarse:.3e} / {fine:.3e} = {ratio:.2} >= 3.5; |T*(1,1) - ln 2| {horizon_err:.1e} <= 1e-14"
        ),
    }
}

fn record(verdicts: &mut Vec<Verdict>, clock: Instant, verdict: Verdict) {
    print(&verdict, clock.elapsed().as_secs_f64());
    verdicts.push(verdict);
}

fn main() -> ExitCode {
    let mut watch = Watch::new();
    let mut verdicts = Vec::new();

    let clock = Instant::now();
    let (c1, c11) = reference_run(&mut watch);
    record(&mut verdicts, clock, c1);
    let clock = Instant::now();
    record(&mut verdicts, clock, residual_order(&mut watch));
    let clock = Instant::now();
    record(&mut verdicts, clock, equilibrium(&mut watch));
    let clock = Instant::now();
    record(&mut verdicts, clock, perturbed_energy(&mut watch));
    let clock = Instant::now();
    record(&mut verdicts, clock, poisson(&watch));
    let clock = Instant::now();
    record(&mut verdicts, clock, moment_inequalities());
    let clock = Instant::now();
    record(&mut verdicts, clock, elliptic_bounds());
    let clock = Instant::now();
    record(&mut verdicts, clock, rotation_invariants());
    let clock = Instant::now();
    record(&mut verdicts, clock, field_stage_structure());
    let clock = Instant::now();
    record(&mut verdicts, clock, mass_and_positivity(&watch));
    record(&mut verdicts, Instant::now(), c11);

    let failed = verdicts.iter().filter(|v| !v.pass).count();
    println!("acceptance: {} criteria, {failed} failed", verdicts.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
