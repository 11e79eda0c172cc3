//! Phase-space transport: x-advection with specular walls, velocity
//! translations and velocity rotations, all built from the conservative 1D
//! kernels of [`crate::remap`].
//!
//! Velocity-space remaps are followed by a conservative moment correction:
//! each node's `f` is multiplied by `1 + c·ψ(v)` with
//! `ψ = (1, w, |w|²/2)`, `w = v - ū`, where the five coefficients are chosen
//! so that density, momentum and kinetic energy take the values the exact
//! velocity-space flow would give. This removes the numerical heating of
//! the remap, which would otherwise break the discrete energy balance, and
//! returns to the box whatever the remap pushed across its boundary (the
//! targets are the moments of the exactly transformed, untruncated block).

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid_state::{DistributionFunction, PhaseSpaceGrid, Vec3};
use crate::moments::node_moments;
use crate::remap::{RemapKernel, RemapScratch};
use crate::sum::Neumaier;

/// Limit on the mass crossing the velocity-box boundary in one remap call,
/// relative to the total mass.
pub const MAX_OUTFLOW_FRACTION: f64 = 1e-6;

/// Outcome of a velocity-space remap.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct RemapReport {
    /// Mass `Σ f dx dv³` the remap pushed across the velocity-box boundary;
    /// the moment correction redistributes it inside the box.
    pub outflow_mass: f64,
}

impl RemapReport {
    pub fn absorb(&mut self, other: RemapReport) {
        self.outflow_mass += other.outflow_mass;
    }
}

/// Moment targets of one node: `[n, p_x, p_y, p_z, e]`.
pub type Moments5 = [f64; 5];

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

/// Rotation matrix of angle `angle` about the unit axis `k` (right-handed).
pub fn rodrigues(angle: f64, k: Vec3) -> [[f64; 3]; 3] {
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [c + t * k[0] * k[0], t * k[0] * k[1] - s * k[2], t * k[0] * k[2] + s * k[1]],
        [t * k[1] * k[0] + s * k[2], c + t * k[1] * k[1], t * k[1] * k[2] - s * k[0]],
        [t * k[2] * k[0] - s * k[1], t * k[2] * k[1] + s * k[0], c + t * k[2] * k[2]],
    ]
}

fn mat_vec(r: &[[f64; 3]; 3], v: Vec3) -> Vec3 {
    [dot(r[0], v), dot(r[1], v), dot(r[2], v)]
}

/// Exact solution of `d(nu)/dt = nu ∧ d` over `dt`: rotation of `nu` by
/// angle `-|d| dt` about `d/|d|`. Identity when `d = 0`.
pub fn ion_momentum_rotation(nu: Vec3, d: Vec3, dt: f64) -> Vec3 {
    let mag = dot(d, d).sqrt();
    if mag == 0.0 || dt == 0.0 {
        return nu;
    }
    let k = [d[0] / mag, d[1] / mag, d[2] / mag];
    mat_vec(&rodrigues(-mag * dt, k), nu)
}

/// Number of x nodes, v cells per node and v_x pairs.
fn dims(g: &PhaseSpaceGrid) -> (usize, usize, usize) {
    (g.nx, g.nv, g.nv * g.nv)
}

/// Free streaming `∂_t f + v_x ∂_x f = 0` over `tau` with specular
/// reflection at both walls.
///
/// Each pair of planes `(v_x, -v_x)` is unfolded into one periodic line of
/// length `2 Nx` (the `-v_x` plane mirrored onto `[-L, 0)`), on which the
/// flow is a rigid translation by `v_x tau`. Reflection is then exact and
/// the mass of each pair is conserved.
pub fn advect_x(f: &mut DistributionFunction, tau: f64, kernel: RemapKernel) {
    if tau == 0.0 {
        return;
    }
    let g = f.grid.clone();
    let (nx, nv, plane) = dims(&g);
    let half = nv / 2;
    let values = &f.values;
    let results: Vec<(usize, Vec<f64>)> = (0..half)
        .into_par_iter()
        .map_init(RemapScratch::new, |scratch, p| {
            let a_pos = half + p;
            let a_neg = half - 1 - p;
            let vx = g.v_nodes[a_pos];
            let mut line = vec![0.0; 2 * nx * plane];
            for i in 0..nx {
                let src_pos = g.idx(i, a_pos, 0, 0);
                let src_neg = g.idx(i, a_neg, 0, 0);
                line[(nx + i) * plane..(nx + i + 1) * plane].copy_from_slice(&values[src_pos..src_pos + plane]);
                line[(nx - 1 - i) * plane..(nx - i) * plane].copy_from_slice(&values[src_neg..src_neg + plane]);
            }
            let mut out = vec![0.0; line.len()];
            kernel.translate_periodic(&line, plane, vx * tau / g.dx, &mut out, scratch);
            (p, out)
        })
        .collect();
    for (p, out) in results {
        let a_pos = half + p;
        let a_neg = half - 1 - p;
        for i in 0..nx {
            let dst_pos = g.idx(i, a_pos, 0, 0);
            let dst_neg = g.idx(i, a_neg, 0, 0);
            f.values[dst_pos..dst_pos + plane].copy_from_slice(&out[(nx + i) * plane..(nx + i + 1) * plane]);
            f.values[dst_neg..dst_neg + plane].copy_from_slice(&out[(nx - 1 - i) * plane..(nx - i) * plane]);
        }
    }
}

/// Ion velocity normal to each wall, `Σ v_x f_w / Σ f_w`, where `f_w(v)` is
/// the wall trace of `f`: the reconstructed face value of the unfolded
/// `(v_x, -v_x)` line, which takes the same value for both members of a pair.
/// Returns `(left, right)`; zero where the trace carries no mass.
pub fn wall_normal_velocity(f: &DistributionFunction) -> (f64, f64) {
    let g = &f.grid;
    let (nx, nv, plane) = dims(g);
    let half = nv / 2;
    let mut out = [0.0; 2];
    for (w, slot) in out.iter_mut().enumerate() {
        // Cells 0, 1 (left wall) or nx-1, nx-2 (right wall) of both planes
        // are the four cells nearest the unfolded face.
        let (near, far) = if w == 0 { (0, 1) } else { (nx - 1, nx - 2) };
        let mut mass = Neumaier::new();
        let mut flux = Neumaier::new();
        for p in 0..half {
            let a_pos = half + p;
            let a_neg = half - 1 - p;
            for k in 0..plane {
                let at = |i: usize, a: usize| f.values[g.idx(i, a, 0, 0) + k];
                let trace = (7.0 * (at(near, a_pos) + at(near, a_neg)) - (at(far, a_pos) + at(far, a_neg))) / 12.0;
                for a in [a_pos, a_neg] {
                    mass.add(trace);
                    flux.add(g.v_nodes[a] * trace);
                }
            }
        }
        let m = mass.value();
        *slot = if m > 0.0 { flux.value() / m } else { 0.0 };
    }
    (out[0], out[1])
}

/// Target of the moment correction of one node.
#[derive(Clone, Copy, Debug)]
struct Target {
    moments: Moments5,
    /// The transform is an exact index permutation inside the box: the
    /// correction is only needed if something crossed the boundary.
    exact: bool,
}

/// Per-node velocity-space remap of a whole distribution: the closure
/// transforms one node's block in place (returning the moments of the mass
/// it pushed out of the box) and `targets` gives the exact post-transform
/// moments. `None` targets mark untouched nodes.
fn map_nodes<F>(f: &mut DistributionFunction, targets: &[Option<Target>], transform: F) -> Result<RemapReport>
where
    F: Fn(usize, &mut [f64], &mut NodeWork) -> Moments5 + Sync,
{
    let g = f.grid.clone();
    let total_before = f.total_mass();
    let node_len = g.node_len();
    let results: Vec<Result<f64>> = f
        .values
        .par_chunks_mut(node_len)
        .enumerate()
        .map_init(NodeWork::default, |work, (ix, node)| {
            let lost = transform(ix, node, work);
            if let Some(t) = targets[ix] {
                if !(t.exact && lost[0] == 0.0) {
                    correct_moments(&g, node, t.moments)
                        .map_err(|reason| Error::MomentCorrection { node: ix, reason })?;
                }
            }
            Ok(lost[0] * g.dx)
        })
        .collect();
    let mut outflow = Neumaier::new();
    for r in results {
        outflow.add(r?);
    }
    let outflow_mass = outflow.value();
    if total_before > 0.0 && outflow_mass / total_before > MAX_OUTFLOW_FRACTION {
        return Err(Error::ExcessiveTruncation {
            fraction: outflow_mass / total_before,
        });
    }
    Ok(RemapReport { outflow_mass })
}

/// Per-thread buffers for velocity-space node transforms.
#[derive(Default)]
pub struct NodeWork {
    scratch: RemapScratch,
    line: Vec<f64>,
    out: Vec<f64>,
}

/// Translation of one node block along axis `axis` by `s` cells; returns
/// the moments of the mass leaving the box. Each line's virtual cells keep
/// their (out-of-box) velocity so the loss is accounted exactly.
fn shift_axis(g: &PhaseSpaceGrid, node: &mut [f64], axis: usize, s: f64, kernel: RemapKernel, w: &mut NodeWork) -> Moments5 {
    let mut lost = [0.0; 5];
    if s == 0.0 {
        return lost;
    }
    let nv = g.nv;
    let dv = g.dv;
    let v0 = g.v_nodes[0];
    let virt = |j: isize| v0 + j as f64 * dv;
    // Lines along `axis` are processed `lanes` at a time: stride between
    // cells of a line, number of interleaved lines, and their block count.
    let (stride, lanes, blocks) = match axis {
        0 => (nv * nv, nv * nv, 1),
        1 => (nv, nv, nv),
        _ => (1, 1, nv * nv),
    };
    for blk in 0..blocks {
        let base = match axis {
            0 => 0,
            1 => blk * nv * nv,
            _ => blk * nv,
        };
        w.line.clear();
        for j in 0..nv {
            let start = base + j * stride;
            w.line.extend_from_slice(&node[start..start + lanes]);
        }
        let pad = kernel.translate_open(&w.line, lanes, s, &mut w.out, &mut w.scratch);
        let ncell = nv + 2 * pad;
        for c in 0..ncell {
            let j = c as isize - pad as isize;
            let row = &w.out[c * lanes..(c + 1) * lanes];
            if (0..nv as isize).contains(&j) {
                let start = base + j as usize * stride;
                node[start..start + lanes].copy_from_slice(row);
            } else {
                for (l, &val) in row.iter().enumerate() {
                    if val == 0.0 {
                        continue;
                    }
                    let k = base + l; // any in-box index on this line, axis coordinate replaced below
                    let mut v = g.velocity(k);
                    v[axis] = virt(j);
                    let m = val * g.dv3();
                    lost[0] += m;
                    lost[1] += m * v[0];
                    lost[2] += m * v[1];
                    lost[3] += m * v[2];
                    lost[4] += 0.5 * m * dot(v, v);
                }
            }
        }
    }
    lost
}

fn add5(a: &mut Moments5, b: Moments5) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Velocity translation `f'(x, v) = f(x, v - Δv(x))`, followed by the moment
/// correction to the exact translated moments.
pub fn shift_v(f: &mut DistributionFunction, delta_v: &[Vec3], kernel: RemapKernel) -> Result<RemapReport> {
    let g = f.grid.clone();
    if delta_v.len() != g.nx {
        return Err(Error::InvalidInput("Δv must have one entry per x node".into()));
    }
    let span = g.nv as f64 * g.dv;
    if let Some(d) = delta_v.iter().find(|d| d.iter().any(|c| !(c.abs() < span))) {
        return Err(Error::InvalidInput(format!("velocity shift {d:?} exceeds the velocity box")));
    }
    let targets: Vec<Option<Target>> = (0..g.nx)
        .map(|ix| {
            let d = delta_v[ix];
            if d == [0.0; 3] {
                return None;
            }
            let m = node_moments(&g, f.node(ix));
            let p = [m[1], m[2], m[3]];
            let moments = [
                m[0],
                p[0] + m[0] * d[0],
                p[1] + m[0] * d[1],
                p[2] + m[0] * d[2],
                m[4] + dot(p, d) + 0.5 * m[0] * dot(d, d),
            ];
            Some(Target {
                moments,
                // Whole-cell translations are index shifts.
                exact: d.iter().all(|c| (c / g.dv).fract() == 0.0),
            })
        })
        .collect();
    map_nodes(f, &targets, |ix, node, w| {
        let d = delta_v[ix];
        let mut lost = [0.0; 5];
        for axis in 0..3 {
            add5(&mut lost, shift_axis(&g, node, axis, d[axis] / g.dv, kernel, w));
        }
        lost
    })
}

/// Shear of one node block: every line along `axis` is translated by
/// `slope * (v[other] - center[other]) / dv` cells.
fn shear_axis(
    g: &PhaseSpaceGrid,
    node: &mut [f64],
    axis: usize,
    other: usize,
    slope: f64,
    center: Vec3,
    kernel: RemapKernel,
    w: &mut NodeWork,
) -> Moments5 {
    let nv = g.nv;
    let dv = g.dv;
    let v0 = g.v_nodes[0];
    let mut lost = [0.0; 5];
    let stride = [nv * nv, nv, 1][axis];
    // The two coordinates other than `axis` label the lines.
    let (p, q) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let strides = [nv * nv, nv, 1];
    let free = if other == p { q } else { p };
    // Lines sharing the `other` coordinate share the shift; they are
    // processed together as lanes.
    for io in 0..nv {
        let s = slope * (g.v_nodes[io] - center[other]) / dv;
        if s == 0.0 {
            continue;
        }
        let base = io * strides[other];
        w.line.clear();
        for j in 0..nv {
            for k in 0..nv {
                w.line.push(node[base + k * strides[free] + j * stride]);
            }
        }
        let pad = kernel.translate_open(&w.line, nv, s, &mut w.out, &mut w.scratch);
        for (c, chunk) in w.out.chunks_exact(nv).enumerate() {
            let j = c as isize - pad as isize;
            if (0..nv as isize).contains(&j) {
                for (k, &val) in chunk.iter().enumerate() {
                    node[base + k * strides[free] + j as usize * stride] = val;
                }
            } else {
                for (k, &val) in chunk.iter().enumerate() {
                    if val != 0.0 {
                        let mut v = g.velocity(base + k * strides[free]);
                        v[axis] = v0 + j as f64 * dv;
                        let m = val * g.dv3();
                        add5(&mut lost, [m, m * v[0], m * v[1], m * v[2], 0.5 * m * dot(v, v)]);
                    }
                }
            }
        }
    }
    lost
}

/// Elementary rotation by `angle` in the `(a, b)` plane (`a → b` positive)
/// about `center`, as three shears; split into sub-rotations of at most
/// π/4 so the shear factors stay bounded.
fn rotate_plane(
    g: &PhaseSpaceGrid,
    node: &mut [f64],
    a: usize,
    b: usize,
    angle: f64,
    center: Vec3,
    kernel: RemapKernel,
    w: &mut NodeWork,
) -> Moments5 {
    let mut lost = [0.0; 5];
    if angle == 0.0 {
        return lost;
    }
    let pieces = (angle.abs() / std::f64::consts::FRAC_PI_4).ceil().max(1.0) as usize;
    let theta = angle / pieces as f64;
    let t = (0.5 * theta).tan();
    let s = theta.sin();
    for _ in 0..pieces {
        // [[c, -s], [s, c]] = X(-t) · Y(s) · X(-t) acting on (v_a, v_b).
        add5(&mut lost, shear_axis(g, node, a, b, -t, center, kernel, w));
        add5(&mut lost, shear_axis(g, node, b, a, s, center, kernel, w));
        add5(&mut lost, shear_axis(g, node, a, b, -t, center, kernel, w));
    }
    lost
}

/// Euler angles `(α, β, γ)` with `R = Rz(γ) Ry(β) Rx(α)`.
fn euler_zyx(r: &[[f64; 3]; 3]) -> (f64, f64, f64) {
    let beta = (-r[2][0]).clamp(-1.0, 1.0).asin();
    let alpha = r[2][1].atan2(r[2][2]);
    let gamma = r[1][0].atan2(r[0][0]);
    (alpha, beta, gamma)
}

/// Velocity-space rotation for the frozen magnetic stage: the
/// characteristics `dv/dt = (v - c) ∧ B` are rotations by `-|B| dt` about
/// `B̂` around the drift `c`. `drift[ix]` is `c` at the stage midpoint and
/// `nu_after[ix]` the exact final momentum of the node; the kinetic energy
/// is unchanged by the exact flow.
pub fn rotate_v(
    f: &mut DistributionFunction,
    b_frozen: &[Vec3],
    drift: &[Vec3],
    nu_after: &[Vec3],
    dt: f64,
    kernel: RemapKernel,
) -> Result<RemapReport> {
    let g = f.grid.clone();
    if b_frozen.len() != g.nx || drift.len() != g.nx || nu_after.len() != g.nx {
        return Err(Error::InvalidInput("rotation inputs must have one entry per x node".into()));
    }
    let plans: Vec<Option<(f64, f64, f64)>> = b_frozen
        .iter()
        .map(|b| {
            let mag = dot(*b, *b).sqrt();
            if mag == 0.0 || dt == 0.0 {
                return None;
            }
            let k = [b[0] / mag, b[1] / mag, b[2] / mag];
            Some(euler_zyx(&rodrigues(-mag * dt, k)))
        })
        .collect();
    let targets: Vec<Option<Target>> = (0..g.nx)
        .map(|ix| {
            plans[ix].map(|_| {
                let m = node_moments(&g, f.node(ix));
                let p = nu_after[ix];
                Target {
                    moments: [m[0], p[0], p[1], p[2], m[4]],
                    exact: false,
                }
            })
        })
        .collect();
    map_nodes(f, &targets, |ix, node, w| {
        let mut lost = [0.0; 5];
        if let Some((alpha, beta, gamma)) = plans[ix] {
            let c = drift[ix];
            // Applied right to left: Rx, then Ry, then Rz.
            add5(&mut lost, rotate_plane(&g, node, 1, 2, alpha, c, kernel, w));
            add5(&mut lost, rotate_plane(&g, node, 2, 0, beta, c, kernel, w));
            add5(&mut lost, rotate_plane(&g, node, 0, 1, gamma, c, kernel, w));
        }
        lost
    })
}

/// Multiplies `node` by `1 + Σ c_i ψ_i(v)` so that its moments equal
/// `target`. Two Newton-like passes absorb rounding of the first.
fn correct_moments(g: &PhaseSpaceGrid, node: &mut [f64], target: Moments5) -> std::result::Result<(), String> {
    if target[0] <= 0.0 {
        return Ok(());
    }
    let ubar = [target[1] / target[0], target[2] / target[0], target[3] / target[0]];
    let dv3 = g.dv3();
    let nv = g.nv;
    let vn = &g.v_nodes;
    for pass in 0..3 {
        // Cheap convergence test on the current moments first.
        if pass > 0 {
            let m = node_moments(g, node);
            if moments_close(&m, &target) {
                return Ok(());
            }
        }
        // A[k][i] = Σ f M_k ψ_i dv³, with M = (1, v, |v|²/2), ψ = (1, w, |w|²/2).
        let mut acc = [[Neumaier::new(); 5]; 5];
        let mut k = 0;
        for &vx in vn {
            for &vy in vn {
                let mut line = [[0.0; 5]; 5];
                for &vz in vn {
                    let fv = node[k];
                    k += 1;
                    if fv == 0.0 {
                        continue;
                    }
                    let v = [vx, vy, vz];
                    let w = [vx - ubar[0], vy - ubar[1], vz - ubar[2]];
                    let mom = [1.0, v[0], v[1], v[2], 0.5 * dot(v, v)];
                    let psi = [1.0, w[0], w[1], w[2], 0.5 * dot(w, w)];
                    for (r, mr) in mom.iter().enumerate() {
                        let fm = fv * mr;
                        for (c, pc) in psi.iter().enumerate() {
                            line[r][c] += fm * pc;
                        }
                    }
                }
                for r in 0..5 {
                    for c in 0..5 {
                        acc[r][c].add(line[r][c]);
                    }
                }
            }
        }
        debug_assert_eq!(k, nv * nv * nv);
        let mut a = [[0.0; 5]; 5];
        for r in 0..5 {
            for c in 0..5 {
                a[r][c] = acc[r][c].value() * dv3;
            }
        }
        // Column 0 of A holds the current moments (ψ_0 = 1).
        let rhs: [f64; 5] = std::array::from_fn(|r| target[r] - a[r][0]);
        let c = solve5(a, rhs).ok_or_else(|| "singular moment matrix".to_string())?;
        let mut min_phi = f64::INFINITY;
        let mut k = 0;
        for &vx in vn {
            for &vy in vn {
                for &vz in vn {
                    if node[k] != 0.0 {
                        let w = [vx - ubar[0], vy - ubar[1], vz - ubar[2]];
                        let phi = 1.0 + c[0] + c[1] * w[0] + c[2] * w[1] + c[3] * w[2] + c[4] * 0.5 * dot(w, w);
                        min_phi = min_phi.min(phi);
                        node[k] *= phi;
                    }
                    k += 1;
                }
            }
        }
        if min_phi <= 0.5 {
            return Err(format!("correction factor fell to {min_phi:.3e}"));
        }
    }
    Ok(())
}

/// Relative agreement of node moments with their targets, near rounding level.
fn moments_close(m: &Moments5, t: &Moments5) -> bool {
    let n = t[0].abs();
    let e = t[4].abs();
    // Momentum scale: density times thermal speed.
    let p_scale = (2.0 * n * e).sqrt();
    (m[0] - t[0]).abs() <= 4e-16 * n
        && (1..4).all(|i| (m[i] - t[i]).abs() <= 4e-16 * (p_scale + t[i].abs()))
        && (m[4] - t[4]).abs() <= 4e-16 * e
}

/// Gaussian elimination with partial pivoting on a 5×5 system.
fn solve5(mut a: [[f64; 5]; 5], mut b: [f64; 5]) -> Option<[f64; 5]> {
    for col in 0..5 {
        let piv = (col..5).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col] == 0.0 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for r in col + 1..5 {
            let l = a[r][col] / a[col][col];
            for c in col..5 {
                a[r][c] -= l * a[col][c];
            }
            b[r] -= l * b[col];
        }
    }
    let mut x = [0.0; 5];
    for r in (0..5).rev() {
        let s: f64 = (r + 1..5).map(|c| a[r][c] * x[c]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    Some(x)
}

/// Acceleration of the electrostatic kick, `-T_e ∂_x ln n_e` per node,
/// discretised as the adjoint of the parabolic face interpolation used by
/// the x-advection (with odd reflection of the momentum at the walls). The
/// work done by the kick then exactly balances, semi-discretely, the
/// change of electron energy caused by the ion flux.
pub fn kick_acceleration(log_ne: &[f64], t_e: f64, dx: f64) -> Vec<f64> {
    let n = log_ne.len();
    let mut acc = vec![0.0; n];
    const W: [f64; 4] = [-1.0 / 12.0, 7.0 / 12.0, 7.0 / 12.0, -1.0 / 12.0];
    for face in 1..n {
        let du = log_ne[face] - log_ne[face - 1];
        for (k, w) in W.iter().enumerate() {
            let j = face as isize - 2 + k as isize;
            let (c, sign) = if j < 0 {
                ((-1 - j) as usize, -1.0)
            } else if j >= n as isize {
                ((2 * n as isize - 1 - j) as usize, -1.0)
            } else {
                (j as usize, 1.0)
            };
            acc[c] += sign * w * du;
        }
    }
    acc.iter().map(|a| -t_e * a / dx).collect()
}

/// Vector cross product, shared with the field solvers.
pub fn cross3(a: Vec3, b: Vec3) -> Vec3 {
    cross(a, b)
}
