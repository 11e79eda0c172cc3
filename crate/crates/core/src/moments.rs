//! Velocity-space quadratures: density, momentum, kinetic energy, L^p
//! norms, and the moment interpolation inequalities.
//!
//! `f` is treated as cell-averaged, so every moment is a midpoint sum with
//! weight `dv^3`. Per-node sums run in a fixed order with compensation, which
//! makes the moments bit-reproducible and exactly linear up to rounding.

use rayon::prelude::*;

use crate::grid_state::{DistributionFunction, PhaseSpaceGrid, Vec3};
use crate::sum::Neumaier;

#[derive(Clone, Debug, PartialEq)]
pub struct MomentSet {
    /// Ion density `n_I` per x node.
    pub n: Vec<f64>,
    /// Ion momentum density `n_I u_I` per x node.
    pub nu: Vec<Vec3>,
    /// Kinetic-energy density `1/2 sum f |v|^2 dv^3` per x node.
    pub energy: Vec<f64>,
}

impl MomentSet {
    /// Ion bulk velocity `u_I`, zero where the density vanishes.
    pub fn velocity(&self, ix: usize) -> Vec3 {
        let n = self.n[ix];
        if n > 0.0 {
            let m = self.nu[ix];
            [m[0] / n, m[1] / n, m[2] / n]
        } else {
            [0.0; 3]
        }
    }
}

/// `[n, nu_x, nu_y, nu_z, energy]` of one x node's velocity block.
pub fn node_moments(grid: &PhaseSpaceGrid, node: &[f64]) -> [f64; 5] {
    let nv = grid.nv;
    let vn = &grid.v_nodes;
    let mut acc = [Neumaier::new(); 5];
    let mut k = 0;
    for &vx in vn {
        for &vy in vn {
            // Inner v_z line summed plainly, then folded into the compensated totals.
            let (mut s0, mut s3, mut s4) = (0.0, 0.0, 0.0);
            let vxy2 = vx * vx + vy * vy;
            for &vz in vn {
                let fv = node[k];
                s0 += fv;
                s3 += fv * vz;
                s4 += fv * (vxy2 + vz * vz);
                k += 1;
            }
            acc[0].add(s0);
            acc[1].add(s0 * vx);
            acc[2].add(s0 * vy);
            acc[3].add(s3);
            acc[4].add(s4);
        }
    }
    debug_assert_eq!(k, nv * nv * nv);
    let w = grid.dv3();
    [
        acc[0].value() * w,
        acc[1].value() * w,
        acc[2].value() * w,
        acc[3].value() * w,
        0.5 * acc[4].value() * w,
    ]
}

pub fn compute_moments(f: &DistributionFunction) -> MomentSet {
    let grid = &f.grid;
    let per_node: Vec<[f64; 5]> = f
        .values
        .par_chunks(grid.node_len())
        .map(|node| node_moments(grid, node))
        .collect();
    MomentSet {
        n: per_node.iter().map(|m| m[0]).collect(),
        nu: per_node.iter().map(|m| [m[1], m[2], m[3]]).collect(),
        energy: per_node.iter().map(|m| m[4]).collect(),
    }
}

/// Discrete `L^p` norm of `f` with weights `dx dv^3`; `p = f64::INFINITY`
/// gives the maximum of `|f|`.
pub fn lp_norm(f: &DistributionFunction, p: f64) -> f64 {
    assert!(p >= 1.0, "lp_norm requires p >= 1, got {p}");
    if p.is_infinite() {
        return f.values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    let w = f.grid.dx * f.grid.dv3();
    let s = crate::sum::sum(f.values.iter().map(|v| v.abs().powf(p)));
    (s * w).powf(1.0 / p)
}

/// Discrete `L^p` norm over x of a per-node quantity, weight `dx`.
pub fn lp_norm_x(values: &[f64], p: f64, dx: f64) -> f64 {
    if p.is_infinite() {
        return values.iter().fold(0.0, |m, v| m.max(v.abs()));
    }
    (crate::sum::sum(values.iter().map(|v| v.abs().powf(p))) * dx).powf(1.0 / p)
}

/// Sharp constants `(C, C')` of the velocity-moment interpolation bounds
///
/// ```text
/// ||n_I||_{5/3}   <= C  ||f||_inf^{2/5} (∫∫ f |v|^2)^{3/5}
/// ||n_I u_I||_{5/4} <= C' ||f||_inf^{1/5} (∫∫ f |v|^2)^{4/5}
/// ```
///
/// Both follow from splitting velocity space at a radius `R` and minimising
/// `a R^k + b R^{-m}` over `R`: the minimum of `a R^3 + b R^{-2}` with
/// `a = (4π/3)||f||_inf` is `a^{2/5} b^{3/5} [(2/3)^{3/5} + (3/2)^{2/5}]`, and
/// that of `a R^4 + b R^{-1}` with `a = π ||f||_inf` is
/// `a^{1/5} b^{4/5} [4^{-4/5} + 4^{1/5}]`.
pub fn moment_bound_constants() -> (f64, f64) {
    use std::f64::consts::PI;
    let c = (4.0 * PI / 3.0).powf(0.4) * ((2.0_f64 / 3.0).powf(0.6) + 1.5_f64.powf(0.4));
    let c_prime = PI.powf(0.2) * (4.0_f64.powf(-0.8) + 4.0_f64.powf(0.2));
    (c, c_prime)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MomentCheck {
    pub lhs53: f64,
    pub rhs53: f64,
    pub lhs54: f64,
    pub rhs54: f64,
    pub pass: bool,
}

impl MomentCheck {
    /// Largest of `lhs / rhs` over the two inequalities (0 when both sides vanish).
    pub fn worst_ratio(&self) -> f64 {
        let r = |l: f64, r: f64| if r > 0.0 { l / r } else if l > 0.0 { f64::INFINITY } else { 0.0 };
        r(self.lhs53, self.rhs53).max(r(self.lhs54, self.rhs54))
    }
}

pub fn check_moment_inequalities(f: &DistributionFunction) -> MomentCheck {
    let (c, c_prime) = moment_bound_constants();
    let m = compute_moments(f);
    let dx = f.grid.dx;
    let second_moment = 2.0 * crate::sum::sum(m.energy.iter().map(|e| e * dx));
    let f_inf = lp_norm(f, f64::INFINITY);

    let lhs53 = lp_norm_x(&m.n, 5.0 / 3.0, dx);
    let mom: Vec<f64> = m.nu.iter().map(|v| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt()).collect();
    let lhs54 = lp_norm_x(&mom, 1.25, dx);
    let rhs53 = c * f_inf.powf(0.4) * second_moment.powf(0.6);
    let rhs54 = c_prime * f_inf.powf(0.2) * second_moment.powf(0.8);
    let slack = 1.0 + 1e-12;
    MomentCheck {
        lhs53,
        rhs53,
        lhs54,
        rhs54,
        pass: lhs53 <= rhs53 * slack && lhs54 <= rhs54 * slack,
    }
}
