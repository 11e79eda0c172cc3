//! Nonlinear Poisson equation for the electron density,
//!
//! ```text
//! -λ² Δ ln n_e = n_I - n_e,   ∂_x n_e = 0 at both walls,
//! ```
//!
//! solved for `u = ln n_e` by damped Newton iteration. The three-point
//! Laplacian is closed by ghost reflection, so its rows sum to zero and
//! `Σ n_e dx = Σ n_I dx` holds at convergence up to the residual.

use crate::error::{Error, Result};
use crate::linalg::solve_tridiagonal;
use crate::moments::lp_norm_x;
use crate::sum;

pub const MAX_NEWTON_ITERS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct PoissonSolution {
    pub log_ne: Vec<f64>,
    pub n_e: Vec<f64>,
    pub residual_norm: f64,
    pub newton_iters: usize,
}

/// `F(u) = -λ² D₂ u + e^u - n_I` with reflecting ghosts.
pub fn residual(u: &[f64], n_i: &[f64], lambda: f64, dx: f64) -> Vec<f64> {
    let n = u.len();
    let k = lambda * lambda / (dx * dx);
    (0..n)
        .map(|i| {
            let left = if i > 0 { u[i - 1] - u[i] } else { 0.0 };
            let right = if i + 1 < n { u[i + 1] - u[i] } else { 0.0 };
            -k * (left + right) + u[i].exp() - n_i[i]
        })
        .collect()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// Cold-start solve from `u₀ = ln(mean n_I)`.
pub fn solve_log_ne(n_i: &[f64], lambda: f64, dx: f64, newton_tol: f64) -> Result<PoissonSolution> {
    let mean = sum::sum(n_i.iter().copied()) / n_i.len() as f64;
    let u0 = vec![mean.ln(); n_i.len()];
    solve_log_ne_from(n_i, lambda, dx, newton_tol, &u0)
}

/// Solve starting from the guess `u0` (e.g. the previous step's `ln n_e`).
pub fn solve_log_ne_from(
    n_i: &[f64],
    lambda: f64,
    dx: f64,
    newton_tol: f64,
    u0: &[f64],
) -> Result<PoissonSolution> {
    let n = n_i.len();
    if n == 0 || u0.len() != n {
        return Err(Error::InvalidInput("density and guess must be non-empty and equally long".into()));
    }
    if let Some(v) = n_i.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidInput(format!("n_I must be finite and >= 0, got {v}")));
    }
    if !(sum::sum(n_i.iter().copied()) > 0.0) {
        return Err(Error::InvalidInput("n_I vanishes identically; no neutral solution".into()));
    }
    if !(lambda > 0.0) {
        return Err(Error::InvalidInput(format!("lambda must be > 0, got {lambda}")));
    }

    let k = lambda * lambda / (dx * dx);
    let mut u = u0.to_vec();
    let mut f = residual(&u, n_i, lambda, dx);
    let mut fnorm = inf_norm(&f);
    let mut iters = 0;
    while fnorm > newton_tol {
        if iters == MAX_NEWTON_ITERS {
            return Err(Error::NonConvergence {
                iters,
                residual: fnorm,
            });
        }
        iters += 1;
        let lower: Vec<f64> = (0..n).map(|i| if i > 0 { -k } else { 0.0 }).collect();
        let upper: Vec<f64> = (0..n).map(|i| if i + 1 < n { -k } else { 0.0 }).collect();
        let diag: Vec<f64> = (0..n)
            .map(|i| {
                let links = (i > 0) as u8 + (i + 1 < n) as u8;
                k * links as f64 + u[i].exp()
            })
            .collect();
        let mut step: Vec<f64> = f.iter().map(|v| -v).collect();
        solve_tridiagonal(&lower, &diag, &upper, &mut step)?;

        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let trial: Vec<f64> = u.iter().zip(&step).map(|(a, s)| a + alpha * s).collect();
            let ft = residual(&trial, n_i, lambda, dx);
            let nt = inf_norm(&ft);
            if nt < fnorm {
                u = trial;
                f = ft;
                fnorm = nt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Residual is at its rounding floor above the requested tolerance.
            return Err(Error::NonConvergence {
                iters,
                residual: fnorm,
            });
        }
    }
    let n_e = u.iter().map(|v| v.exp()).collect();
    Ok(PoissonSolution {
        log_ne: u,
        n_e,
        residual_norm: fnorm,
        newton_iters: iters,
    })
}

/// `λ²/2 Σ_faces ((u_{i+1} - u_i)/dx)² dx`; the wall faces carry zero flux.
pub fn electrostatic_energy(log_ne: &[f64], lambda: f64, dx: f64) -> f64 {
    let s = sum::sum(log_ne.windows(2).map(|w| {
        let g = (w[1] - w[0]) / dx;
        g * g * dx
    }));
    0.5 * lambda * lambda * s
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoSidedBound {
    pub min_ne: f64,
    pub max_ne: f64,
    pub norm53_ni: f64,
    pub norm53_ne: f64,
    /// `min_ne > 0` and `||n_e||_{5/3} <= ||n_I||_{5/3}` within 1e-10 relative.
    pub pass: bool,
}

pub fn check_two_sided_bound(sol: &PoissonSolution, n_i: &[f64], dx: f64) -> TwoSidedBound {
    let min_ne = sol.n_e.iter().copied().fold(f64::INFINITY, f64::min);
    let max_ne = sol.n_e.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let norm53_ni = lp_norm_x(n_i, 5.0 / 3.0, dx);
    let norm53_ne = lp_norm_x(&sol.n_e, 5.0 / 3.0, dx);
    TwoSidedBound {
        min_ne,
        max_ne,
        norm53_ni,
        norm53_ne,
        pass: min_ne > 0.0 && norm53_ne <= norm53_ni * (1.0 + 1e-10),
    }
}
