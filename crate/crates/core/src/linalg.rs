//! Small direct solvers: tridiagonal (Thomas) and general banded LU with
//! partial pivoting.

use crate::error::{Error, Result};

/// Solves a tridiagonal system in place. `lower[i]` multiplies `x[i-1]`,
/// `upper[i]` multiplies `x[i+1]`; `lower[0]` and `upper[n-1]` are ignored.
/// Intended for diagonally dominant / SPD matrices (no pivoting).
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &mut [f64]) -> Result<()> {
    let n = diag.len();
    if lower.len() != n || upper.len() != n || rhs.len() != n {
        return Err(Error::InvalidInput("tridiagonal band lengths differ".into()));
    }
    let mut c = vec![0.0; n];
    let mut denom = diag[0];
    for i in 0..n {
        if i > 0 {
            denom = diag[i] - lower[i] * c[i - 1];
        }
        if denom == 0.0 || !denom.is_finite() {
            return Err(Error::SingularSystem(format!("zero pivot in tridiagonal row {i}")));
        }
        c[i] = if i + 1 < n { upper[i] / denom } else { 0.0 };
        rhs[i] = if i > 0 { (rhs[i] - lower[i] * rhs[i - 1]) / denom } else { rhs[i] / denom };
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
    Ok(())
}

/// Square banded matrix with `kl` sub- and `ku` super-diagonals, stored in
/// LAPACK-style column-major band layout with `kl` extra rows for pivoting
/// fill-in.
#[derive(Clone, Debug)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ld: usize,
    data: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ld = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ld,
            data: vec![0.0; ld * n],
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    fn pos(&self, i: usize, j: usize) -> usize {
        (self.kl + self.ku + i - j) + j * self.ld
    }

    #[inline]
    fn in_band(&self, i: usize, j: usize) -> bool {
        i <= j + self.kl && j <= i + self.ku
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if self.in_band(i, j) {
            self.data[self.pos(i, j)]
        } else {
            0.0
        }
    }

    /// Sets an entry; panics if it lies outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        assert!(self.in_band(i, j), "entry ({i}, {j}) outside band");
        let p = self.pos(i, j);
        self.data[p] = v;
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| {
                let lo = i.saturating_sub(self.kl);
                let hi = (i + self.ku).min(self.n - 1);
                (lo..=hi).map(|j| self.data[self.pos(i, j)] * x[j]).sum()
            })
            .collect()
    }

    pub fn factor(&self) -> Result<BandLu> {
        let (n, kl, ku) = (self.n, self.kl, self.ku);
        let mut a = self.clone();
        let mut piv = vec![0usize; n];
        let reach = kl + ku;
        for j in 0..n {
            let last = (j + kl).min(n - 1);
            let mut p = j;
            let mut best = a.data[a.pos(j, j)].abs();
            for i in j + 1..=last {
                let v = a.data[a.pos(i, j)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if best == 0.0 || !best.is_finite() {
                return Err(Error::SingularSystem(format!("zero pivot in column {j}")));
            }
            piv[j] = p;
            let cmax = (j + reach).min(n - 1);
            if p != j {
                for k in j..=cmax {
                    let (pj, pp) = (a.pos(j, k), a.pos(p, k));
                    a.data.swap(pj, pp);
                }
            }
            let pivot = a.data[a.pos(j, j)];
            for i in j + 1..=last {
                let pij = a.pos(i, j);
                let l = a.data[pij] / pivot;
                a.data[pij] = l;
                if l != 0.0 {
                    for k in j + 1..=cmax {
                        let (pik, pjk) = (a.pos(i, k), a.pos(j, k));
                        a.data[pik] -= l * a.data[pjk];
                    }
                }
            }
        }
        Ok(BandLu { lu: a, piv })
    }

    /// Factors, solves, and applies iterative refinement until the relative
    /// residual falls below `tol` (at most three refinement sweeps).
    pub fn solve_refined(&self, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
        let lu = self.factor()?;
        let mut x = lu.solve(rhs);
        let scale = rhs.iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for _ in 0..3 {
            let ax = self.mul_vec(&x);
            let r: Vec<f64> = rhs.iter().zip(&ax).map(|(b, a)| b - a).collect();
            let rn = r.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            if rn <= tol * scale * 1e-3 {
                break;
            }
            let dx = lu.solve(&r);
            x.iter_mut().zip(&dx).for_each(|(xi, d)| *xi += d);
        }
        let ax = self.mul_vec(&x);
        let rn = rhs.iter().zip(&ax).fold(0.0_f64, |m, (b, a)| m.max((b - a).abs()));
        if !(rn <= tol * scale) {
            return Err(Error::SingularSystem(format!(
                "banded solve residual {rn:.3e} exceeds tolerance {tol:.1e}"
            )));
        }
        Ok(x)
    }
}

#[derive(Clone, Debug)]
pub struct BandLu {
    lu: BandMatrix,
    piv: Vec<usize>,
}

impl BandLu {
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let a = &self.lu;
        let n = a.n;
        let mut b = rhs.to_vec();
        for j in 0..n {
            b.swap(j, self.piv[j]);
            let bj = b[j];
            if bj != 0.0 {
                for i in j + 1..=(j + a.kl).min(n - 1) {
                    b[i] -= a.data[a.pos(i, j)] * bj;
                }
            }
        }
        let reach = a.kl + a.ku;
        for j in (0..n).rev() {
            let mut s = b[j];
            for k in j + 1..=(j + reach).min(n - 1) {
                s -= a.data[a.pos(j, k)] * b[k];
            }
            b[j] = s / a.data[a.pos(j, j)];
        }
        b
    }
}
