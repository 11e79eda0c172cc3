//! Conservative one-dimensional translation kernels.
//!
//! A line of cell averages is translated by `s` cells (content moves toward
//! larger indices for `s > 0`). The shift is split as `s = m + α` with
//! integer `m` and `α ∈ [0, 1)`: the fractional part is applied in flux
//! form, every cell passing the average of its reconstruction over its
//! rightmost fraction `α` to its right neighbour, and the integer part is an
//! index shift. Mass is therefore redistributed exactly.
//!
//! Several independent lines sharing the same shift can be processed
//! together as interleaved "lanes" (`data[cell * lanes + lane]`), which keeps
//! the inner loops contiguous.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RemapKernel {
    /// First order: piecewise-constant reconstruction.
    DonorCell,
    /// Piecewise-parabolic reconstruction, optionally with the monotone
    /// limiter (which keeps the map positive and bounded by the data range).
    Parabolic { limited: bool },
}

impl Default for RemapKernel {
    fn default() -> Self {
        RemapKernel::Parabolic { limited: true }
    }
}

impl RemapKernel {
    pub fn from_order(order: u8, limited: bool) -> Option<Self> {
        match order {
            1 => Some(RemapKernel::DonorCell),
            2 => Some(RemapKernel::Parabolic { limited }),
            _ => None,
        }
    }

    pub fn order(&self) -> u8 {
        match self {
            RemapKernel::DonorCell => 1,
            RemapKernel::Parabolic { .. } => 2,
        }
    }

    pub fn is_limited(&self) -> bool {
        matches!(self, RemapKernel::Parabolic { limited: true } | RemapKernel::DonorCell)
    }
}

/// Ghost cells kept on each side of the fractional-shift work array.
const GHOST: usize = 3;

/// Reusable buffers; one per worker thread.
#[derive(Default, Debug)]
pub struct RemapScratch {
    buf: Vec<f64>,
    dm: Vec<f64>,
    edge: Vec<f64>,
    flux: Vec<f64>,
    res: Vec<f64>,
}

impl RemapScratch {
    pub fn new() -> Self {
        Self::default()
    }
}

#[inline]
fn limited_slope(qm: f64, q0: f64, qp: f64) -> f64 {
    let d = 0.5 * (qp - qm);
    let dl = q0 - qm;
    let dr = qp - q0;
    if dl * dr > 0.0 {
        d.abs().min(2.0 * dl.abs()).min(2.0 * dr.abs()).copysign(d)
    } else {
        0.0
    }
}

/// Average of the parabola with edge values `(al, ar)` and mean `q` over
/// the rightmost fraction `alpha` of the cell, times `alpha`.
#[inline]
fn parabolic_flux(q: f64, mut al: f64, mut ar: f64, alpha: f64, limited: bool) -> f64 {
    if limited {
        if (ar - q) * (q - al) <= 0.0 {
            al = q;
            ar = q;
        } else {
            let da = ar - al;
            let a6 = 6.0 * (q - 0.5 * (al + ar));
            if da * a6 > da * da {
                al = 3.0 * q - 2.0 * ar;
            } else if -da * da > da * a6 {
                ar = 3.0 * q - 2.0 * al;
            }
        }
    }
    let da = ar - al;
    let a6 = 6.0 * (q - 0.5 * (al + ar));
    let abar = ar - 0.5 * alpha * (da - (1.0 - 2.0 * alpha / 3.0) * a6);
    let flux = alpha * abar;
    if limited && q >= 0.0 {
        // Outflow can neither be negative nor exceed the cell content; this
        // only trims rounding and keeps results exactly non-negative.
        flux.max(0.0).min(q)
    } else {
        flux
    }
}

impl RemapKernel {
    /// Fractional shift of `scratch.buf`, which holds `ne + 2 GHOST` cells of
    /// `lanes` values; writes the `ne` interior results to `scratch.res`.
    fn fractional(&self, scratch: &mut RemapScratch, ne: usize, lanes: usize, alpha: f64) {
        let total = ne + 2 * GHOST;
        let RemapScratch {
            buf,
            dm,
            edge,
            flux,
            res,
        } = scratch;
        let q = &buf[..total * lanes];
        flux.clear();
        flux.resize(total * lanes, 0.0);
        // Fluxes are needed out of cells GHOST-1 .. GHOST+ne-1.
        let (c0, c1) = (GHOST - 1, GHOST + ne);
        match *self {
            RemapKernel::DonorCell => {
                for c in c0..c1 {
                    for l in 0..lanes {
                        let v = q[c * lanes + l];
                        flux[c * lanes + l] = if v >= 0.0 { (alpha * v).min(v) } else { alpha * v };
                    }
                }
            }
            RemapKernel::Parabolic { limited } => {
                // Slopes on cells c0-1 ..= c1, edges on faces c0 ..= c1 (face k
                // is the left face of cell k).
                dm.clear();
                dm.resize(total * lanes, 0.0);
                for c in c0 - 1..=c1 {
                    for l in 0..lanes {
                        let (qm, q0, qp) = (q[(c - 1) * lanes + l], q[c * lanes + l], q[(c + 1) * lanes + l]);
                        dm[c * lanes + l] = if limited { limited_slope(qm, q0, qp) } else { 0.5 * (qp - qm) };
                    }
                }
                edge.clear();
                edge.resize(total * lanes, 0.0);
                for k in c0..=c1 {
                    for l in 0..lanes {
                        let (ql, qr) = (q[(k - 1) * lanes + l], q[k * lanes + l]);
                        let (dl, dr) = (dm[(k - 1) * lanes + l], dm[k * lanes + l]);
                        edge[k * lanes + l] = ql + 0.5 * (qr - ql) - (dr - dl) / 6.0;
                    }
                }
                for c in c0..c1 {
                    for l in 0..lanes {
                        let i = c * lanes + l;
                        flux[i] = parabolic_flux(q[i], edge[i], edge[i + lanes], alpha, limited);
                    }
                }
            }
        }
        res.clear();
        res.resize(ne * lanes, 0.0);
        for j in 0..ne {
            let c = GHOST + j;
            for l in 0..lanes {
                let i = c * lanes + l;
                res[j * lanes + l] = (q[i] - flux[i]) + flux[i - lanes];
            }
        }
    }

    /// Periodic translation of `q` (`n * lanes` values) by `s` cells into `out`.
    pub fn translate_periodic(&self, q: &[f64], lanes: usize, s: f64, out: &mut [f64], scratch: &mut RemapScratch) {
        let n = q.len() / lanes;
        assert!(n >= 1 && q.len() == n * lanes && out.len() == q.len());
        let m = s.floor();
        let alpha = s - m;
        let m = (m as i64).rem_euclid(n as i64) as usize;
        let src: &[f64] = if alpha == 0.0 {
            q
        } else {
            let total = n + 2 * GHOST;
            scratch.buf.clear();
            scratch.buf.resize(total * lanes, 0.0);
            for c in 0..total {
                let j = (c + n - GHOST) % n;
                scratch.buf[c * lanes..(c + 1) * lanes].copy_from_slice(&q[j * lanes..(j + 1) * lanes]);
            }
            self.fractional(scratch, n, lanes, alpha);
            &scratch.res
        };
        for j in 0..n {
            let d = (j + m) % n;
            out[d * lanes..(d + 1) * lanes].copy_from_slice(&src[j * lanes..(j + 1) * lanes]);
        }
    }

    /// Padding used by [`translate_open`](Self::translate_open) for shift `s`.
    pub fn open_padding(s: f64) -> usize {
        (s.floor() as i64).unsigned_abs() as usize + GHOST
    }

    /// Translation with zero data beyond both ends. The result, including
    /// everything pushed past the ends, is written to `out`, which is resized
    /// to `(n + 2 pad) * lanes`; original cell `j` corresponds to `out` cell
    /// `j + pad`, where `pad` is the return value.
    pub fn translate_open(
        &self,
        q: &[f64],
        lanes: usize,
        s: f64,
        out: &mut Vec<f64>,
        scratch: &mut RemapScratch,
    ) -> usize {
        let n = q.len() / lanes;
        assert_eq!(q.len(), n * lanes);
        let pad = Self::open_padding(s);
        let m = s.floor();
        let alpha = s - m;
        let m = m as i64;
        out.clear();
        out.resize((n + 2 * pad) * lanes, 0.0);
        if alpha == 0.0 {
            let start = (pad as i64 + m) as usize;
            out[start * lanes..(start + n) * lanes].copy_from_slice(q);
            return pad;
        }
        // Fractional step on cells -GHOST .. n+GHOST, with GHOST zero cells
        // on either side of that range for the reconstruction stencils.
        let ne = n + 2 * GHOST;
        let total = ne + 2 * GHOST;
        scratch.buf.clear();
        scratch.buf.resize(total * lanes, 0.0);
        let off = 2 * GHOST;
        scratch.buf[off * lanes..(off + n) * lanes].copy_from_slice(q);
        self.fractional(scratch, ne, lanes, alpha);
        // res cell k is original cell k - GHOST; it lands at k - GHOST + m + pad.
        let start = (pad as i64 + m - GHOST as i64) as usize;
        out[start * lanes..(start + ne) * lanes].copy_from_slice(&scratch.res);
        pad
    }
}
