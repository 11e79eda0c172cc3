//! Kinetic-ion / fluid-electron plasma solver in one space and three
//! velocity dimensions.
//!
//! Ions are described by a distribution function `f(t, x, v)` obeying a
//! Vlasov equation; electrons by a Boltzmann density `n_e` from a nonlinear
//! Poisson equation for `ln n_e`; the magnetic field `B = (Bx0, B_y(x),
//! B_z(x))` by a Hall-resistive induction equation. Time stepping is an
//! operator splitting whose stages each respect the discrete energy balance.

// `!(x > 0.0)` is used on purpose so that NaN inputs are rejected, and the
// numerical kernels index several parallel arrays per loop.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod cli_io;
pub mod diagnostics;
pub mod error;
pub mod grid_state;
pub mod induction;
pub mod linalg;
pub mod moments;
pub mod poisson;
pub mod remap;
pub mod splitting;
pub mod sum;
pub mod vlasov;

pub use error::{Error, Result};
