//! Special functions on the complex plane.

mod bessel;
mod gamma;
mod zeta;

pub use bessel::{
    bessel_j_diff, bessel_j_imag_order, bessel_j_imag_order_bounded, SeriesValue, SERIES_X_MAX,
};
pub use gamma::{gamma, ln_gamma};
pub use zeta::{chi, zeta, ZETA_T_MAX};

pub use num_complex::Complex64;

/// Point of the complex plane written as `re + im i`.
pub type ComplexPoint = Complex64;

/// Euler's constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_61;
