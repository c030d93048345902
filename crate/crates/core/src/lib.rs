//! Desk-scale numerics for the spectral theory of SL(2, Z): Kloosterman
//! sums, special functions, the Kuznetsov trace formula, smoothed
//! approximate functional equations and mean values of ζ.

pub mod afe;
pub mod arith;
pub mod error;
pub mod io;
pub mod moments;
pub mod par;
pub mod quad;
pub mod smoothing;
pub mod special;
pub mod trace;

pub use error::{Error, Result};
