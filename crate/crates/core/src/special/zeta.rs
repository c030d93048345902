use num_complex::Complex64;
use std::f64::consts::PI;
use std::sync::OnceLock;

use super::gamma::{ln_gamma, ln_sin_pi};
use crate::error::{Error, Result};

/// Largest |Im s| accepted by [`zeta`].
pub const ZETA_T_MAX: f64 = 1.0e4;

// B_{2k} / (2k)! for k = 1..6
const BERNOULLI_OVER_FACT: [f64; 6] = [
    1.0 / 12.0,
    -1.0 / 720.0,
    1.0 / 30_240.0,
    -1.0 / 1_209_600.0,
    1.0 / 47_900_160.0,
    -691.0 / 1_307_674_368_000.0,
];

fn ln_table() -> &'static [f64] {
    static T: OnceLock<Vec<f64>> = OnceLock::new();
    T.get_or_init(|| {
        let n = ZETA_T_MAX as usize + 64;
        (0..=n).map(|k| if k == 0 { 0.0 } else { (k as f64).ln() }).collect()
    })
}

/// ζ(s) by Euler–Maclaurin summation with N = max(20, ⌈|t|⌉) and
/// corrections through B₁₂.
pub fn zeta(s: Complex64) -> Result<Complex64> {
    if s == Complex64::new(1.0, 0.0) {
        return Err(Error::PoleAtOne);
    }
    if !(s.im.abs() <= ZETA_T_MAX) || !(s.re.abs() <= 50.0) {
        return Err(Error::OutOfValidatedRange(format!("zeta({s})")));
    }
    let n = 20usize.max(s.im.abs().ceil() as usize);
    let lns = ln_table();
    let mut acc = Complex64::new(0.0, 0.0);
    for k in (1..n).rev() {
        acc += (-s * lns[k]).exp();
    }
    let ln_n = lns[n];
    let nf = n as f64;
    let n_ms = (-s * ln_n).exp();
    acc += n_ms * nf / (s - 1.0) + 0.5 * n_ms;
    // rising factorial s(s+1)...(s+2k-2) times N^{-s-2k+1}
    let mut poch = s;
    let mut pw = n_ms / nf;
    for (k, &b) in BERNOULLI_OVER_FACT.iter().enumerate() {
        acc += b * poch * pw;
        let j = 2.0 * k as f64 + 1.0;
        poch *= (s + j) * (s + j + 1.0);
        pw /= nf * nf;
    }
    Ok(acc)
}

/// χ(s) with ζ(s) = χ(s) ζ(1 - s).
pub fn chi(s: Complex64) -> Result<Complex64> {
    let l = s * 2f64.ln() + (s - 1.0) * PI.ln() + ln_sin_pi(s / 2.0) + ln_gamma(1.0 - s)?;
    Ok(l.exp())
}
