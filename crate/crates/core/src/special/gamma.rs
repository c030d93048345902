use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};

// Lanczos approximation, g = 7, nine terms.
const G: f64 = 7.0;
const COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_741_78;

fn nonpositive_integer(z: Complex64) -> bool {
    z.im == 0.0 && z.re <= 0.0 && z.re == z.re.round()
}

/// ln sin(πz) without overflow for large |Im z|.
pub(crate) fn ln_sin_pi(z: Complex64) -> Complex64 {
    if z.im.abs() < 10.0 {
        return (z * PI).sin().ln();
    }
    if z.im > 0.0 {
        // sin(πz) = (i/2) e^{-iπz} (1 - e^{2iπz})
        let i = Complex64::i();
        -i * PI * z + Complex64::new(0.5f64.ln(), PI / 2.0) + (1.0 - (2.0 * i * PI * z).exp()).ln()
    } else {
        ln_sin_pi(z.conj()).conj()
    }
}

fn ln_gamma_right(z: Complex64) -> Complex64 {
    let z = z - 1.0;
    let mut a = Complex64::new(COEF[0], 0.0);
    for (k, &c) in COEF.iter().enumerate().skip(1) {
        a += c / (z + k as f64);
    }
    let t = z + G + 0.5;
    LN_SQRT_2PI + (z + 0.5) * t.ln() - t + a.ln()
}

/// Principal-branch-free log Gamma: the real part is ln|Γ(z)| and the
/// imaginary part is correct modulo 2π.
pub fn ln_gamma(z: Complex64) -> Result<Complex64> {
    if nonpositive_integer(z) {
        return Err(Error::PoleAtNonpositiveInteger(z.re));
    }
    if z.re >= 0.5 {
        Ok(ln_gamma_right(z))
    } else {
        Ok(Complex64::new(PI.ln(), 0.0) - ln_sin_pi(z) - ln_gamma_right(1.0 - z))
    }
}

pub fn gamma(z: Complex64) -> Result<Complex64> {
    if nonpositive_integer(z) {
        return Err(Error::PoleAtNonpositiveInteger(z.re));
    }
    if z.re >= 0.5 {
        return Ok(ln_gamma_right(z).exp());
    }
    // reflection, kept out of log form so small |z| near the poles stays exact
    let s = (z * PI).sin();
    if z.im.abs() < 10.0 && s.norm() > 0.0 {
        Ok(PI / (s * ln_gamma_right(1.0 - z).exp()))
    } else {
        Ok(ln_gamma(z)?.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn rel(a: Complex64, b: Complex64) -> f64 {
        (a - b).norm() / b.norm()
    }

    #[test]
    fn known_values() {
        assert!(rel(gamma(c(1.0, 0.0)).unwrap(), c(1.0, 0.0)) < 1e-14);
        assert!(rel(gamma(c(0.5, 0.0)).unwrap(), c(PI.sqrt(), 0.0)) < 1e-14);
        assert!(rel(gamma(c(6.0, 0.0)).unwrap(), c(120.0, 0.0)) < 1e-13);
        assert!(rel(gamma(c(-0.5, 0.0)).unwrap(), c(-2.0 * PI.sqrt(), 0.0)) < 1e-14);
        let g = gamma(c(0.0, 5.0)).unwrap();
        let expect = PI / (5.0 * (5.0 * PI).sinh());
        assert!((g.norm_sqr() - expect).abs() / expect < 1e-13);
        assert!(matches!(
            gamma(c(-3.0, 0.0)),
            Err(Error::PoleAtNonpositiveInteger(_))
        ));
        assert!(gamma(c(0.0, 0.0)).is_err());
    }

    #[test]
    fn ln_gamma_large_argument() {
        // Stirling with three correction terms as the oracle
        for &z in &[c(300.0, 400.0), c(0.5, 900.0), c(800.0, -10.0), c(-20.5, 300.0)] {
            let zz = if z.re < 0.5 { 1.0 - z } else { z };
            let st = (zz - 0.5) * zz.ln() - zz + LN_SQRT_2PI + 1.0 / (12.0 * zz)
                - 1.0 / (360.0 * zz.powi(3))
                + 1.0 / (1260.0 * zz.powi(5));
            let expect = if z.re < 0.5 {
                Complex64::new(PI.ln(), 0.0) - ln_sin_pi(z) - st
            } else {
                st
            };
            let got = ln_gamma(z).unwrap();
            assert!((got.re - expect.re).abs() < 1e-10 * expect.re.abs().max(1.0), "{z}");
            let dphase = (got.im - expect.im).rem_euclid(2.0 * PI);
            assert!(dphase.min(2.0 * PI - dphase) < 1e-9, "{z}");
        }
    }

    #[test]
    fn stirling_bound_on_strip() {
        // |Γ(σ+it)| ≤ C |t|^{σ-1/2} e^{-π|t|/2} for 0 ≤ σ ≤ |t|^{2/3}, 10 ≤ |t| ≤ 500
        let mut worst = f64::NEG_INFINITY;
        for it in 0..=98 {
            let t = 10.0 + 5.0 * it as f64;
            let smax = t.powf(2.0 / 3.0);
            for is in 0..=40 {
                let s = smax * is as f64 / 40.0;
                for sign in [1.0, -1.0] {
                    let lg = ln_gamma(c(s, sign * t)).unwrap().re;
                    let lb = (s - 0.5) * t.ln() - PI * t / 2.0;
                    worst = worst.max(lg - lb);
                }
            }
        }
        let fitted = worst.exp();
        assert!(fitted <= 3.0, "fitted constant {fitted}");
    }

    proptest! {
        #[test]
        fn recurrence(re in -30.0f64..30.0, im in -30.0f64..30.0) {
            let z = c(re, im);
            prop_assume!((z - z.re.round()).norm() > 1e-3 || z.re > 0.5);
            let lhs = gamma(z + 1.0).unwrap();
            let rhs = z * gamma(z).unwrap();
            prop_assert!(rel(lhs, rhs) < 1e-11, "{} {} {}", z, lhs, rhs);
        }

        #[test]
        fn reflection(re in -10.0f64..10.0, im in -20.0f64..20.0) {
            let z = c(re, im);
            prop_assume!((z - z.re.round()).norm() > 1e-3);
            let lhs = gamma(z).unwrap() * gamma(1.0 - z).unwrap();
            let rhs = PI / (z * PI).sin();
            prop_assert!(rel(lhs, rhs) < 1e-11);
        }

        #[test]
        fn conjugation(re in 0.1f64..50.0, im in -200.0f64..200.0) {
            let z = c(re, im);
            prop_assert!(rel(gamma(z.conj()).unwrap(), gamma(z).unwrap().conj()) < 1e-13);
        }
    }
}
