//! Smoothed approximate functional equations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::arith::mobius_table;
use crate::error::{Error, Result};
use crate::moments::DirichletPolynomial;
use crate::smoothing::{smooth_cutoff, SmoothingParams};
use crate::special::{gamma, zeta};

/// One Hecke–Maass cusp form for SL(2, Z).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaassFormRecord {
    pub kappa: f64,
    /// +1 even, −1 odd.
    pub parity: i8,
    /// t(1), t(2), ...; index n − 1 holds t(n).
    pub coefficients: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
}

impl MaassFormRecord {
    pub fn coefficient(&self, n: u64) -> Result<f64> {
        self.coefficients.get(n as usize - 1).copied().ok_or(Error::InsufficientCoefficients {
            required: n as usize,
            available: self.coefficients.len(),
        })
    }

    pub fn depth(&self) -> usize {
        self.coefficients.len()
    }

    /// |t(n)| ≤ 1.5 d(n) n^{7/64} for every stored n.
    pub fn within_sanity_cap(&self) -> bool {
        self.coefficients.iter().enumerate().all(|(i, &t)| {
            let n = i as u64 + 1;
            t.abs() <= 1.5 * crate::arith::divisor_count(n) as f64 * (n as f64).powf(7.0 / 64.0)
        })
    }
}

/// ⌊(1 + δ) Y⌋ with Y = (1 + δ) κ²/(4π²).
pub fn afe_cutoff(kappa: f64, p: &SmoothingParams) -> usize {
    let y = (1.0 + p.delta) * kappa * kappa / (4.0 * PI * PI);
    ((1.0 + p.delta) * y + 1e-9).floor() as usize
}

fn sum_length(p: &SmoothingParams) -> usize {
    ((1.0 + p.delta) * p.y + 1e-9).floor() as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AfeEstimate {
    pub value: f64,
    /// |S(h) − S(2h)|, the change when the cutoff is sharpened.
    pub error_estimate: f64,
    pub terms: usize,
}

fn hecke_sum(coeffs: &[f64], p: &SmoothingParams, n_max: usize) -> f64 {
    let terms = (1..=n_max as u64).map(|n| coeffs[n as usize - 1] / (n as f64).sqrt() * smooth_cutoff(n, p));
    crate::par::kahan_sum(terms)
}

/// H_j(1/2) ≈ Σ_{n ≤ (1+δ)Y} t_j(n) n^{-1/2} e^{−(n/Y)^h}.
pub fn afe_hecke_central(form: &MaassFormRecord, p: &SmoothingParams) -> Result<AfeEstimate> {
    let n_max = sum_length(p).max(1);
    if form.coefficients.len() < n_max {
        return Err(Error::InsufficientCoefficients {
            required: n_max,
            available: form.coefficients.len(),
        });
    }
    let value = hecke_sum(&form.coefficients, p, n_max);
    let sharp = hecke_sum(&form.coefficients, &p.sharpened(2.0), n_max);
    Ok(AfeEstimate { value, error_estimate: (value - sharp).abs(), terms: n_max })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ZetaPairAfe {
    /// Smoothed sum with the two polar terms removed.
    pub value: f64,
    /// The smoothed sum alone.
    pub raw: f64,
    /// Residue at w = 1/2 − ir (the other is its conjugate).
    pub polar: Complex64,
    /// Imaginary part of the raw sum, zero up to rounding.
    pub imag: f64,
    pub terms: usize,
}

/// ζ(1/2 + ir) ζ(1/2 − ir) by the smoothed divisor sum.
///
/// The contour shift that produces the sum also crosses the poles of the
/// two zeta factors at w = 1/2 ∓ ir. Their residues decay like
/// exp(−πr/(2h)), which is not small at r ≈ 20–100, so they are subtracted.
pub fn afe_zeta_pair(r: f64, p: &SmoothingParams) -> Result<ZetaPairAfe> {
    if r < 15.0 {
        return Err(Error::RegimeTooSmall(r));
    }
    let n_max = sum_length(p).max(1);
    // Σ_{d | n} (d²/n)^{ir}, accumulated through multiples of d
    let mut re = vec![0.0f64; n_max + 1];
    let mut im = vec![0.0f64; n_max + 1];
    let lns: Vec<f64> = (0..=n_max).map(|k| if k == 0 { 0.0 } else { (k as f64).ln() }).collect();
    for d in 1..=n_max {
        for n in (d..=n_max).step_by(d) {
            let ph = r * (2.0 * lns[d] - lns[n]);
            re[n] += ph.cos();
            im[n] += ph.sin();
        }
    }
    let mut raw = 0.0;
    let mut imag = 0.0;
    for n in 1..=n_max {
        let wgt = smooth_cutoff(n as u64, p) / (n as f64).sqrt();
        raw += re[n] * wgt;
        imag += im[n] * wgt;
    }
    let w = Complex64::new(0.5, -r);
    let polar = zeta(Complex64::new(1.0, -2.0 * r))? * gamma(1.0 + w / p.h)? * (w * p.y.ln()).exp() / w;
    Ok(ZetaPairAfe { value: raw - 2.0 * polar.re, raw, polar, imag, terms: n_max })
}

fn mobius_range(y: f64, h: f64) -> usize {
    // e^{−(n/Y)^h} < 1e−20 beyond this
    (y * 46.1f64.powf(1.0 / h)).ceil() as usize
}

/// Σ_n μ(n) n^{−1−2it} e^{−(n/Y)^h}, an approximation to 1/ζ(1 + 2it).
pub fn mobius_inv_zeta(t: f64, y: f64, h: f64) -> Result<Complex64> {
    check_mobius_args(t, y, h)?;
    let n_max = mobius_range(y, h);
    let mu = mobius_table(n_max);
    let mut s = Complex64::new(0.0, 0.0);
    for n in 1..=n_max {
        if mu[n] != 0 {
            let nf = n as f64;
            let e = (-(nf / y).powf(h)).exp();
            s += mu[n] as f64 * e / nf * Complex64::from_polar(1.0, -2.0 * t * nf.ln());
        }
    }
    Ok(s)
}

fn check_mobius_args(t: f64, y: f64, h: f64) -> Result<()> {
    if t < 5.0 || !(2.0..=1e4).contains(&y) || !(h > 0.0) {
        return Err(Error::OutOfValidatedRange(format!("mobius_inv_zeta(t = {t}, Y = {y}, h = {h})")));
    }
    Ok(())
}

/// The same sum as a Dirichlet polynomial in m = n²: a(m) = μ(√m) e^{−(√m/Y)^h}
/// on squares, so that A(1/2 + it) = Σ a(m) m^{−1/2−it}. Length M = 4Y².
pub fn mobius_square_coefficients(y: f64, h: f64) -> Result<DirichletPolynomial> {
    check_mobius_args(5.0, y, h)?;
    let m_len = (4.0 * y * y).floor() as u64;
    let n_max = (m_len as f64).sqrt().floor() as usize;
    let mu = mobius_table(n_max);
    let mut coeffs = Vec::new();
    for n in 1..=n_max {
        if mu[n] != 0 {
            let e = (-(n as f64 / y).powf(h)).exp();
            coeffs.push(((n * n) as u64, Complex64::new(mu[n] as f64 * e, 0.0)));
        }
    }
    DirichletPolynomial::new(coeffs, m_len)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::DEFAULT_DELTA;

    fn params(k: f64, delta: f64, c: f64) -> SmoothingParams {
        SmoothingParams::for_scale(k, delta, c).unwrap()
    }

    #[test]
    fn cutoff_examples() {
        assert_eq!(afe_cutoff(9.5337, &params(9.5337, 0.1, 10.0)), 2);
        let p0 = SmoothingParams { y: 1.0, h: 2.0, delta: 0.0, c: 1.0, a_target: 1.0 };
        assert_eq!(afe_cutoff(2.0 * PI, &p0), 1);
        let p = params(10.0, DEFAULT_DELTA, 2.5);
        let mut last = 0;
        for i in 0..300 {
            let c = afe_cutoff(1.0 + 0.1 * i as f64, &p);
            assert!(c >= last);
            last = c;
        }
    }

    #[test]
    fn single_term_form() {
        let mut coefficients = vec![0.0; 600];
        coefficients[0] = 1.0;
        let f = MaassFormRecord { kappa: 20.0, parity: 1, coefficients, alpha: None };
        let p = params(20.0, DEFAULT_DELTA, 2.5);
        let v = afe_hecke_central(&f, &p).unwrap();
        assert!((v.value - smooth_cutoff(1, &p)).abs() < 1e-15);
        assert!((v.value - 1.0).abs() < 1e-10);
    }

    #[test]
    fn insufficient_coefficients() {
        let f = MaassFormRecord { kappa: 20.0, parity: 1, coefficients: vec![1.0; 10], alpha: None };
        let p = params(20.0, DEFAULT_DELTA, 2.5);
        match afe_hecke_central(&f, &p) {
            Err(Error::InsufficientCoefficients { required, .. }) => {
                assert_eq!(required, afe_cutoff(20.0, &p))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn hecke_sum_is_linear() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        let p = params(15.0, DEFAULT_DELTA, 2.5);
        let n = afe_cutoff(15.0, &p);
        let sparse = |rng: &mut rand::rngs::StdRng| -> Vec<f64> {
            (0..n).map(|_| if rng.gen::<f64>() < 0.1 { rng.gen_range(-2.0..2.0) } else { 0.0 }).collect()
        };
        for _ in 0..20 {
            let a = sparse(&mut rng);
            let b = sparse(&mut rng);
            let s: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.7 * x - 1.3 * y).collect();
            let mk = |c: Vec<f64>| MaassFormRecord { kappa: 15.0, parity: 1, coefficients: c, alpha: None };
            let va = afe_hecke_central(&mk(a), &p).unwrap().value;
            let vb = afe_hecke_central(&mk(b), &p).unwrap().value;
            let vs = afe_hecke_central(&mk(s), &p).unwrap().value;
            assert!((vs - (0.7 * va - 1.3 * vb)).abs() < 1e-13);
        }
    }

    fn zeta_sq(r: f64) -> f64 {
        zeta(Complex64::new(0.5, r)).unwrap().norm_sqr()
    }

    #[test]
    fn zeta_pair_examples() {
        let p = params(40.0, DEFAULT_DELTA, 2.5);
        let v = afe_zeta_pair(40.0, &p).unwrap();
        let z = zeta_sq(40.0);
        assert!((v.value - z).abs() / z < 1e-3);
        assert!(v.imag.abs() < 1e-9);
        assert!(v.value >= -1e-6);
        assert!(matches!(afe_zeta_pair(10.0, &p), Err(Error::RegimeTooSmall(_))));
    }

    #[test]
    fn zeta_pair_error_decays() {
        let errs: Vec<f64> = [20.0, 30.0, 40.0, 60.0, 100.0]
            .iter()
            .map(|&r| {
                let v = afe_zeta_pair(r, &params(r, DEFAULT_DELTA, 2.5)).unwrap().value;
                (v - zeta_sq(r)).abs() / zeta_sq(r)
            })
            .collect();
        assert!(errs.iter().all(|&e| e <= 1e-3), "{errs:?}");
        assert!(errs.windows(2).all(|w| w[1] < w[0]), "{errs:?}");
    }

    #[test]
    fn polar_terms_matter_at_desk_scale() {
        let r = 30.0;
        let v = afe_zeta_pair(r, &params(r, DEFAULT_DELTA, 2.5)).unwrap();
        let z = zeta_sq(r);
        assert!((v.raw - z).abs() > 10.0 * (v.value - z).abs());
    }

    #[test]
    fn mobius_examples() {
        let y = 50.0;
        let h = 40.0;
        let v = mobius_inv_zeta(100.0, y, h).unwrap();
        let inv = 1.0 / zeta(Complex64::new(1.0, 200.0)).unwrap();
        assert!((v - inv).norm() <= 0.5 * y.powf(-0.25));
        let e20 = (mobius_inv_zeta(100.0, 20.0, h).unwrap() - inv).norm();
        let e200 = (mobius_inv_zeta(100.0, 200.0, h).unwrap() - inv).norm();
        assert!(e200 < e20, "{e200} vs {e20}");
        assert!(mobius_inv_zeta(1.0, y, h).is_err());
    }

    #[test]
    fn square_support_matches() {
        let (y, h) = (30.0, 20.0);
        let poly = mobius_square_coefficients(y, h).unwrap();
        assert_eq!(poly.length, 3600);
        let t = 77.0;
        let a = poly.eval(Complex64::new(0.5, t));
        let b = mobius_inv_zeta(t, y, h).unwrap();
        assert!((a - b).norm() < 1e-12);
    }
}
