//! Spectral test functions and the arithmetic cutoff e^{-(n/Y)^h}.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::quad::{adaptive, QuadratureConfig};
use crate::special::gamma;

/// Half-width, in units of G, outside which a Gaussian window is dropped.
pub const WINDOW_HALF_WIDTH: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightKind {
    Gaussian,
    Averaged,
}

/// Gaussian window centred at ±K, or its average over K ∈ [K₀, 2K₀].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightSpec {
    pub kind: WeightKind,
    /// Centre K, or K₀ for the averaged window.
    pub k: f64,
    pub g: f64,
    /// 2K₀ for the averaged window, unused otherwise.
    pub k0_upper: f64,
}

impl WeightSpec {
    pub fn gaussian(k: f64, g: f64) -> Result<Self> {
        let w = Self { kind: WeightKind::Gaussian, k, g, k0_upper: 0.0 };
        w.validate()?;
        Ok(w)
    }

    pub fn averaged(k0: f64, g: f64) -> Result<Self> {
        let w = Self { kind: WeightKind::Averaged, k: k0, g, k0_upper: 2.0 * k0 };
        w.validate()?;
        Ok(w)
    }

    /// Whether G ≤ √K. Wide windows such as G = 3 sqrt(log K) at K = 30
    /// break this, so it is reported rather than enforced.
    pub fn within_width_cap(&self) -> bool {
        self.g <= self.k.sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k > 0.0 && self.g > 0.0) {
            return Err(Error::InvalidWeight(format!("K = {}, G = {}", self.k, self.g)));
        }
        if self.kind == WeightKind::Averaged && self.k0_upper != 2.0 * self.k {
            return Err(Error::InvalidWeight("averaged window needs K0_upper = 2 K0".into()));
        }
        Ok(())
    }
}

/// Even spectral weight on the real line with the decay needed by the trace
/// formula. Anything implementing this can be fed to the trace module.
pub trait SpectralWeight: Sync + Send {
    fn value(&self, r: f64) -> f64;
    /// Interval of r ≥ 0 outside which the weight is negligible.
    fn support(&self) -> (f64, f64);
    /// Smallest length scale of the weight in r.
    fn resolution(&self) -> f64;
    /// Upper end of the bulk of the weight (used to size cutoffs).
    fn reach(&self) -> f64 {
        self.support().1
    }
    /// Gaussian width governing the decay of the cosine transform.
    fn width(&self) -> f64 {
        self.resolution()
    }
}

fn rational(r: Complex64) -> Complex64 {
    (r * r + 0.25) / (r * r + 1000.0)
}

/// f(r, K) = (r² + 1/4)/(r² + 1000) · [e^{−((r−K)/G)²} + e^{−((r+K)/G)²}].
pub fn gaussian_weight(r: Complex64, w: &WeightSpec) -> Result<Complex64> {
    if w.kind != WeightKind::Gaussian {
        return Err(Error::InvalidWeight("gaussian_weight needs a gaussian spec".into()));
    }
    if r.im.abs() > 0.5 {
        return Err(Error::OutsideRegularityStrip(r.im.abs()));
    }
    let a = (r - w.k) / w.g;
    let b = (r + w.k) / w.g;
    Ok(rational(r) * ((-a * a).exp() + (-b * b).exp()))
}

fn gaussian_real(r: f64, k: f64, g: f64) -> f64 {
    let a = (r - k) / g;
    let b = (r + k) / g;
    (r * r + 0.25) / (r * r + 1000.0) * ((-a * a).exp() + (-b * b).exp())
}

/// Error function: Maclaurin series below 2.5, continued fraction above.
pub fn erf(x: f64) -> f64 {
    if x < 0.0 {
        return -erf(-x);
    }
    if x < 2.5 {
        // Maclaurin series, converges fast here
        let mut term = x;
        let mut sum = x;
        let x2 = x * x;
        let mut k = 0.0;
        loop {
            k += 1.0;
            term *= -x2 / k;
            let add = term / (2.0 * k + 1.0);
            sum += add;
            if add.abs() <= 1e-17 * sum.abs() {
                break;
            }
        }
        2.0 / PI.sqrt() * sum
    } else {
        1.0 - erfc_cf(x)
    }
}

/// erfc for x ≥ 2.5 by Lentz's continued fraction.
fn erfc_cf(x: f64) -> f64 {
    // erfc x = exp(−x²)/√π · 1/(x + 1/2/(x + 1/(x + 3/2/(x + 2/(x + ...)))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for n in 1..300 {
        let a = n as f64 * 0.5;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / (PI.sqrt() * f)
}

/// w(r) = (1/(√π G)) ∫_{K₀}^{2K₀} f(r, K) dK in closed form.
pub fn averaged_weight(r: f64, w: &WeightSpec, _quad: &QuadratureConfig) -> Result<f64> {
    if w.kind != WeightKind::Averaged {
        return Err(Error::InvalidWeight("averaged_weight needs an averaged spec".into()));
    }
    Ok(averaged_real(r, w.k, w.k0_upper, w.g))
}

fn averaged_real(r: f64, k0: f64, k1: f64, g: f64) -> f64 {
    // with K = r + Gx the Gaussian integrates to (√π/2)(erf(b) − erf(a))
    let d = |lo: f64, hi: f64| {
        if lo > 3.0 {
            erfc_cf(lo) - erfc_cf(hi)
        } else if hi < -3.0 {
            erfc_cf(-hi) - erfc_cf(-lo)
        } else {
            erf(hi) - erf(lo)
        }
    };
    let plus = d((k0 - r) / g, (k1 - r) / g);
    let minus = d((k0 + r) / g, (k1 + r) / g);
    0.5 * (r * r + 0.25) / (r * r + 1000.0) * (plus + minus)
}

impl SpectralWeight for WeightSpec {
    fn value(&self, r: f64) -> f64 {
        match self.kind {
            WeightKind::Gaussian => gaussian_real(r, self.k, self.g),
            WeightKind::Averaged => averaged_real(r, self.k, self.k0_upper, self.g),
        }
    }

    fn support(&self) -> (f64, f64) {
        let pad = WINDOW_HALF_WIDTH * self.g;
        match self.kind {
            WeightKind::Gaussian => ((self.k - pad).max(0.0), self.k + pad),
            WeightKind::Averaged => ((self.k - pad).max(0.0), self.k0_upper + pad),
        }
    }

    fn resolution(&self) -> f64 {
        self.g
    }

    fn reach(&self) -> f64 {
        match self.kind {
            WeightKind::Gaussian => self.k,
            WeightKind::Averaged => self.k0_upper,
        }
    }
}

/// Pointwise sum of weights (used for linearity checks).
#[derive(Debug, Clone)]
pub struct WeightSum(pub Vec<WeightSpec>);

impl SpectralWeight for WeightSum {
    fn value(&self, r: f64) -> f64 {
        self.0.iter().map(|w| w.value(r)).sum()
    }
    fn support(&self) -> (f64, f64) {
        self.0.iter().map(|w| w.support()).fold((f64::INFINITY, 0.0), |a, b| (a.0.min(b.0), a.1.max(b.1)))
    }
    fn resolution(&self) -> f64 {
        self.0.iter().map(|w| w.g).fold(f64::INFINITY, f64::min)
    }
    fn reach(&self) -> f64 {
        self.0.iter().map(|w| w.reach()).fold(0.0, f64::max)
    }
}

/// (Y, h, δ) of the smoothed cutoff, with h = C log K.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingParams {
    pub y: f64,
    pub h: f64,
    pub delta: f64,
    pub c: f64,
    /// Error exponent implied by (δ, C): the remainder is about K^{−A}.
    pub a_target: f64,
}

/// Default δ; see the README for why it is far from small.
pub const DEFAULT_DELTA: f64 = 5.0;
/// Default C in h = C log K.
pub const DEFAULT_C: f64 = 2.5;

impl SmoothingParams {
    /// Parameters for scale K: Y = (1 + δ) K²/(4π²), h = C log K.
    pub fn for_scale(k: f64, delta: f64, c: f64) -> Result<Self> {
        let p = Self {
            y: (1.0 + delta) * k * k / (4.0 * PI * PI),
            h: c * k.ln(),
            delta,
            c,
            a_target: c * (1.0 + delta).ln(),
        };
        p.validate()?;
        Ok(p)
    }

    /// Chooses C so the remainder is roughly K^{−A}.
    pub fn with_target(k: f64, delta: f64, a_target: f64) -> Result<Self> {
        Self::for_scale(k, delta, a_target / (1.0 + delta).ln())
    }

    pub fn default_for(k: f64) -> Result<Self> {
        Self::for_scale(k, DEFAULT_DELTA, DEFAULT_C)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.y >= 1.0 && self.h >= 2.0 && self.delta > 0.0 && self.c > 0.0) {
            return Err(Error::OutOfValidatedRange(format!(
                "smoothing Y = {}, h = {}, delta = {}",
                self.y, self.h, self.delta
            )));
        }
        Ok(())
    }

    /// Same parameters with h (and C) multiplied by `f`.
    pub fn sharpened(&self, f: f64) -> Self {
        Self { h: self.h * f, c: self.c * f, a_target: self.a_target * f, ..*self }
    }
}

/// e^{−(n/Y)^h}.
pub fn smooth_cutoff(n: u64, p: &SmoothingParams) -> f64 {
    let e = (n as f64 / p.y).powf(p.h);
    (-e).exp()
}

/// |(1/2πi) ∫_{(c)} (Y/n)^w Γ(1 + w/h) dw/w − e^{−(n/Y)^h}|.
pub fn mellin_inversion_check(
    n: u64,
    p: &SmoothingParams,
    c: f64,
    quad: &QuadratureConfig,
) -> Result<f64> {
    if !(c > 0.0) {
        return Err(Error::OutOfValidatedRange(format!("contour abscissa c = {c}")));
    }
    let l = (p.y / n as f64).ln();
    let integrand = |u: f64| -> Complex64 {
        let w = Complex64::new(c, u);
        let g = gamma(1.0 + w / p.h).unwrap_or_default();
        (w * l).exp() * g / w
    };
    // truncate where the integrand falls below 1e−16
    let mut top = 8.0 * p.h;
    while integrand(top).norm() >= 1e-16 {
        top *= 1.25;
        if top > 1e6 {
            return Err(Error::QuadratureFailure("Mellin integrand does not decay".into()));
        }
    }
    // the integrand at −u is the conjugate, so integrate Re over [0, top]
    let cfg = QuadratureConfig { abs_tol: quad.abs_tol.min(1e-13), ..*quad };
    let breaks: Vec<f64> = (0..=64).map(|k| top * k as f64 / 64.0).collect();
    let mut total = 0.0;
    for w in breaks.windows(2) {
        total += adaptive(|u| integrand(u).re, w[0], w[1], &cfg)?.value;
    }
    let value = total / PI;
    Ok((value - smooth_cutoff(n, p)).abs())
}
