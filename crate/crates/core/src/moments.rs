//! Mean values: weighted second moments of ζ, Motohashi's main term,
//! the constants of the first-moment asymptotic, and spectral averages.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::{E, PI};

use crate::afe::{afe_hecke_central, MaassFormRecord};
use crate::arith::{gcd, mobius_table};
use crate::error::{Error, Result};
use crate::par;
use crate::quad::{adaptive, adaptive_pieces, QuadratureConfig};
use crate::smoothing::{SmoothingParams, SpectralWeight, WeightSpec};
use crate::special::zeta;

/// A(s) = Σ_{m ≤ M} a(m) m^{−s}, stored sparsely.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirichletPolynomial {
    /// (m, a(m)) with m strictly increasing.
    pub coefficients: Vec<(u64, Complex64)>,
    pub length: u64,
}

impl DirichletPolynomial {
    pub fn new(mut coefficients: Vec<(u64, Complex64)>, length: u64) -> Result<Self> {
        if length < 1 {
            return Err(Error::OutOfValidatedRange("polynomial length must be ≥ 1".into()));
        }
        coefficients.sort_by_key(|c| c.0);
        coefficients.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        if let Some(&(m, _)) = coefficients.iter().find(|c| c.0 == 0 || c.0 > length) {
            return Err(Error::OutOfValidatedRange(format!("index {m} outside 1..={length}")));
        }
        Ok(Self { coefficients, length })
    }

    pub fn one() -> Self {
        Self { coefficients: vec![(1, Complex64::new(1.0, 0.0))], length: 1 }
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        self.coefficients.iter().map(|&(m, a)| a * (-s * (m as f64).ln()).exp()).sum()
    }

    pub fn conj(&self) -> Self {
        Self { coefficients: self.coefficients.iter().map(|&(m, a)| (m, a.conj())).collect(), length: self.length }
    }

    /// |a(m)| ≤ 10 m^{0.1}.
    pub fn within_sanity_cap(&self) -> bool {
        self.coefficients.iter().all(|&(m, a)| a.norm() <= 10.0 * (m as f64).powf(0.1))
    }
}

/// Euler's constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_860_61;
/// ζ'(2).
pub const ZETA_PRIME_2: f64 = -0.937_548_254_315_843_753_70;
const ZETA_2: f64 = PI * PI / 6.0;

fn check_moment_range(t: f64) -> Result<()> {
    if !(10.0..=2000.0).contains(&t) {
        return Err(Error::OutOfValidatedRange(format!("moment integral up to T = {t}")));
    }
    Ok(())
}

/// Breakpoints on [0, t_max] no wider than π/(2 log(2 + t)), with every
/// entry of `marks` included. Returns the breaks and the index of each mark.
fn critical_line_breaks(t_max: f64, marks: &[f64]) -> (Vec<f64>, Vec<usize>) {
    let mut breaks = vec![0.0];
    let mut idx = Vec::with_capacity(marks.len());
    let mut pending = marks.iter().copied().peekable();
    let mut t: f64 = 0.0;
    while t < t_max {
        let mut next = (t + PI / (2.0 * (2.0 + t).ln())).min(t_max);
        if let Some(&m) = pending.peek() {
            if m <= next {
                next = m;
                pending.next();
                idx.push(breaks.len());
            }
        }
        if next > t {
            breaks.push(next);
        }
        t = next;
    }
    while pending.next().is_some() {
        idx.push(breaks.len() - 1);
    }
    (breaks, idx)
}

/// ∫₀^{T_i} f for each sorted T_i in `marks`, panel by panel.
fn cumulative_integral<F>(f: F, marks: &[f64], quad: &QuadratureConfig) -> Result<Vec<f64>>
where
    F: Fn(f64) -> Result<f64> + Sync,
{
    let t_max = marks.last().copied().unwrap_or(0.0);
    let (breaks, idx) = critical_line_breaks(t_max, marks);
    let panels = par::map(breaks.len() - 1, |i| {
        let (a, b) = (breaks[i], breaks[i + 1]);
        let cfg = QuadratureConfig { abs_tol: quad.abs_tol.max(1e-11 * (b - a)), ..*quad };
        let mut failure = None;
        let est = adaptive(
            |t| match f(t) {
                Ok(v) => v,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            },
            a,
            b,
            &cfg,
        )?;
        match failure {
            Some(e) => Err(e),
            None => Ok(est.value),
        }
    });
    let mut out = Vec::with_capacity(marks.len());
    let mut acc = 0.0;
    let mut comp = 0.0;
    let mut next = idx.iter().peekable();
    for (i, p) in panels.into_iter().enumerate() {
        // Kahan, in panel order
        let y = p? - comp;
        let s = acc + y;
        comp = (s - acc) - y;
        acc = s;
        while next.peek().is_some_and(|&&j| j == i + 1) {
            out.push(acc);
            next.next();
        }
    }
    while out.len() < marks.len() {
        out.push(acc);
    }
    Ok(out)
}

/// |ζ(1/2 + it)|^{2k} / |ζ(1 + 2it)|², continuous at t = 0 where it vanishes.
fn moment_integrand(t: f64, k: u32) -> Result<f64> {
    if t.abs() < 1e-8 {
        return Ok(0.0);
    }
    let num = if k == 0 { 1.0 } else { zeta(Complex64::new(0.5, t))?.norm_sqr().powi(k as i32) };
    Ok(num / zeta(Complex64::new(1.0, 2.0 * t))?.norm_sqr())
}

/// I_k(T) = ∫₀^T |ζ(1/2 + it)|^{2k} / |ζ(1 + 2it)|² dt.
pub fn weighted_zeta_integral(t: f64, k: u32, quad: &QuadratureConfig) -> Result<f64> {
    Ok(weighted_zeta_integral_grid(&[t], k, quad)?[0])
}

/// I_k at every point of an increasing grid, in one pass.
pub fn weighted_zeta_integral_grid(ts: &[f64], k: u32, quad: &QuadratureConfig) -> Result<Vec<f64>> {
    if !(k == 1 || k == 2) {
        return Err(Error::OutOfValidatedRange(format!("k = {k}; only k = 1, 2 are supported")));
    }
    check_grid(ts)?;
    cumulative_integral(|t| moment_integrand(t, k), ts, quad)
}

/// ∫₀^T dt / |ζ(1 + 2it)|², the continuous companion of the plain count.
pub fn reciprocal_zeta_integral(t: f64, quad: &QuadratureConfig) -> Result<f64> {
    check_grid(&[t])?;
    Ok(cumulative_integral(|t| moment_integrand(t, 0), &[t], quad)?[0])
}

fn check_grid(ts: &[f64]) -> Result<()> {
    if ts.is_empty() || ts.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::OutOfValidatedRange("grid must be nonempty and strictly increasing".into()));
    }
    ts.iter().try_for_each(|&t| check_moment_range(t))
}

/// ∫₀^T |ζ(1/2 + it)|² |A(1/2 + it)|² dt by direct quadrature.
pub fn mollified_second_moment(poly: &DirichletPolynomial, t: f64, quad: &QuadratureConfig) -> Result<f64> {
    check_grid(&[t])?;
    let f = |t: f64| -> Result<f64> {
        let s = Complex64::new(0.5, t);
        Ok(zeta(s)?.norm_sqr() * poly.eval(s).norm_sqr())
    };
    Ok(cumulative_integral(f, &[t], quad)?[0])
}

fn motohashi_sum(poly: &DirichletPolynomial, t: f64, gcd_power: f64) -> f64 {
    let c = &poly.coefficients;
    let rows = par::map(c.len(), |i| {
        let (h, ah) = c[i];
        let mut row = 0.0;
        for &(k, ak) in c {
            let g = gcd(h, k) as f64;
            let (hf, kf) = (h as f64, k as f64);
            let l = (t * g.powf(gcd_power) / (2.0 * PI * hf * kf)).ln() + 2.0 * EULER_GAMMA - 1.0;
            row += (ah * ak.conj()).re * g / (hf * kf) * l;
        }
        row
    });
    t * par::kahan_sum(rows)
}

/// Main term of ∫₀^T |ζ(1/2 + it) A(1/2 + it)|² dt:
/// T Σ_{h,k} a(h) ā(k) (h,k)/(hk) (log(T (h,k)²/(2π hk)) + 2γ − 1).
pub fn motohashi_main_term(poly: &DirichletPolynomial, t: f64) -> f64 {
    motohashi_sum(poly, t, 2.0)
}

/// The same sum with (h,k) in place of (h,k)² inside the logarithm. This
/// agrees with [`motohashi_main_term`] only when A has a single term, and
/// is kept for comparison.
pub fn motohashi_main_term_single_gcd(poly: &DirichletPolynomial, t: f64) -> f64 {
    motohashi_sum(poly, t, 1.0)
}

/// J₂(n) = n² Π_{p | n} (1 − p⁻²) for n ≤ N.
fn jordan2_table(n: usize) -> Vec<f64> {
    let mut j: Vec<f64> = (0..=n).map(|k| (k * k) as f64).collect();
    let mut composite = vec![false; n + 1];
    for p in 2..=n {
        if composite[p] {
            continue;
        }
        for m in (p..=n).step_by(p) {
            if m > p {
                composite[m] = true;
            }
            j[m] -= j[m] / (p * p) as f64;
        }
    }
    j
}

/// S_e = Σ_{e | ℓ ≤ N} μ(ℓ) w(ℓ) / ℓ².
fn multiples_sum(mu: &[i8], n: usize, w: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut s = vec![0.0; n + 1];
    for (e, se) in s.iter_mut().enumerate().skip(1) {
        let mut acc = 0.0;
        for l in (e..=n).step_by(e) {
            if mu[l] != 0 {
                acc += mu[l] as f64 * w(l) / (l * l) as f64;
            }
        }
        *se = acc;
    }
    s
}

// Σ_{ℓ > N} d(ℓ)/ℓ² ≤ 2(log N + 2)/N, from D(x) ≤ x(log x + 1)
fn divisor_tail(n: f64) -> f64 {
    2.0 * (n.ln() + 2.0) / n
}

// Σ_{ℓ > N} d(ℓ) log ℓ/ℓ² ≤ (2 log² N + 5 log N + 4)/N
fn divisor_log_tail(n: f64) -> f64 {
    let l = n.ln();
    (2.0 * l * l + 5.0 * l + 4.0) / n
}

/// Σ_{ℓ,k ≤ N} μ(ℓ)μ(k)(ℓ,k)²/(ℓk)² and a bound on the omitted terms.
///
/// Written as Σ_e J₂(e) S_e² using (ℓ,k)² = Σ_{e | (ℓ,k)} J₂(e), so the cost
/// is O(N log N). The tail uses Σ_k (ℓ,k)²/k² ≤ ζ(2) d(ℓ).
pub fn series_a(cutoff: u64) -> (f64, f64) {
    let n = cutoff.max(1) as usize;
    let mu = mobius_table(n);
    let j2 = jordan2_table(n);
    let s = multiples_sum(&mu, n, |_| 1.0);
    let value = par::kahan_sum((1..=n).map(|e| j2[e] * s[e] * s[e]));
    (value, 2.0 * ZETA_2 * divisor_tail(n as f64))
}

fn series_b_with(cutoff: u64, gcd_log: f64) -> (f64, f64) {
    let n = cutoff.max(1) as usize;
    let mu = mobius_table(n);
    let j2 = jordan2_table(n);
    let s = multiples_sum(&mu, n, |_| 1.0);
    let sl = multiples_sum(&mu, n, |l| (l as f64).ln());
    // g² log g = Σ_{e | g} h(e) with h = μ * (n² log n)
    let mut h = vec![0.0; n + 1];
    for d in 2..=n {
        let v = (d * d) as f64 * (d as f64).ln();
        for (q, e) in (d..=n).step_by(d).enumerate() {
            let m = mu[q + 1];
            if m != 0 {
                h[e] += m as f64 * v;
            }
        }
    }
    let c0 = 2.0 * EULER_GAMMA - 1.0 - (2.0 * PI).ln();
    let value = par::kahan_sum(
        (1..=n).map(|e| (c0 * j2[e] + gcd_log * h[e]) * s[e] * s[e] - 4.0 * j2[e] * s[e] * sl[e]),
    );
    // |gcd_log log g − 2 log ℓ − 2 log k| ≤ 2 log ℓ + 2 log k, and
    // Σ_k (ℓ,k)² log k / k² ≤ d(ℓ)(ζ(2) log ℓ − ζ'(2))
    let nf = n as f64;
    let inner_log = 4.0 * ZETA_2 * divisor_log_tail(nf);
    let inner_const = (c0.abs() * ZETA_2 - 2.0 * ZETA_PRIME_2) * divisor_tail(nf);
    (value, 2.0 * (inner_log + inner_const))
}

/// Σ_{ℓ,k ≤ N} μ(ℓ)μ(k)(ℓ,k)²/(ℓk)² (log((ℓ,k)⁴/(2π ℓ²k²)) + 2γ − 1), with
/// tail bound. This is the T-free part of [`motohashi_main_term`] applied
/// to the squares of the Möbius polynomial.
pub fn series_b(cutoff: u64) -> (f64, f64) {
    series_b_with(cutoff, 4.0)
}

/// As [`series_b`] but with (ℓ,k)² inside the logarithm, matching
/// [`motohashi_main_term_single_gcd`].
pub fn series_b_single_gcd(cutoff: u64) -> (f64, f64) {
    series_b_with(cutoff, 2.0)
}

/// Closed forms of the two constants: A = 1/ζ(2) and
/// B = A (2γ − 1 − log 2π − 4 ζ'(2)/ζ(2)).
pub fn theorem_constants() -> (f64, f64) {
    let a = 1.0 / ZETA_2;
    (a, a * (2.0 * EULER_GAMMA - 1.0 - (2.0 * PI).ln() - 4.0 * ZETA_PRIME_2 / ZETA_2))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentFit {
    pub a_hat: f64,
    pub b_hat: f64,
    /// (T, I₁(T)).
    pub grid: Vec<(f64, f64)>,
    /// RMS of I₁(T) − T(Â log T + B̂).
    pub rms_residual: f64,
    pub residuals: Vec<f64>,
}

/// Least squares of I/T against (log T, 1).
pub fn fit_moment(grid: &[(f64, f64)]) -> Result<MomentFit> {
    if grid.windows(2).any(|w| !(w[1].0 > w[0].0)) || grid.iter().any(|p| !(p.0 > 0.0)) {
        return Err(Error::OutOfValidatedRange("fit grid must be positive and increasing".into()));
    }
    let n = grid.len() as f64;
    let xs: Vec<f64> = grid.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = grid.iter().map(|p| p.1 / p.0).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    if grid.len() < 2 || !(sxx > 1e-12 * (1.0 + mx * mx) * n) {
        return Err(Error::SingularFit);
    }
    let a_hat = sxy / sxx;
    let b_hat = my - a_hat * mx;
    let residuals: Vec<f64> = grid.iter().map(|&(t, i)| i - t * (a_hat * t.ln() + b_hat)).collect();
    let rms_residual = (residuals.iter().map(|r| r * r).sum::<f64>() / n).sqrt();
    Ok(MomentFit { a_hat, b_hat, grid: grid.to_vec(), rms_residual, residuals })
}

/// Fits I₁(T) ≈ T(A log T + B) over the grid.
pub fn fit_theorem2(ts: &[f64], quad: &QuadratureConfig) -> Result<MomentFit> {
    if ts.len() < 6 || ts.iter().any(|t| !(50.0..=2000.0).contains(t)) {
        return Err(Error::OutOfValidatedRange("fit needs at least 6 points in [50, 2000]".into()));
    }
    let values = weighted_zeta_integral_grid(ts, 1, quad)?;
    let grid: Vec<(f64, f64)> = ts.iter().copied().zip(values).collect();
    fit_moment(&grid)
}

/// Weyl's law for SL(2, Z): the number of κ_j ≤ T is about
/// T²/12 − (2T/π) log(T/(e √(π/2))) − 131/144.
pub fn weyl_count(t: f64) -> f64 {
    if t <= 1.0 {
        return 0.0;
    }
    t * t / 12.0 - 2.0 * t / PI * (t / (E * (PI / 2.0).sqrt())).ln() - 131.0 / 144.0
}

/// Relative deviation from [`weyl_count`] above which a truncated spectrum
/// is flagged.
pub const WEYL_TOLERANCE: f64 = 0.2;

/// A spectral sum over κ_j ≤ T.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralAverage {
    pub t: f64,
    pub value: f64,
    pub forms: usize,
    pub expected_forms: f64,
    /// Set when the number of forms is far from the Weyl count.
    pub warning: Option<String>,
}

fn completeness(t: f64, count: usize) -> Option<String> {
    let expected = weyl_count(t);
    // below ~5 forms the count fluctuates by more than the tolerance
    if expected < 5.0 || (count as f64 - expected).abs() <= WEYL_TOLERANCE * expected {
        return None;
    }
    Some(format!(
        "incomplete spectrum: {count} forms with kappa <= {t}, Weyl's law expects about {expected:.1}"
    ))
}

fn spectral_average<F>(t: f64, forms: &[MaassFormRecord], mut term: F) -> Result<SpectralAverage>
where
    F: FnMut(&MaassFormRecord) -> Result<f64>,
{
    let mut terms = Vec::new();
    for f in forms.iter().filter(|f| f.kappa <= t) {
        let alpha = f.alpha.ok_or(Error::MissingAlpha(f.kappa))?;
        terms.push(alpha * term(f)?);
    }
    Ok(SpectralAverage {
        t,
        value: par::kahan_sum(terms.iter().copied()),
        forms: terms.len(),
        expected_forms: weyl_count(t),
        warning: completeness(t, terms.len()),
    })
}

/// Σ_{κ_j ≤ T} α_j H_j(1/2). Each H_j is computed at its own scale κ_j,
/// taking δ and C from `p`.
pub fn sum_alpha_h(t: f64, forms: &[MaassFormRecord], p: &SmoothingParams) -> Result<SpectralAverage> {
    spectral_average(t, forms, |f| {
        let q = SmoothingParams::for_scale(f.kappa, p.delta, p.c)?;
        Ok(afe_hecke_central(f, &q)?.value)
    })
}

/// Σ_{κ_j ≤ T} α_j.
pub fn kuznetsov_count(t: f64, forms: &[MaassFormRecord]) -> Result<SpectralAverage> {
    spectral_average(t, forms, |_| Ok(1.0))
}

/// Both sides of the first-moment identity over K₀ < κ ≤ 2K₀.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Theorem1Report {
    pub k0: f64,
    pub g: f64,
    /// Σ_{K₀ < κ_j ≤ 2K₀} α_j H_j(1/2).
    pub spectral: f64,
    /// (2/π) ∫_{K₀}^{2K₀} |ζ(1/2 + ir)|² / |ζ(1 + 2ir)|² dr.
    pub continuous: f64,
    pub left: f64,
    /// (4K₀² − K₀²)/π².
    pub main: f64,
    pub deviation: f64,
    /// deviation / (G K₀).
    pub deviation_units: f64,
    /// (1/π²) ∫ r tanh(πr) w(r) dr for the averaged weight.
    pub diagonal_average: f64,
    pub forms: usize,
    /// False when the dataset stops before 2K₀ + 10G.
    pub spectrum_complete: bool,
    pub warnings: Vec<String>,
}

/// Splits the first-moment sum over the dyadic range (K₀, 2K₀] into its
/// spectral and continuous parts and compares with 3K₀²/π².
pub fn theorem1_decomposition(
    k0: f64,
    g: f64,
    forms: &[MaassFormRecord],
    quad: &QuadratureConfig,
) -> Result<Theorem1Report> {
    let w = WeightSpec::averaged(k0, g)?;
    let k1 = 2.0 * k0;
    let mut warnings = Vec::new();
    let kappa_max = forms.iter().map(|f| f.kappa).fold(0.0, f64::max);
    let spectrum_complete = kappa_max >= k1 + 10.0 * g;
    if !spectrum_complete {
        warnings.push(format!(
            "forms reach kappa = {kappa_max:.3}, short of 2K0 + 10G = {:.3}",
            k1 + 10.0 * g
        ));
    }
    if kappa_max < k1 {
        return Err(Error::OutOfValidatedRange(format!("dataset stops at {kappa_max}, below 2K0 = {k1}")));
    }
    let in_range: Vec<MaassFormRecord> = forms.iter().filter(|f| f.kappa > k0).cloned().collect();
    let p = SmoothingParams::default_for(k1)?;
    let upper = sum_alpha_h(k1, &in_range, &p)?;
    let i1 = weighted_zeta_integral_grid(&[k0, k1], 1, quad)?;
    let continuous = 2.0 / PI * (i1[1] - i1[0]);
    let left = upper.value + continuous;
    let main = 3.0 * k0 * k0 / (PI * PI);
    let (lo, hi) = w.support();
    let integrand = |r: f64| r * (PI * r).tanh() * w.value(r);
    let breaks: Vec<f64> = (0..=64).map(|i| lo + (hi - lo) * i as f64 / 64.0).collect();
    let diag = adaptive_pieces(integrand, &breaks, &quad.scaled(1e3))?;
    let diagonal_average = 2.0 / (PI * PI) * diag.value;
    Ok(Theorem1Report {
        k0,
        g,
        spectral: upper.value,
        continuous,
        left,
        main,
        deviation: left - main,
        deviation_units: (left - main) / (g * k0),
        diagonal_average,
        forms: upper.forms,
        spectrum_complete,
        warnings,
    })
}
