//! The Kuznetsov trace formula for SL(2, Z) with m, n ≥ 1:
//!
//! Σ_j α_j t_j(m) t_j(n) f(κ_j) + (1/π) ∫ σ_{2ir}(m) σ_{2ir}(n) (mn)^{−ir} |ζ(1+2ir)|^{−2} f(r) dr
//!   = (1/π²) δ_{m,n} ∫ r tanh(πr) f(r) dr + Σ_ℓ S(m, n; ℓ)/ℓ · f₊(4π√(mn)/ℓ)
//!
//! with f₊(x) = (2i/π) ∫ r J_{2ir}(x) f(r) / cosh(πr) dr.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock, RwLock};

use crate::afe::MaassFormRecord;
use crate::arith::{divisor_count, divisors, kloosterman_many, weil_bound};
use crate::error::{Error, Result};
use crate::par;
use crate::quad::{adaptive_pieces, oscillation_panels, GaussLegendre, QuadratureConfig};
use crate::smoothing::{SpectralWeight, WeightSpec};
use crate::special::{ln_gamma, zeta, SERIES_X_MAX};

/// Forms whose weight value is below this may lack α.
pub const NEGLIGIBLE_WEIGHT: f64 = 1e-14;
/// Windows closer than this many G to another eigenvalue are unreliable.
pub const ISOLATION_THRESHOLD: f64 = 5.0;
/// Width used for narrow-window extraction.
pub const DEFAULT_NARROW_G: f64 = 0.7;
/// Deconvolved forms whose error amplification exceeds this are not trusted.
pub const MAX_AMPLIFICATION: f64 = 1e3;
/// Gauss–Legendre order used on every fixed panel.
const PANEL_ORDER: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FPlusMethod {
    /// Series for x ≤ 32, the cosh integral beyond.
    Auto,
    /// The cos(x cosh u) representation.
    Integral,
    /// Power-series Bessel functions under the r-integral.
    Series,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub quad: QuadratureConfig,
    /// Target bound on the omitted Kloosterman tail.
    pub tail_tol: f64,
    /// Largest modulus ℓ the Kloosterman sum may reach.
    pub modulus_cap: u64,
    pub method: FPlusMethod,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self { quad: QuadratureConfig::default(), tail_tol: 1e-10, modulus_cap: 1 << 16, method: FPlusMethod::Auto }
    }
}

impl TraceConfig {
    /// All tolerances divided by `f`.
    pub fn tightened(&self, f: f64) -> Self {
        Self { quad: self.quad.scaled(1.0 / f), tail_tol: self.tail_tol / f, ..*self }
    }
}

fn ln_cosh_pi(r: f64) -> f64 {
    let a = PI * r.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Gauss–Legendre nodes on [lo, hi] with panels no wider than `width`.
fn panel_nodes(lo: f64, hi: f64, width: f64) -> Vec<(f64, f64)> {
    let gl = gl();
    let n = ((hi - lo) / width).ceil().max(1.0) as usize;
    let h = (hi - lo) / n as f64;
    (0..n).flat_map(|i| gl.mapped(lo + i as f64 * h, lo + (i + 1) as f64 * h).collect::<Vec<_>>()).collect()
}

fn gl() -> &'static GaussLegendre {
    static GL: OnceLock<GaussLegendre> = OnceLock::new();
    GL.get_or_init(|| GaussLegendre::new(PANEL_ORDER))
}

struct SeriesNodes {
    r: Vec<f64>,
    /// −(4/π) w r f(r) / (cosh(πr) Γ(1 + 2ir)).
    pref: Vec<Complex64>,
}

struct IntegralNodes {
    u_max: f64,
    r: Vec<f64>,
    /// w r f(r) tanh(πr)
    wr: Vec<f64>,
}

/// f₊ for one weight, with node sets cached between evaluations.
pub struct FPlus<'w> {
    w: &'w dyn SpectralWeight,
    quad: QuadratureConfig,
    method: FPlusMethod,
    lo: f64,
    hi: f64,
    series: RwLock<HashMap<u32, Arc<SeriesNodes>>>,
    integral: OnceLock<IntegralNodes>,
}

/// A value of f₊ with an estimate of its rounding noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FPlusValue {
    pub value: f64,
    pub noise: f64,
}

impl<'w> FPlus<'w> {
    pub fn new(w: &'w dyn SpectralWeight, quad: &QuadratureConfig, method: FPlusMethod) -> Self {
        let (lo, hi) = w.support();
        Self { w, quad: *quad, method, lo, hi, series: RwLock::new(HashMap::new()), integral: OnceLock::new() }
    }

    pub fn eval(&self, x: f64) -> Result<f64> {
        self.eval_with_noise(x).map(|v| v.value)
    }

    pub fn eval_with_noise(&self, x: f64) -> Result<FPlusValue> {
        if !(x > 0.0) {
            return Err(Error::OutOfValidatedRange(format!("f_plus at x = {x}")));
        }
        match self.method {
            FPlusMethod::Series => self.series_path(x),
            FPlusMethod::Integral => self.integral_path(x),
            FPlusMethod::Auto if x <= SERIES_X_MAX => self.series_path(x),
            FPlusMethod::Auto => self.integral_path(x),
        }
    }

    /// −(4/π) ∫₀^∞ r Im J_{2ir}(x) f(r) / cosh(πr) dr.
    pub fn series_path(&self, x: f64) -> Result<FPlusValue> {
        if x > SERIES_X_MAX {
            return Err(Error::SeriesRegimeExceeded { x, max: SERIES_X_MAX });
        }
        let lx = (0.5 * x).ln();
        // phase rate of (x/2)^{2ir}/Γ(1+2ir) in r, plus margin for the series
        let omega = 2.0 * lx.abs() + 2.0 * (2.0 * self.hi + 1.0).ln() + 4.0;
        let nodes = self.series_nodes(omega.ceil() as u32);
        let z = -0.25 * x * x;
        let mut value = 0.0;
        let mut mass = 0.0;
        for (&r, &p) in nodes.r.iter().zip(&nodes.pref) {
            let nu = Complex64::new(0.0, 2.0 * r);
            let mut term = Complex64::new(1.0, 0.0);
            let mut sum = term;
            let mut biggest = 1.0f64;
            let mut k = 0.0;
            loop {
                k += 1.0;
                term *= z / (k * (nu + k));
                sum += term;
                let t = term.norm();
                biggest = biggest.max(t);
                if t <= 1e-17 * sum.norm() && -z < 0.5 * k * (nu + k).norm() {
                    break;
                }
                if k > 5000.0 {
                    return Err(Error::QuadratureFailure("Bessel series in f_plus did not settle".into()));
                }
            }
            let v = p * Complex64::from_polar(1.0, 2.0 * r * lx) * sum;
            value += v.im;
            // rounding of the phases 2r log(x/2) and arg Γ(1+2ir) dominates
            mass += p.norm() * biggest * (16.0 + 2.0 * r * (lx.abs() + (2.0 * r + 1.0).ln()));
        }
        Ok(FPlusValue { value, noise: f64::EPSILON * mass })
    }

    fn series_nodes(&self, bin: u32) -> Arc<SeriesNodes> {
        if let Some(n) = self.series.read().expect("node cache").get(&bin) {
            return n.clone();
        }
        let width = (0.5 * self.w.resolution()).min(2.0 / (1.0 + bin as f64));
        let mut all = Vec::new();
        for (x, wt) in panel_nodes(self.lo, self.hi, width) {
            let f = self.w.value(x);
            if !(x > 0.0 && f > 0.0) {
                continue;
            }
            let lg = ln_gamma(Complex64::new(1.0, 2.0 * x)).expect("Γ has no poles on 1 + iR");
            all.push((x, Complex64::new((wt * x * f).ln() - ln_cosh_pi(x), 0.0) - lg));
        }
        // drop nodes more than 1e-22 below the largest
        let top = all.iter().map(|p| p.1.re).fold(f64::NEG_INFINITY, f64::max);
        let (r, pref) = all
            .into_iter()
            .filter(|p| p.1.re > top - 50.0)
            .map(|(x, lp)| (x, -(4.0 / PI) * lp.exp()))
            .unzip();
        let nodes = Arc::new(SeriesNodes { r, pref });
        self.series.write().expect("node cache").insert(bin, nodes.clone());
        nodes
    }

    /// Cut-off of the u-integral: (log K)², shortened to where the cosine
    /// transform of the weight has decayed below 1e−18 of its size, but never
    /// below the point where it is still above 1e−12.
    pub fn u_max(&self) -> f64 {
        let k = self.w.reach().max(std::f64::consts::E);
        let g = self.w.width();
        let scale = (k * g * PI.sqrt()).max(1.0);
        let gauss = |eps: f64| (scale / eps).ln().sqrt() / g;
        (k.ln().powi(2)).min(gauss(1e-18)).max(gauss(1e-12))
    }

    fn integral_nodes(&self) -> &IntegralNodes {
        self.integral.get_or_init(|| {
            let u_max = self.u_max();
            let width = (0.5 * self.w.resolution()).min(2.0 / (1.0 + 2.0 * u_max));
            let mut r = Vec::new();
            let mut wr = Vec::new();
            for (x, wt) in panel_nodes(self.lo, self.hi, width) {
                let v = wt * x * self.w.value(x) * (PI * x).tanh();
                if v != 0.0 {
                    r.push(x);
                    wr.push(v);
                }
            }
            IntegralNodes { u_max, r, wr }
        })
    }

    /// F(u) = ∫₀^∞ r f(r) tanh(πr) cos(2ru) dr.
    pub fn cosine_transform(&self, u: f64) -> f64 {
        let n = self.integral_nodes();
        n.r.iter().zip(&n.wr).map(|(&r, &w)| w * (2.0 * r * u).cos()).sum()
    }

    /// (4/π²) ∫_{−U}^{U} cos(x cosh u) F(u) du.
    pub fn integral_path(&self, x: f64) -> Result<FPlusValue> {
        let nodes = self.integral_nodes();
        let u_max = nodes.u_max;
        let fmax = 2.0 * self.hi;
        let cfg = QuadratureConfig { oscillation_safety: 0.5, ..self.quad };
        let cuts = oscillation_panels(0.0, u_max, |u| x * u.sinh() + fmax, &cfg)?;
        let pieces: Vec<(f64, f64)> = par::map(cuts.len() - 1, |i| {
            let mut s = 0.0;
            let mut mass = 0.0;
            for (u, wt) in gl().mapped(cuts[i], cuts[i + 1]) {
                let v = wt * (x * u.cosh()).cos() * self.cosine_transform(u);
                s += v;
                mass += v.abs() * (16.0 + x * u.cosh() + 2.0 * fmax * u);
            }
            (s, mass)
        });
        let value: f64 = pieces.iter().map(|p| p.0).sum();
        let mass: f64 = pieces.iter().map(|p| p.1).sum();
        let c = 8.0 / (PI * PI);
        Ok(FPlusValue { value: c * value, noise: c * f64::EPSILON * mass })
    }
}

/// f₊(x) for a weight, by the configured path.
pub fn f_plus(x: f64, w: &dyn SpectralWeight, quad: &QuadratureConfig) -> Result<f64> {
    FPlus::new(w, quad, FPlusMethod::Auto).eval(x)
}

fn window_breaks(w: &dyn SpectralWeight) -> Vec<f64> {
    let (lo, hi) = w.support();
    let step = w.resolution().min(hi - lo);
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect()
}

/// A value with a quadrature error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Term {
    pub value: f64,
    pub error: f64,
}

/// (1/π²) δ_{m,n} ∫ r tanh(πr) f(r) dr.
pub fn diagonal_term(m: u64, n: u64, w: &dyn SpectralWeight, quad: &QuadratureConfig) -> Result<Term> {
    if m != n {
        return Ok(Term { value: 0.0, error: 0.0 });
    }
    let e = adaptive_pieces(|r: f64| r * (PI * r).tanh() * w.value(r), &window_breaks(w), quad)?;
    let c = 2.0 / (PI * PI);
    Ok(Term { value: c * e.value, error: c * e.error })
}

/// σ_{2ir}(m) m^{−ir} = Σ_{d|m} cos(r log(d²/m)), which is real.
fn divisor_cos(divs: &[u64], m: u64, r: f64) -> f64 {
    let lm = (m as f64).ln();
    divs.iter().map(|&d| (r * (2.0 * (d as f64).ln() - lm)).cos()).sum()
}

/// (1/π) ∫ σ_{2ir}(m) σ_{2ir}(n) (mn)^{−ir} |ζ(1+2ir)|^{−2} f(r) dr.
pub fn continuous_term(m: u64, n: u64, w: &dyn SpectralWeight, quad: &QuadratureConfig) -> Result<Term> {
    let (dm, dn) = (divisors(m), divisors(n));
    let mut failure = None;
    let integrand = |r: f64| {
        if r == 0.0 {
            return 0.0;
        }
        match zeta(Complex64::new(1.0, 2.0 * r)) {
            Ok(z) => divisor_cos(&dm, m, r) * divisor_cos(&dn, n, r) * w.value(r) / z.norm_sqr(),
            Err(e) => {
                failure.get_or_insert(e);
                0.0
            }
        }
    };
    let e = adaptive_pieces(integrand, &window_breaks(w), quad)?;
    if let Some(err) = failure {
        return Err(err);
    }
    Ok(Term { value: 2.0 / PI * e.value, error: 2.0 / PI * e.error })
}

/// S(m, n; ℓ) for ℓ in dyadic blocks [2^b, 2^{b+1}), computed once per process.
struct KloostermanTable {
    m: u64,
    n: u64,
    blocks: Vec<OnceLock<Vec<f64>>>,
}

impl KloostermanTable {
    fn block(&self, b: usize) -> &[f64] {
        self.blocks[b].get_or_init(|| {
            let lo = 1u64 << b;
            par::map(lo as usize, |i| kloosterman_many(&[self.m], self.n, lo + i as u64)[0])
        })
    }
}

fn kloosterman_table(m: u64, n: u64) -> Arc<KloostermanTable> {
    static TABLES: OnceLock<Mutex<HashMap<(u64, u64), Arc<KloostermanTable>>>> = OnceLock::new();
    let mut t = TABLES.get_or_init(Default::default).lock().expect("table lock");
    t.entry((m, n))
        .or_insert_with(|| Arc::new(KloostermanTable { m, n, blocks: (0..40).map(|_| OnceLock::new()).collect() }))
        .clone()
}

fn weil_block(m: u64, n: u64, b: usize) -> f64 {
    let lo = 1u64 << b;
    (lo..2 * lo).map(|l| weil_bound(m, n, l) / l as f64).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KloostermanSum {
    pub value: f64,
    pub tail_bound: f64,
    /// Number of moduli summed.
    pub moduli: u64,
    /// max |f₊| over each dyadic block of ℓ.
    pub envelope: Vec<f64>,
}

/// Σ_ℓ S(m, n; ℓ)/ℓ · f₊(4π√(mn)/ℓ), summed in dyadic blocks of ℓ until the
/// Weil bound times a geometric continuation of the observed f₊ envelope
/// (with a factor 10 of slack) falls below `tail_tol`.
pub fn kloosterman_term(m: u64, n: u64, w: &dyn SpectralWeight, cfg: &TraceConfig) -> Result<KloostermanSum> {
    let fp = FPlus::new(w, &cfg.quad, cfg.method);
    kloosterman_sum(&fp, m, n, cfg)
}

fn kloosterman_sum(fp: &FPlus, m: u64, n: u64, cfg: &TraceConfig) -> Result<KloostermanSum> {
    if !(cfg.tail_tol > 0.0) {
        return Err(Error::OutOfValidatedRange("tail_tol must be positive".into()));
    }
    let x0 = 4.0 * PI * ((m * n) as f64).sqrt();
    let table = kloosterman_table(m, n);
    let mut value = 0.0;
    let mut envelope = Vec::new();
    let mut prev = None::<f64>;
    let mut rho = None::<f64>;
    let mut w_this = weil_block(m, n, 0);
    for b in 0..table.blocks.len() - 1 {
        let lo = 1u64 << b;
        let hi = 2 * lo - 1;
        if hi > cfg.modulus_cap {
            return Err(Error::TailNotConvergent(lo));
        }
        let s = table.block(b);
        let f = par::map(lo as usize, |i| fp.eval_with_noise(x0 / (lo + i as u64) as f64));
        let mut block_max = 0.0f64;
        let mut noise = 0.0f64;
        for (i, v) in f.into_iter().enumerate() {
            let v = v?;
            value += s[i] / (lo + i as u64) as f64 * v.value;
            block_max = block_max.max(v.value.abs());
            noise = noise.max(v.noise);
        }
        envelope.push(block_max);
        // Below the rounding floor the observed values say nothing about
        // f₊. For x < 2 the weight vanishes at r = ±i/2 and the r-contour
        // can be pushed past Im r = −1, so |f₊| ≤ C x²: continue the last
        // envelope with that decay instead.
        let at_floor = block_max <= 10.0 * noise;
        let decaying = x0 / (lo as f64) < 2.0;
        let env = match prev {
            Some(p) if at_floor && decaying => {
                rho = Some(rho.map_or(0.25, |r| r.min(0.25)));
                (p * 0.25).min(11.0 * noise)
            }
            _ if at_floor => 11.0 * noise,
            Some(p) => {
                rho = Some(if p > 0.0 { block_max / p } else { 0.0 });
                block_max
            }
            None => block_max,
        };
        prev = Some(env.max(f64::MIN_POSITIVE));
        let w_next = weil_block(m, n, b + 1);
        if let (Some(r), true) = (rho, b >= 3) {
            let q = r * w_next / w_this;
            if r < 1.0 && q < 1.0 {
                let tail = 10.0 * env * w_next / (1.0 - q);
                if tail <= cfg.tail_tol {
                    return Ok(KloostermanSum { value, tail_bound: tail, moduli: hi, envelope });
                }
            }
        }
        w_this = w_next;
    }
    Err(Error::TailNotConvergent(1 << (table.blocks.len() - 1)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralSum {
    pub value: f64,
    /// Bound on forms outside the dataset (and those skipped for lacking α).
    pub truncation_bound: f64,
    pub terms: usize,
}

/// Σ_j α_j t_j(m) t_j(n) f(κ_j) over the given forms.
pub fn spectral_term(forms: &[MaassFormRecord], m: u64, n: u64, w: &dyn SpectralWeight) -> Result<SpectralSum> {
    let mut value = 0.0;
    let mut skipped = 0.0;
    let mut terms = 0;
    let hecke_cap = (divisor_count(m) * divisor_count(n)) as f64 * ((m * n) as f64).powf(7.0 / 64.0);
    for f in forms {
        let fk = w.value(f.kappa);
        match f.alpha {
            Some(a) => {
                value += a * f.coefficient(m)? * f.coefficient(n)? * fk;
                terms += 1;
            }
            None if fk > NEGLIGIBLE_WEIGHT => return Err(Error::MissingAlpha(f.kappa)),
            None => skipped += 10.0 * 12.0 / (PI * PI) * hecke_cap * fk,
        }
    }
    let kmax = forms.iter().map(|f| f.kappa).fold(0.0, f64::max);
    Ok(SpectralSum { value, truncation_bound: skipped + beyond_bound(w, kmax, hecke_cap), terms })
}

/// Forms above κ_max: Weyl density 2r/π² of α-mass, |t(m) t(n)| under the
/// sanity cap, the weight by its running maximum, a factor 10 of slack.
fn beyond_bound(w: &dyn SpectralWeight, kmax: f64, hecke_cap: f64) -> f64 {
    let (_, hi) = w.support();
    if kmax >= hi {
        return 0.0;
    }
    let step = w.resolution() / 8.0;
    let n = ((hi - kmax) / step).ceil() as usize;
    let vals: Vec<f64> = (0..=n).map(|i| w.value(kmax + i as f64 * step)).collect();
    let mut run = 0.0f64;
    let mut total = 0.0;
    for i in (0..=n).rev() {
        run = run.max(vals[i]);
        total += 2.0 * (kmax + i as f64 * step) / (PI * PI) * run * step;
    }
    10.0 * hecke_cap * total
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceBreakdown {
    pub spectral: f64,
    pub continuous: f64,
    pub diagonal: f64,
    pub kloosterman: f64,
    pub kloosterman_tail_bound: f64,
    /// spectral + continuous − diagonal − kloosterman
    pub residual: f64,
    pub spectral_truncation: f64,
    pub quadrature_error: f64,
    pub moduli: u64,
}

impl TraceBreakdown {
    /// Tail bound + truncation bound + quadrature error.
    pub fn error_budget(&self) -> f64 {
        self.kloosterman_tail_bound + self.spectral_truncation + self.quadrature_error
    }
}

pub fn trace_identity(
    forms: &[MaassFormRecord],
    m: u64,
    n: u64,
    w: &dyn SpectralWeight,
    cfg: &TraceConfig,
) -> Result<TraceBreakdown> {
    let spectral = spectral_term(forms, m, n, w)?;
    let continuous = continuous_term(m, n, w, &cfg.quad)?;
    let diagonal = diagonal_term(m, n, w, &cfg.quad)?;
    let kl = kloosterman_term(m, n, w, cfg)?;
    Ok(TraceBreakdown {
        spectral: spectral.value,
        continuous: continuous.value,
        diagonal: diagonal.value,
        kloosterman: kl.value,
        kloosterman_tail_bound: kl.tail_bound,
        residual: spectral.value + continuous.value - diagonal.value - kl.value,
        spectral_truncation: spectral.truncation_bound,
        quadrature_error: continuous.error + diagonal.error,
        moduli: kl.moduli,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ArithmeticSide {
    /// diagonal + kloosterman − continuous
    pub value: f64,
    pub diagonal: f64,
    pub kloosterman: f64,
    pub continuous: f64,
    /// Kloosterman tail bound plus quadrature errors.
    pub error: f64,
    pub moduli: u64,
}

/// The side of the trace formula that needs no spectral data; it equals
/// Σ_j α_j t_j(m) t_j(n) f(κ_j).
pub fn arithmetic_side(m: u64, n: u64, w: &dyn SpectralWeight, cfg: &TraceConfig) -> Result<ArithmeticSide> {
    let diagonal = diagonal_term(m, n, w, &cfg.quad)?;
    let continuous = continuous_term(m, n, w, &cfg.quad)?;
    let kl = kloosterman_term(m, n, w, cfg)?;
    Ok(ArithmeticSide {
        value: diagonal.value + kl.value - continuous.value,
        diagonal: diagonal.value,
        kloosterman: kl.value,
        continuous: continuous.value,
        error: kl.tail_bound + diagonal.error + continuous.error,
        moduli: kl.moduli,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowExtraction {
    pub center: f64,
    pub g_narrow: f64,
    pub alpha_hat: f64,
    /// Distance to the nearest other eigenvalue in units of G.
    pub condition: f64,
    pub reliable: bool,
    pub arithmetic: f64,
    pub error: f64,
}

fn isolation(kappa: f64, g: f64, neighbors: &[f64]) -> f64 {
    neighbors
        .iter()
        .map(|&k| (k - kappa).abs())
        .filter(|&d| d > 1e-9)
        .fold(f64::INFINITY, f64::min)
        / g
}

/// Single-window estimate arithmetic_side(1, 1) / f(κ), computed whatever
/// the isolation; `reliable` says whether the window is clean.
pub fn extract_window(kappa: f64, g: f64, neighbors: &[f64], cfg: &TraceConfig) -> Result<WindowExtraction> {
    let w = WeightSpec::gaussian(kappa, g)?;
    let a = arithmetic_side(1, 1, &w, cfg)?;
    let fk = w.value(kappa);
    let condition = isolation(kappa, g, neighbors);
    Ok(WindowExtraction {
        center: kappa,
        g_narrow: g,
        alpha_hat: a.value / fk,
        condition,
        reliable: condition >= ISOLATION_THRESHOLD,
        arithmetic: a.value,
        error: a.error / fk,
    })
}

/// α̂ from one window, refusing windows with a neighbor closer than 5 G.
pub fn extract_alpha(kappa: f64, g: f64, neighbors: &[f64], cfg: &TraceConfig) -> Result<WindowExtraction> {
    let c = isolation(kappa, g, neighbors);
    if c < ISOLATION_THRESHOLD {
        return Err(Error::PoorIsolation { target: kappa, gap: c * g });
    }
    extract_window(kappa, g, neighbors, cfg)
}

/// t̂(m) = arithmetic_side(m, 1) / arithmetic_side(1, 1) in one window.
pub fn hecke_extract(kappa: f64, m: u64, g: f64, neighbors: &[f64], cfg: &TraceConfig) -> Result<f64> {
    let c = isolation(kappa, g, neighbors);
    if c < ISOLATION_THRESHOLD {
        return Err(Error::PoorIsolation { target: kappa, gap: c * g });
    }
    if m == 1 {
        return Ok(1.0);
    }
    let w = WeightSpec::gaussian(kappa, g)?;
    let den = arithmetic_side(1, 1, &w, cfg)?.value;
    if den.abs() < 1e-8 {
        return Err(Error::DivisionUnstable(den));
    }
    Ok(arithmetic_side(m, 1, &w, cfg)?.value / den)
}

/// Windows centred at every eigenvalue, solved jointly: with
/// a_i(m) = arithmetic_side(m, 1; window i) and M_ij = f(κ_j; κ_i, G),
/// M b(m) = a(m) gives b_j(m) = α_j t_j(m).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Deconvolution {
    pub g: f64,
    pub kappas: Vec<f64>,
    pub ms: Vec<u64>,
    /// arithmetic[k][i] for ms[k] and window i.
    pub arithmetic: Vec<Vec<f64>>,
    pub arithmetic_error: Vec<Vec<f64>>,
    /// coefficients[k][j] = α_j t_j(ms[k]).
    pub coefficients: Vec<Vec<f64>>,
    /// 2-norm condition number of M.
    pub condition: f64,
    /// Nearest-neighbor gap of each κ_j in units of G.
    pub isolation: Vec<f64>,
    /// Row sums of |M⁻¹|: how much window errors are amplified per form.
    pub amplification: Vec<f64>,
    pub moduli: u64,
}

pub fn deconvolve(kappas: &[f64], ms: &[u64], g: f64, cfg: &TraceConfig) -> Result<Deconvolution> {
    let k = kappas.len();
    if k == 0 || !ms.contains(&1) {
        return Err(Error::OutOfValidatedRange("deconvolution needs eigenvalues and m = 1".into()));
    }
    let windows = kappas.iter().map(|&c| WeightSpec::gaussian(c, g)).collect::<Result<Vec<_>>>()?;
    let sides = par::map(ms.len() * k, |idx| arithmetic_side(ms[idx / k], 1, &windows[idx % k], cfg));
    let mut arithmetic = vec![Vec::with_capacity(k); ms.len()];
    let mut arithmetic_error = vec![Vec::with_capacity(k); ms.len()];
    let mut moduli = 0;
    for (idx, s) in sides.into_iter().enumerate() {
        let s = s?;
        moduli = moduli.max(s.moduli);
        arithmetic[idx / k].push(s.value);
        arithmetic_error[idx / k].push(s.error);
    }
    let mat = DMatrix::from_fn(k, k, |i, j| windows[i].value(kappas[j]));
    let sv = mat.clone().svd(false, false).singular_values;
    let smin = sv.iter().cloned().fold(f64::INFINITY, f64::min);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if !(smin > 0.0) {
        return Err(Error::SingularFit);
    }
    let lu = mat.clone().lu();
    let inv = lu.try_inverse().ok_or(Error::SingularFit)?;
    let amplification = (0..k).map(|j| inv.row(j).iter().map(|v| v.abs()).sum()).collect();
    let coefficients = arithmetic
        .iter()
        .map(|a| (&inv * DVector::from_column_slice(a)).iter().cloned().collect())
        .collect();
    Ok(Deconvolution {
        g,
        kappas: kappas.to_vec(),
        ms: ms.to_vec(),
        arithmetic,
        arithmetic_error,
        coefficients,
        condition: smax / smin,
        isolation: kappas.iter().map(|&c| isolation(c, g, kappas)).collect(),
        amplification,
        moduli,
    })
}

impl Deconvolution {
    fn m_index(&self, m: u64) -> Result<usize> {
        self.ms
            .iter()
            .position(|&x| x == m)
            .ok_or_else(|| Error::OutOfValidatedRange(format!("m = {m} was not deconvolved")))
    }

    pub fn alpha(&self, j: usize) -> f64 {
        self.coefficients[self.m_index(1).expect("m = 1 present")][j]
    }

    /// t̂_j(m) = b_j(m) / b_j(1).
    pub fn hecke(&self, j: usize, m: u64) -> Result<f64> {
        let a = self.alpha(j);
        if a.abs() < 1e-8 {
            return Err(Error::DivisionUnstable(a));
        }
        Ok(self.coefficients[self.m_index(m)?][j] / a)
    }

    /// Error bound on α̂_j from the window error bounds.
    pub fn alpha_error(&self, j: usize) -> f64 {
        let e = &self.arithmetic_error[self.m_index(1).expect("m = 1 present")];
        self.amplification[j] * e.iter().cloned().fold(0.0, f64::max)
    }

    /// Amplification within [`MAX_AMPLIFICATION`], α̂ > 0, and at least 3G
    /// below the largest κ in the system. Windows near the top of a
    /// truncated spectrum see forms that are missing from it.
    pub fn reliable(&self, j: usize) -> bool {
        let top = self.kappas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        self.amplification[j] <= MAX_AMPLIFICATION && self.alpha(j) > 0.0 && self.kappas[j] + 3.0 * self.g <= top
    }

    /// The forms with α set to the extracted values (matched by κ), for
    /// the reliable ones only; the rest keep whatever α they had.
    pub fn with_alphas(&self, forms: &[MaassFormRecord]) -> Vec<MaassFormRecord> {
        forms
            .iter()
            .map(|f| {
                let mut f = f.clone();
                if let Some(j) = self.kappas.iter().position(|&k| (k - f.kappa).abs() < 1e-9) {
                    if self.reliable(j) {
                        f.alpha = Some(self.alpha(j));
                    }
                }
                f
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smoothing::WeightSum;
    use crate::special::bessel_j_imag_order;

    fn cfg() -> TraceConfig {
        TraceConfig::default()
    }

    #[test]
    fn series_path_matches_direct_integral() {
        // direct adaptive quadrature of −(4/π) ∫ r Im J_{2ir}(x) f / cosh
        let w = WeightSpec::gaussian(10.0, 1.0).unwrap();
        let q = QuadratureConfig::default();
        let fp = FPlus::new(&w, &q, FPlusMethod::Series);
        for x in [0.5, 2.0, 7.0] {
            let direct = adaptive_pieces(
                |r: f64| {
                    if r == 0.0 {
                        return 0.0;
                    }
                    -(4.0 / PI) * r * bessel_j_imag_order(r, x).unwrap().im * w.value(r) / (PI * r).cosh()
                },
                &window_breaks(&w),
                &q,
            )
            .unwrap()
            .value;
            let s = fp.eval(x).unwrap();
            assert!((s - direct).abs() < 1e-10, "x = {x}: {s} vs {direct}");
        }
    }

    #[test]
    fn two_paths_agree() {
        let w = WeightSpec::gaussian(10.0, 1.0).unwrap();
        let q = QuadratureConfig::default();
        let a = FPlus::new(&w, &q, FPlusMethod::Integral);
        let b = FPlus::new(&w, &q, FPlusMethod::Series);
        for x in [0.5, 1.0, 2.0, 5.0] {
            let (va, vb) = (a.eval(x).unwrap(), b.eval(x).unwrap());
            assert!((va - vb).abs() < 1e-6, "x = {x}: {va} vs {vb}");
        }
    }

    #[test]
    fn small_argument_collapse() {
        let w = WeightSpec::gaussian(10.0, 3.0).unwrap();
        let q = QuadratureConfig::default();
        for x in [0.01, 0.001] {
            let s = FPlus::new(&w, &q, FPlusMethod::Series).eval(x).unwrap();
            let i = FPlus::new(&w, &q, FPlusMethod::Integral).eval(x).unwrap();
            assert!(s.abs() <= 1e-8 && i.abs() <= 1e-8, "{s} {i}");
        }
    }

    #[test]
    fn diagonal_examples() {
        let q = QuadratureConfig::default();
        let w = WeightSpec::gaussian(12.0, 1.0).unwrap();
        assert_eq!(diagonal_term(1, 2, &w, &q).unwrap().value, 0.0);
        let d = diagonal_term(3, 3, &w, &q).unwrap().value;
        let (k, g) = (12.0f64, 1.0f64);
        let laplace = 2.0 / (PI * PI) * PI.sqrt() * g * k * (k * k + 0.25) / (k * k + 1000.0);
        assert!((d - laplace).abs() < 0.02 * laplace);
        // composite Simpson on a fixed grid
        let (lo, hi) = w.support();
        let n = 4000;
        let h = (hi - lo) / n as f64;
        let g = |r: f64| r * (PI * r).tanh() * w.value(r);
        let simpson: f64 = (0..=n)
            .map(|i| {
                let c = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                c * g(lo + i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
            * 2.0
            / (PI * PI);
        assert!((d - simpson).abs() < 1e-9 * d);
        for (k, g) in [(5.0, 0.3), (20.0, 4.0), (2.0, 2.0)] {
            assert!(diagonal_term(1, 1, &WeightSpec::gaussian(k, g).unwrap(), &q).unwrap().value > 0.0);
        }
    }

    #[test]
    fn continuous_examples() {
        let q = QuadratureConfig::default();
        let w = WeightSpec::gaussian(12.0, 1.0).unwrap();
        let c = continuous_term(1, 1, &w, &q).unwrap().value;
        assert!(c > 0.0);
        let (lo, hi) = w.support();
        let n = 6000;
        let h = (hi - lo) / n as f64;
        let g = |r: f64| if r == 0.0 { 0.0 } else { w.value(r) / zeta(Complex64::new(1.0, 2.0 * r)).unwrap().norm_sqr() };
        let simpson: f64 = (0..=n)
            .map(|i| {
                let c = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
                c * g(lo + i as f64 * h)
            })
            .sum::<f64>()
            * h
            / 3.0
            * 2.0
            / PI;
        assert!((c - simpson).abs() < 1e-6 * c, "{c} vs {simpson}");
        let a = continuous_term(2, 3, &w, &q).unwrap().value;
        let b = continuous_term(3, 2, &w, &q).unwrap().value;
        assert_eq!(a, b);
    }

    #[test]
    fn first_kloosterman_term() {
        let w = WeightSpec::gaussian(6.0, 2.0).unwrap();
        let c = TraceConfig { modulus_cap: 1, ..cfg() };
        assert!(matches!(kloosterman_term(1, 1, &w, &c), Err(Error::TailNotConvergent(_))));
        let fp = FPlus::new(&w, &c.quad, FPlusMethod::Auto);
        let t = kloosterman_table(1, 1);
        assert_eq!(t.block(0), &[1.0]);
        let v = fp.eval(4.0 * PI).unwrap();
        assert_eq!(v, f_plus(4.0 * PI, &w, &c.quad).unwrap());
    }

    #[test]
    fn wide_window_is_negligible() {
        let k = 30.0f64;
        let w = WeightSpec::gaussian(k, 3.0 * k.ln().sqrt()).unwrap();
        let kl = kloosterman_term(1, 1, &w, &cfg()).unwrap();
        let d = diagonal_term(1, 1, &w, &cfg().quad).unwrap().value;
        assert!(kl.value.abs() <= 1e-3 * d, "{} vs {d}", kl.value);
        assert!(kl.tail_bound <= cfg().tail_tol);
    }

    #[test]
    fn spectral_examples() {
        let w = WeightSpec::gaussian(15.0, 1.0).unwrap();
        assert_eq!(spectral_term(&[], 1, 1, &w).unwrap().value, 0.0);
        let mut c = vec![0.0; 6];
        c[0] = 1.0;
        c[1] = 1.0;
        let f = MaassFormRecord { kappa: 15.0, parity: 1, coefficients: c, alpha: Some(1.0) };
        let s = spectral_term(std::slice::from_ref(&f), 1, 2, &w).unwrap();
        assert!((s.value - w.value(15.0)).abs() < 1e-15);
        let mut g = f.clone();
        g.alpha = Some(2.0);
        assert_eq!(spectral_term(&[g], 1, 2, &w).unwrap().value, 2.0 * s.value);
        let mut h = f.clone();
        h.alpha = None;
        assert!(matches!(spectral_term(&[h.clone()], 1, 1, &w), Err(Error::MissingAlpha(_))));
        h.kappa = 60.0;
        assert!(spectral_term(&[h], 1, 1, &w).is_ok());
    }

    #[test]
    fn one_form_universe_fails_identity() {
        let w = WeightSpec::gaussian(12.0, 1.0).unwrap();
        let f = MaassFormRecord { kappa: 12.0, parity: 1, coefficients: vec![1.0], alpha: Some(1.0) };
        let t = trace_identity(&[f], 1, 1, &w, &cfg()).unwrap();
        assert!(t.residual.abs() > 0.1 * t.diagonal);
    }

    #[test]
    fn arithmetic_side_is_linear() {
        let a = WeightSpec::gaussian(11.0, 1.5).unwrap();
        let b = WeightSpec::gaussian(14.0, 2.0).unwrap();
        let sum = WeightSum(vec![a, b]);
        let c = cfg();
        let va = arithmetic_side(1, 1, &a, &c).unwrap().value;
        let vb = arithmetic_side(1, 1, &b, &c).unwrap().value;
        let vs = arithmetic_side(1, 1, &sum, &c).unwrap().value;
        assert!((vs - va - vb).abs() < 1e-10, "{vs} vs {}", va + vb);
        let x = arithmetic_side(1, 2, &a, &c).unwrap().value;
        let y = arithmetic_side(2, 1, &a, &c).unwrap().value;
        assert!((x - y).abs() < 1e-10);
    }

    #[test]
    fn isolation_guard() {
        let e = extract_alpha(19.4235, 0.5, &[19.4235, 19.4847], &cfg());
        assert!(matches!(e, Err(Error::PoorIsolation { .. })));
        assert_eq!(hecke_extract(9.5337, 1, 0.5, &[12.173], &cfg()).unwrap(), 1.0);
    }
}
