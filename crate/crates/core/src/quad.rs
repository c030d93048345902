//! Numerical integration: adaptive Gauss–Kronrod, tanh–sinh, fixed
//! Gauss–Legendre panels and a frequency-aware panel splitter.

use num_complex::Complex64;
use std::collections::BinaryHeap;
use std::ops::{Add, AddAssign, Mul, Sub};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct QuadratureConfig {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_panels: usize,
    /// Panels are at most `1 / (oscillation_safety * (1 + ω))` wide, with ω
    /// the local angular frequency of the integrand.
    pub oscillation_safety: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { abs_tol: 1e-14, rel_tol: 1e-12, max_panels: 200_000, oscillation_safety: 1.0 }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::QuadratureFailure("tolerances must be positive".into()));
        }
        if self.max_panels < 8 || !(self.oscillation_safety >= 1.0) {
            return Err(Error::QuadratureFailure(
                "need max_panels >= 8 and oscillation_safety >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Same config with both tolerances scaled by `f`.
    pub fn scaled(&self, f: f64) -> Self {
        Self { abs_tol: self.abs_tol * f, rel_tol: self.rel_tol * f, ..*self }
    }
}

/// Values a quadrature can accumulate.
pub trait QValue: Copy + Add<Output = Self> + Sub<Output = Self> + Mul<f64, Output = Self> + AddAssign {
    fn zero() -> Self;
    fn magnitude(&self) -> f64;
}

impl QValue for f64 {
    fn zero() -> Self {
        0.0
    }
    fn magnitude(&self) -> f64 {
        self.abs()
    }
}

impl QValue for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn magnitude(&self) -> f64 {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Estimate<T> {
    pub value: T,
    pub error: f64,
    pub evaluations: usize,
}

// 15-point Kronrod extension of the 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

fn gk15<T: QValue, F: FnMut(f64) -> T>(f: &mut F, a: f64, b: f64) -> (T, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let x = h * XGK[j];
        let v = f(c - x) + f(c + x);
        k += v * WGK[j];
        if j % 2 == 1 {
            g += v * WG[j / 2];
        }
    }
    let k = k * h;
    let g = g * h;
    (k, (k - g).magnitude())
}

struct Segment<T> {
    a: f64,
    b: f64,
    value: T,
    error: f64,
}

impl<T> PartialEq for Segment<T> {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl<T> Eq for Segment<T> {}
impl<T> PartialOrd for Segment<T> {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl<T> Ord for Segment<T> {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) on [a, b].
pub fn adaptive<T: QValue, F: FnMut(f64) -> T>(
    mut f: F,
    a: f64,
    b: f64,
    cfg: &QuadratureConfig,
) -> Result<Estimate<T>> {
    if a == b {
        return Ok(Estimate { value: T::zero(), error: 0.0, evaluations: 0 });
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut total = v;
    let mut err = e;
    let mut segments = 1usize;
    loop {
        if err <= cfg.abs_tol.max(cfg.rel_tol * total.magnitude()) {
            break;
        }
        if segments >= cfg.max_panels {
            return Err(Error::QuadratureFailure(format!(
                "adaptive on [{a}, {b}]: error {err:e} after {segments} segments"
            )));
        }
        let s = heap.pop().expect("nonempty");
        let m = 0.5 * (s.a + s.b);
        if !(m > s.a && m < s.b) {
            // interval can no longer be split in floating point
            heap.push(s);
            return Err(Error::QuadratureFailure(format!(
                "adaptive on [{a}, {b}]: interval underflow at error {err:e}"
            )));
        }
        let (v1, e1) = gk15(&mut f, s.a, m);
        let (v2, e2) = gk15(&mut f, m, s.b);
        total = total - s.value + v1 + v2;
        err = err - s.error + e1 + e2;
        heap.push(Segment { a: s.a, b: m, value: v1, error: e1 });
        heap.push(Segment { a: m, b: s.b, value: v2, error: e2 });
        segments += 1;
    }
    // re-sum to shed the drift of the running updates
    let mut value = T::zero();
    let mut error = 0.0;
    let mut items: Vec<_> = heap.into_vec();
    items.sort_by(|x, y| x.a.total_cmp(&y.a));
    for s in &items {
        value += s.value;
        error += s.error;
    }
    Ok(Estimate { value, error, evaluations: 15 * (2 * segments - 1) })
}

/// Adaptive Gauss–Kronrod over consecutive breakpoints.
pub fn adaptive_pieces<T: QValue, F: FnMut(f64) -> T>(
    mut f: F,
    breaks: &[f64],
    cfg: &QuadratureConfig,
) -> Result<Estimate<T>> {
    let mut out = Estimate { value: T::zero(), error: 0.0, evaluations: 0 };
    for w in breaks.windows(2) {
        let e = adaptive(&mut f, w[0], w[1], cfg)?;
        out.value += e.value;
        out.error += e.error;
        out.evaluations += e.evaluations;
    }
    Ok(out)
}

/// Double-exponential (tanh–sinh) rule on [a, b] with level doubling.
pub fn tanh_sinh<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    cfg: &QuadratureConfig,
) -> Result<Estimate<f64>> {
    use std::f64::consts::FRAC_PI_2;
    let h2 = 0.5 * (b - a);
    // far enough out that the endpoint gap underflows
    let tmax = 6.5;
    let mut h = 0.5;
    let mut evals = 0usize;
    let term = |t: f64, f: &mut F| -> f64 {
        let s = FRAC_PI_2 * t.sinh();
        let ch = s.cosh();
        let x = s.tanh();
        let w = FRAC_PI_2 * t.cosh() / (ch * ch);
        // distance from the nearer endpoint, exact near ±1
        let d = 1.0 / (s.abs().exp() * ch);
        let u = if x >= 0.0 { b - h2 * d } else { a + h2 * d };
        if !(u > a && u < b) || w == 0.0 {
            return 0.0;
        }
        w * f(u)
    };
    let mut sum = term(0.0, &mut f);
    evals += 1;
    let mut k = 1;
    while k as f64 * h <= tmax {
        let t = k as f64 * h;
        sum += term(t, &mut f) + term(-t, &mut f);
        evals += 2;
        k += 1;
    }
    let mut prev = sum * h * h2;
    for _level in 0..12 {
        h *= 0.5;
        let mut k = 1;
        while k as f64 * h <= tmax {
            let t = k as f64 * h;
            sum += term(t, &mut f) + term(-t, &mut f);
            evals += 2;
            k += 2;
        }
        let cur = sum * h * h2;
        let err = (cur - prev).abs();
        if err <= cfg.abs_tol.max(cfg.rel_tol * cur.abs()) {
            return Ok(Estimate { value: cur, error: err, evaluations: evals });
        }
        prev = cur;
    }
    Err(Error::QuadratureFailure(format!("tanh-sinh on [{a}, {b}] did not converge")))
}

/// Gauss–Legendre rule on [-1, 1].
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..(n + 1) / 2 {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { x } else { p1 };
                let pm = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (x * pn - pm) / (x * x - 1.0);
                let dx = pn / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Nodes and weights mapped onto [a, b].
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (c + h * x, h * w))
    }

    pub fn integrate<T: QValue, F: FnMut(f64) -> T>(&self, mut f: F, a: f64, b: f64) -> T {
        let mut s = T::zero();
        for (x, w) in self.mapped(a, b) {
            s += f(x) * w;
        }
        s
    }
}

/// Splits [a, b] into panels no wider than `1 / (safety (1 + ω(u)))`.
/// `freq` must be monotone on each side of its minimum so sampling the
/// panel ends bounds it.
pub fn oscillation_panels<W: Fn(f64) -> f64>(
    a: f64,
    b: f64,
    freq: W,
    cfg: &QuadratureConfig,
) -> Result<Vec<f64>> {
    let mut cuts = vec![a];
    let mut u = a;
    while u < b {
        let mut w = 1.0 / (cfg.oscillation_safety * (1.0 + freq(u).abs()));
        // shrink until the far end obeys the same bound
        loop {
            let lim = 1.0 / (cfg.oscillation_safety * (1.0 + freq((u + w).min(b)).abs()));
            if w <= lim * 1.000_001 {
                break;
            }
            w = lim;
        }
        u = (u + w).min(b);
        cuts.push(u);
        if cuts.len() > cfg.max_panels + 1 {
            return Err(Error::QuadratureFailure(format!(
                "oscillatory panels on [{a}, {b}] exceed {}",
                cfg.max_panels
            )));
        }
    }
    Ok(cuts)
}

/// Integral of an oscillatory integrand whose local angular frequency is
/// `freq(u)`. Panels with ω < 1 use tanh–sinh; the rest use adaptive
/// Gauss–Kronrod.
pub fn oscillatory<F: FnMut(f64) -> f64, W: Fn(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    freq: W,
    cfg: &QuadratureConfig,
) -> Result<Estimate<f64>> {
    let cuts = oscillation_panels(a, b, &freq, cfg)?;
    let n = cuts.len() - 1;
    let local = QuadratureConfig { abs_tol: cfg.abs_tol / n.max(1) as f64, ..*cfg };
    let mut out = Estimate { value: 0.0, error: 0.0, evaluations: 0 };
    for w in cuts.windows(2) {
        let calm = freq(w[0]).abs().max(freq(w[1]).abs()) < 1.0;
        let e = if calm {
            tanh_sinh(&mut f, w[0], w[1], &local).or_else(|_| adaptive(&mut f, w[0], w[1], &local))?
        } else {
            adaptive(&mut f, w[0], w[1], &local)?
        };
        out.value += e.value;
        out.error += e.error;
        out.evaluations += e.evaluations;
    }
    Ok(out)
}
