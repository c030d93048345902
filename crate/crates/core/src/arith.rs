//! Integer and multiplicative primitives.

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::error::{Error, Result};

/// Default upper limit on Kloosterman moduli.
pub const DEFAULT_MODULUS_CAP: u64 = 100_000_000;

/// Moduli up to this size get a cosine table.
const COS_TABLE_MAX: u64 = 1 << 20;

pub fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Inverse of `x` modulo `c` by the extended Euclidean algorithm.
pub fn mod_inverse(x: i64, c: u64) -> Result<u64> {
    if c == 1 {
        return Ok(0);
    }
    let ci = c as i128;
    let a = (x as i128).rem_euclid(ci);
    let (mut r0, mut r1) = (ci, a);
    let (mut s0, mut s1) = (0i128, 1i128);
    while r1 != 0 {
        let q = r0 / r1;
        (r0, r1) = (r1, r0 - q * r1);
        (s0, s1) = (s1, s0 - q * s1);
    }
    if r0 != 1 {
        return Err(Error::NotCoprime { x, c });
    }
    Ok(s0.rem_euclid(ci) as u64)
}

/// Prime factorisation by trial division on a 2,3,5 wheel.
pub fn factorize(mut n: u64) -> Vec<(u64, u32)> {
    let mut out = Vec::new();
    let take = |n: &mut u64, p: u64, out: &mut Vec<(u64, u32)>| {
        if *n % p == 0 {
            let mut e = 0;
            while *n % p == 0 {
                *n /= p;
                e += 1;
            }
            out.push((p, e));
        }
    };
    for p in [2, 3, 5] {
        take(&mut n, p, &mut out);
    }
    const STEPS: [u64; 8] = [4, 2, 4, 2, 4, 6, 2, 6];
    let mut p = 7u64;
    let mut i = 0;
    while p * p <= n {
        take(&mut n, p, &mut out);
        p += STEPS[i];
        i = (i + 1) % 8;
    }
    if n > 1 {
        out.push((n, 1));
    }
    out
}

pub fn mobius(n: u64) -> i8 {
    assert!(n >= 1, "mobius needs n >= 1");
    let f = factorize(n);
    if f.iter().any(|&(_, e)| e > 1) {
        0
    } else if f.len() % 2 == 0 {
        1
    } else {
        -1
    }
}

/// μ(0..=n) by a linear sieve; index 0 holds 0.
pub fn mobius_table(n: usize) -> Vec<i8> {
    let mut mu = vec![1i8; n + 1];
    let mut is_comp = vec![false; n + 1];
    let mut primes = Vec::new();
    if n >= 1 {
        mu[0] = 0;
    }
    for i in 2..=n {
        if !is_comp[i] {
            primes.push(i);
            mu[i] = -1;
        }
        for &p in &primes {
            let ip = i * p;
            if ip > n {
                break;
            }
            is_comp[ip] = true;
            if i % p == 0 {
                mu[ip] = 0;
                break;
            }
            mu[ip] = -mu[i];
        }
    }
    mu
}

/// Sorted divisors of `n`.
pub fn divisors(n: u64) -> Vec<u64> {
    let mut ds = vec![1u64];
    for (p, e) in factorize(n) {
        let len = ds.len();
        let mut pk = 1;
        for _ in 0..e {
            pk *= p;
            for i in 0..len {
                ds.push(ds[i] * pk);
            }
        }
    }
    ds.sort_unstable();
    ds
}

pub fn divisor_count(n: u64) -> u64 {
    factorize(n).iter().map(|&(_, e)| e as u64 + 1).product()
}

/// σ_a(n) = Σ_{d | n} d^a.
pub fn divisor_sigma(a: Complex64, n: u64) -> Complex64 {
    assert!(n >= 1, "divisor_sigma needs n >= 1");
    divisors(n)
        .into_iter()
        .map(|d| (a * (d as f64).ln()).exp())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KloostermanQuery {
    pub m: u64,
    pub n: u64,
    pub c: u64,
}

impl KloostermanQuery {
    pub fn new(m: u64, n: u64, c: u64) -> Result<Self> {
        Self::with_cap(m, n, c, DEFAULT_MODULUS_CAP)
    }

    pub fn with_cap(m: u64, n: u64, c: u64, cap: u64) -> Result<Self> {
        if m == 0 || n == 0 || c == 0 {
            return Err(Error::OutOfValidatedRange(format!(
                "Kloosterman arguments must be positive, got ({m}, {n}, {c})"
            )));
        }
        if c > cap {
            return Err(Error::ModulusTooLarge { c, cap });
        }
        Ok(Self { m, n, c })
    }
}

/// Inverses of every unit modulo `c` as (x, x̄) pairs.
fn units_with_inverses(c: u64) -> Vec<(u64, u64)> {
    if c == 1 {
        return vec![(0, 0)];
    }
    (1..c)
        .filter(|&x| gcd(x, c) == 1)
        .map(|x| (x, mod_inverse(x as i64, c).expect("unit")))
        .collect()
}

fn cos_sum(units: &[(u64, u64)], m: u64, n: u64, c: u64, table: Option<&[f64]>) -> f64 {
    let (mr, nr) = ((m % c) as u128, (n % c) as u128);
    let cu = c as u128;
    let phase = |&(x, xi): &(u64, u64)| ((mr * x as u128 + nr * xi as u128) % cu) as u64;
    // Summing by residue class makes the result independent of the order
    // in which units are visited, so S(m,n;c) = S(n,m;c) bit for bit.
    match table {
        Some(t) => {
            let mut count = vec![0u32; c as usize];
            for u in units {
                count[phase(u) as usize] += 1;
            }
            crate::par::kahan_sum(
                count.iter().zip(t).filter(|(&k, _)| k != 0).map(|(&k, &v)| k as f64 * v),
            )
        }
        None => {
            let mut ks: Vec<u64> = units.iter().map(phase).collect();
            ks.sort_unstable();
            crate::par::kahan_sum(ks.into_iter().map(|k| (TAU * k as f64 / c as f64).cos()))
        }
    }
}

fn cos_table(c: u64) -> Option<Vec<f64>> {
    (c <= COS_TABLE_MAX).then(|| (0..c).map(|k| (TAU * k as f64 / c as f64).cos()).collect())
}

/// S(m, n; c) = Σ_{x mod c, (x,c)=1} cos(2π(m x + n x̄)/c).
pub fn kloosterman(q: &KloostermanQuery) -> f64 {
    let units = units_with_inverses(q.c);
    let table = cos_table(q.c);
    cos_sum(&units, q.m, q.n, q.c, table.as_deref())
}

/// S(m, n; c) for several `m` sharing one modulus and one `n`.
pub fn kloosterman_many(ms: &[u64], n: u64, c: u64) -> Vec<f64> {
    let units = units_with_inverses(c);
    let table = cos_table(c);
    ms.iter()
        .map(|&m| cos_sum(&units, m, n, c, table.as_deref()))
        .collect()
}

/// The exponential sum with e(·) kept complex; its imaginary part cancels.
pub fn kloosterman_complex(q: &KloostermanQuery) -> Complex64 {
    units_with_inverses(q.c)
        .into_iter()
        .map(|(x, xi)| {
            let k = ((q.m as u128 * x as u128 + q.n as u128 * xi as u128) % q.c as u128) as f64;
            Complex64::from_polar(1.0, TAU * k / q.c as f64)
        })
        .sum()
}

/// Weil bound d(c) sqrt(gcd(m, n, c)) sqrt(c).
pub fn weil_bound(m: u64, n: u64, c: u64) -> f64 {
    let g = gcd(gcd(m, n), c);
    divisor_count(c) as f64 * (g as f64).sqrt() * (c as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_inverse(x: i64, c: u64) -> Option<u64> {
        (0..c).find(|&y| ((x.rem_euclid(c as i64) as u64) * y) % c == 1 % c)
    }

    #[test]
    fn gcd_examples() {
        assert_eq!(gcd(12, 18), 6);
        assert_eq!(gcd(1, 97), 1);
        assert_eq!(gcd(0, 7), 7);
        assert_eq!(gcd(0, 0), 0);
    }

    #[test]
    fn mod_inverse_examples() {
        assert_eq!(mod_inverse(3, 7), Ok(5));
        assert_eq!(brute_inverse(3, 7), Some(5));
        assert_eq!(mod_inverse(1, 1), Ok(0));
        assert_eq!(mod_inverse(2, 4), Err(Error::NotCoprime { x: 2, c: 4 }));
        assert_eq!(mod_inverse(-3, 7), Ok(2));
    }

    #[test]
    fn mobius_examples() {
        assert_eq!(mobius(1), 1);
        assert_eq!(mobius(12), 0);
        assert_eq!(mobius(30), -1);
        let t = mobius_table(2000);
        for n in 1..=2000u64 {
            assert_eq!(t[n as usize], mobius(n), "n = {n}");
        }
    }

    #[test]
    fn mobius_convolution_is_delta() {
        let mu = mobius_table(10_000);
        let mut conv = vec![0i64; 10_001];
        for d in 1..=10_000usize {
            if mu[d] != 0 {
                for k in (d..=10_000).step_by(d) {
                    conv[k] += mu[d] as i64;
                }
            }
        }
        assert_eq!(conv[1], 1);
        assert!(conv[2..].iter().all(|&v| v == 0));
    }

    #[test]
    fn divisor_sigma_examples() {
        let a = Complex64::new(0.3, 7.0);
        assert!((divisor_sigma(a, 1) - 1.0).norm() < 1e-15);
        assert!((divisor_sigma(Complex64::new(0.0, 0.0), 6) - 4.0).norm() < 1e-15);
        let r = 2.7;
        let p = 13u64;
        let expect = 1.0 + Complex64::new(0.0, 2.0 * r * (p as f64).ln()).exp();
        assert!((divisor_sigma(Complex64::new(0.0, 2.0 * r), p) - expect).norm() < 1e-14);
        assert_eq!(divisors(36), vec![1, 2, 3, 4, 6, 9, 12, 18, 36]);
    }

    #[test]
    fn kloosterman_examples() {
        let s = |m, n, c| kloosterman(&KloostermanQuery::new(m, n, c).unwrap());
        assert_eq!(s(1, 1, 1), 1.0);
        // brute force: x in {1, 2}, both self-inverse mod 3
        let brute = (TAU * 2.0 / 3.0).cos() + (TAU * 4.0 / 3.0).cos();
        assert!((s(1, 1, 3) - brute).abs() < 1e-15);
        assert!((s(1, 1, 3) + 1.0).abs() < 1e-14);
        // S(1,1;5) = 2 cos(4π/5) + 2 cos(2π/5)... by direct enumeration
        let brute5: f64 = [(1u64, 1u64), (2, 3), (3, 2), (4, 4)]
            .iter()
            .map(|&(x, xi)| (TAU * ((x + xi) % 5) as f64 / 5.0).cos())
            .sum();
        assert!((s(1, 1, 5) - brute5).abs() < 1e-14);
        assert!((s(3, 7, 40) - s(7, 3, 40)).abs() == 0.0);
        assert_eq!(
            kloosterman_many(&[1, 2, 3], 1, 97),
            vec![s(1, 1, 97), s(2, 1, 97), s(3, 1, 97)]
        );
    }

    #[test]
    fn ramanujan_sum_special_case() {
        // S(m, 0-like case is not allowed; S(m, c; c) with n ≡ 0 is the Ramanujan sum c_c(m)
        let q = KloostermanQuery::new(1, 12, 12).unwrap();
        // c_12(1) = μ(12) = 0
        assert!(kloosterman(&q).abs() < 1e-12);
        let q = KloostermanQuery::new(1, 30, 30).unwrap();
        assert!((kloosterman(&q) - mobius(30) as f64).abs() < 1e-12);
    }

    #[test]
    fn modulus_cap() {
        assert!(matches!(
            KloostermanQuery::with_cap(1, 1, 101, 100),
            Err(Error::ModulusTooLarge { .. })
        ));
    }

    proptest! {
        #[test]
        fn inverse_matches_brute_force(x in -500i64..500, c in 1u64..200) {
            match (mod_inverse(x, c), brute_inverse(x, c)) {
                (Ok(y), Some(b)) => prop_assert_eq!(y, b),
                (Err(_), None) => {}
                (a, b) => prop_assert!(false, "{:?} vs {:?}", a, b),
            }
        }

        #[test]
        fn weil_bound_holds(m in 1u64..1000, n in 1u64..1000, c in 1u64..2000) {
            let q = KloostermanQuery::new(m, n, c).unwrap();
            prop_assert!(kloosterman(&q).abs() <= weil_bound(m, n, c) * (1.0 + 1e-12));
        }

        #[test]
        fn symmetric_and_real(m in 1u64..500, n in 1u64..500, c in 1u64..600) {
            let a = kloosterman(&KloostermanQuery::new(m, n, c).unwrap());
            let b = kloosterman(&KloostermanQuery::new(n, m, c).unwrap());
            prop_assert_eq!(a, b);
            let z = kloosterman_complex(&KloostermanQuery::new(m, n, c).unwrap());
            prop_assert!(z.im.abs() < 1e-9 * c as f64);
            prop_assert!((z.re - a).abs() < 1e-9 * c as f64);
        }

        #[test]
        fn sigma_is_multiplicative(a in 1u64..300, b in 1u64..300, r in -20.0f64..20.0) {
            prop_assume!(gcd(a, b) == 1);
            let s = Complex64::new(0.0, 2.0 * r);
            let lhs = divisor_sigma(s, a * b);
            let rhs = divisor_sigma(s, a) * divisor_sigma(s, b);
            prop_assert!((lhs - rhs).norm() <= 1e-12 * rhs.norm().max(1.0));
            prop_assert!(lhs.norm() <= divisor_count(a * b) as f64 * (1.0 + 1e-12));
        }

        #[test]
        fn factorization_multiplies_back(n in 1u64..10_000_000) {
            let f = factorize(n);
            prop_assert_eq!(f.iter().map(|&(p, e)| p.pow(e)).product::<u64>(), n);
        }
    }
}
