//! Closed-form numerics for the Harris law `H1(m, k, 1/k)` and the
//! negative binomial and shifted geometric laws it reduces to.
//!
//! The Harris law lives on `x = 1 + n k`, `n = 0, 1, 2, ...`, with
//!
//! ```text
//! P(X = 1 + nk) = C(1/k + n - 1, n) (1/m)^{1/k} (1 - 1/m)^n
//! E[s^X]        = s / (m - (m - 1) s^k)^{1/k}
//! ```
//!
//! so the count index `n` is negative binomial `NB(1/k, 1/m)`.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::error::{domain, HarrisError, Result};

/// Below this index the generalized binomial coefficient is evaluated as a
/// direct product instead of through log-gamma differences.
const SMALL_N: u64 = 20;

/// Default cap on the number of rows a [`PmfTable`] may materialize.
pub const DEFAULT_TABLE_CAP: usize = 10_000_000;

/// Parameters `(m, k)` of the Harris law. The index `1/k` is derived.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HarrisParams {
    m: f64,
    k: u32,
}

impl HarrisParams {
    pub fn new(m: f64, k: u32) -> Result<Self> {
        // NaN fails this comparison too.
        if !(m > 1.0) || !m.is_finite() {
            return domain(format!("Harris scale must satisfy m > 1, got m = {m}"));
        }
        if k == 0 {
            return domain("Harris step must satisfy k >= 1, got k = 0");
        }
        Ok(Self { m, k })
    }

    #[inline]
    pub fn m(&self) -> f64 {
        self.m
    }

    #[inline]
    pub fn k(&self) -> u32 {
        self.k
    }

    /// The index `1/k`, which is also the negative binomial shape.
    #[inline]
    pub fn index(&self) -> f64 {
        1.0 / f64::from(self.k)
    }

    /// Per-step continuation probability `1 - 1/m`.
    #[inline]
    pub fn continuation(&self) -> f64 {
        1.0 - 1.0 / self.m
    }

    #[inline]
    pub fn support_point(&self, n: u64) -> SupportPoint {
        SupportPoint::new(n, self.k)
    }
}

/// A support value `x = 1 + n k` together with its count index `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct SupportPoint {
    pub n: u64,
    pub x: u64,
}

impl SupportPoint {
    pub fn new(n: u64, k: u32) -> Self {
        Self {
            n,
            x: 1 + n * u64::from(k),
        }
    }

    /// Inverse of [`SupportPoint::new`]; `None` when `x` is not `1 mod k`.
    pub fn from_value(x: u64, k: u32) -> Option<Self> {
        let k = u64::from(k);
        if x == 0 || k == 0 || !(x - 1).is_multiple_of(k) {
            return None;
        }
        Some(Self { n: (x - 1) / k, x })
    }
}

/// `ln C(r + n - 1, n) = ln Γ(r+n) - ln Γ(r) - ln n!` for real `r > 0`.
pub fn log_binom(r: f64, n: u64) -> Result<f64> {
    if !(r > 0.0) || !r.is_finite() {
        return domain(format!("log_binom requires r > 0, got r = {r}"));
    }
    if n <= SMALL_N {
        let mut acc = 0.0;
        for j in 0..n {
            let j = j as f64;
            acc += ((r + j) / (j + 1.0)).ln();
        }
        return Ok(acc);
    }
    let n = n as f64;
    Ok(ln_gamma(r + n) - ln_gamma(r) - ln_gamma(n + 1.0))
}

/// Negative binomial failure-count pmf `C(r+n-1, n) p^r (1-p)^n`.
pub fn nb_pmf(r: f64, p: f64, n: u64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("negative binomial requires 0 < p < 1, got p = {p}"));
    }
    let lb = log_binom(r, n)?;
    let ln = lb + r * p.ln() + (n as f64) * (-p).ln_1p();
    Ok(ln.exp())
}

/// Probability that a Harris variate equals `1 + n k`.
pub fn harris_pmf(params: &HarrisParams, n: u64) -> f64 {
    nb_pmf(params.index(), 1.0 / params.m, n).expect("validated Harris parameters")
}

/// Probability generating function `s / (m - (m-1) s^k)^{1/k}`.
///
/// The contract is `s ∈ [0, 1]`; values slightly above one are accepted while
/// the denominator stays positive, which the finite-difference mean check uses.
pub fn harris_pgf(params: &HarrisParams, s: f64) -> Result<f64> {
    if !(s >= 0.0) || !s.is_finite() {
        return domain(format!("pgf argument must be finite and >= 0, got s = {s}"));
    }
    let base = params.m - (params.m - 1.0) * s.powi(params.k as i32);
    if !(base > 0.0) {
        return domain(format!(
            "pgf denominator m - (m-1)s^k = {base} is not positive at s = {s}"
        ));
    }
    Ok(s / base.powf(params.index()))
}

/// `(mean, variance) = (m, k m (m - 1))`.
pub fn harris_mean_var(params: &HarrisParams) -> (f64, f64) {
    let m = params.m;
    (m, f64::from(params.k) * m * (m - 1.0))
}

/// Geometric law on `{1, 2, ...}`: `q (1-q)^{n-1}`.
pub fn decap_geometric_pmf(q: f64, n: u64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return domain(format!(
            "geometric parameter must satisfy 0 < q < 1, got q = {q}"
        ));
    }
    if n == 0 {
        return domain("decapitated geometric support starts at n = 1");
    }
    Ok(q * (1.0 - q).powf((n - 1) as f64))
}

/// Upper bound on `P(n' > n)` given `pmf(n)`.
///
/// Consecutive ratios are `(1/k + n)/(n + 1) · (1 - 1/m) <= 1 - 1/m`, so the tail
/// is dominated by a geometric series.
pub fn tail_majorant(params: &HarrisParams, pmf_n: f64) -> f64 {
    let q = params.continuation();
    pmf_n * q / (1.0 - q)
}

/// A truncated Harris pmf whose dropped tail is certified below a bound.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PmfTable {
    pub params: HarrisParams,
    pub entries: Vec<(SupportPoint, f64)>,
    /// `1 - Σ entries`, clamped at zero.
    pub tail_mass: f64,
    /// Geometric majorant on the true tail mass.
    pub tail_certificate: f64,
}

impl PmfTable {
    pub fn build(params: HarrisParams, tail_bound: f64) -> Result<Self> {
        Self::build_with_cap(params, tail_bound, DEFAULT_TABLE_CAP)
    }

    /// Extends the support until the geometric majorant of the remaining mass
    /// drops below `tail_bound`.
    pub fn build_with_cap(params: HarrisParams, tail_bound: f64, cap: usize) -> Result<Self> {
        if !(tail_bound > 0.0 && tail_bound < 1.0) {
            return domain(format!("tail bound must lie in (0, 1), got {tail_bound}"));
        }
        let mut entries = Vec::new();
        let mut cumulative = 0.0;
        let mut n = 0u64;
        loop {
            let p = harris_pmf(&params, n);
            cumulative += p;
            entries.push((params.support_point(n), p));
            let majorant = tail_majorant(&params, p);
            if majorant < tail_bound {
                return Ok(Self {
                    params,
                    entries,
                    tail_mass: (1.0 - cumulative).max(0.0),
                    tail_certificate: majorant,
                });
            }
            if entries.len() >= cap {
                return Err(HarrisError::Resource(format!(
                    "pmf table needs more than {cap} rows for tail bound {tail_bound}"
                )));
            }
            n += 1;
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.entries.iter().map(|&(_, p)| p).collect()
    }

    pub fn total(&self) -> f64 {
        self.entries.iter().map(|&(_, p)| p).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    /// Generalized binomial coefficient as an explicit rational product,
    /// numerator and denominator accumulated separately.
    fn naive_binom(r: f64, n: u64) -> f64 {
        let mut num = 1.0;
        let mut den = 1.0;
        for j in 0..n {
            num *= r + j as f64;
            den *= (j + 1) as f64;
        }
        num / den
    }

    fn grid() -> Vec<HarrisParams> {
        let mut out = Vec::new();
        for &m in &[1.1, 2.0, E, 10.0] {
            for &k in &[1u32, 2, 3, 5] {
                out.push(HarrisParams::new(m, k).unwrap());
            }
        }
        out
    }

    #[test]
    fn params_reject_invalid() {
        assert!(HarrisParams::new(1.0, 2).is_err());
        assert!(HarrisParams::new(0.5, 2).is_err());
        assert!(HarrisParams::new(f64::NAN, 2).is_err());
        assert!(HarrisParams::new(f64::INFINITY, 2).is_err());
        assert!(HarrisParams::new(2.0, 0).is_err());
        let err = HarrisParams::new(1.0, 2).unwrap_err();
        assert!(err.to_string().contains("m > 1"));
    }

    #[test]
    fn support_point_round_trip() {
        let p = SupportPoint::new(4, 3);
        assert_eq!(p.x, 13);
        assert_eq!(SupportPoint::from_value(13, 3), Some(p));
        assert_eq!(SupportPoint::from_value(12, 3), None);
        assert_eq!(SupportPoint::from_value(0, 3), None);
    }

    #[test]
    fn log_binom_examples() {
        assert_eq!(log_binom(1.0, 5).unwrap(), 0.0);
        assert!((log_binom(0.5, 1).unwrap() - 0.5f64.ln()).abs() < 1e-15);
        let naive = naive_binom(0.5, 3);
        assert!((naive - 0.3125).abs() < 1e-15);
        assert!((log_binom(0.5, 3).unwrap() - naive.ln()).abs() < 1e-14);
        assert!(log_binom(0.0, 3).is_err());
        assert!(log_binom(-1.0, 3).is_err());
    }

    #[test]
    fn log_binom_matches_product_across_branch() {
        for &r in &[1.0 / 3.0, 0.5, 1.0, 2.5] {
            for n in 0..60u64 {
                let naive = naive_binom(r, n).ln();
                let got = log_binom(r, n).unwrap();
                assert!(
                    (got - naive).abs() < 1e-12 * naive.abs().max(1.0),
                    "r={r} n={n}: {got} vs {naive}"
                );
            }
        }
    }

    #[test]
    fn pmf_examples() {
        for p in grid() {
            let want = p.m().powf(-p.index());
            assert!((harris_pmf(&p, 0) - want).abs() < 1e-15);
        }
        // (1/2)(1/2)^3: the n = 3 point of the k = 1 law is the x = 4 point of
        // the shifted geometric.
        let p = HarrisParams::new(2.0, 1).unwrap();
        let geometric = decap_geometric_pmf(0.5, 4).unwrap();
        assert!((harris_pmf(&p, 3) - 0.0625).abs() < 1e-15);
        assert!((harris_pmf(&p, 3) - geometric).abs() < 1e-15);

        let p = HarrisParams::new(4.0, 2).unwrap();
        let oracle = naive_binom(0.5, 1) * 0.25f64.powf(0.5) * 0.75;
        assert!((oracle - 0.1875).abs() < 1e-15);
        assert!((harris_pmf(&p, 1) - 0.1875).abs() < 1e-15);
    }

    #[test]
    fn pmf_against_naive_product_form() {
        for p in grid() {
            for n in 0..40u64 {
                let oracle = naive_binom(p.index(), n)
                    * (1.0 / p.m()).powf(p.index())
                    * (1.0 - 1.0 / p.m()).powi(n as i32);
                assert!((harris_pmf(&p, n) - oracle).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn pgf_examples() {
        for p in grid() {
            assert!((harris_pgf(&p, 1.0).unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(harris_pgf(&p, 0.0).unwrap(), 0.0);
        }
        let p = HarrisParams::new(2.0, 1).unwrap();
        let got = harris_pgf(&p, 0.5).unwrap();
        assert!((got - 1.0 / 3.0).abs() < 1e-15);
        let mut partial = 0.0;
        let mut n = 0u64;
        loop {
            let term = harris_pmf(&p, n) * 0.5f64.powi(1 + n as i32);
            partial += term;
            if term < 1e-16 {
                break;
            }
            n += 1;
        }
        assert!((partial - got).abs() < 1e-14);
    }

    #[test]
    fn pgf_domain() {
        let p = HarrisParams::new(2.0, 1).unwrap();
        assert!(harris_pgf(&p, -0.1).is_err());
        assert!(harris_pgf(&p, 2.0).is_err());
        assert!(harris_pgf(&p, 1.0 + 1e-5).is_ok());
    }

    #[test]
    fn pgf_equals_pmf_series() {
        for p in grid() {
            let table = PmfTable::build(p, 1e-15).unwrap();
            for &s in &[0.1f64, 0.5, 0.9] {
                let series: f64 = table
                    .entries
                    .iter()
                    .map(|&(pt, pr)| pr * s.powf(pt.x as f64))
                    .sum();
                let closed = harris_pgf(&p, s).unwrap();
                assert!((series - closed).abs() < 1e-10, "{p:?} s={s}");
            }
        }
    }

    #[test]
    fn mean_var_examples() {
        let p = HarrisParams::new(2.0, 1).unwrap();
        assert_eq!(harris_mean_var(&p), (2.0, 2.0));

        let p = HarrisParams::new(E, 2).unwrap();
        let (mean, var) = harris_mean_var(&p);
        assert!((mean - E).abs() < 1e-15);
        assert!((var - 9.341_548_540_943).abs() < 1e-9);

        let p = HarrisParams::new(1.0 + 1e-12, 3).unwrap();
        assert!(harris_mean_var(&p).1 < 1e-10);
    }

    #[test]
    fn mean_var_match_truncated_moment_sums() {
        for p in grid() {
            let table = PmfTable::build(p, 1e-15).unwrap();
            let mean: f64 = table.entries.iter().map(|&(pt, pr)| pt.x as f64 * pr).sum();
            let second: f64 = table
                .entries
                .iter()
                .map(|&(pt, pr)| (pt.x as f64).powi(2) * pr)
                .sum();
            let (m, v) = harris_mean_var(&p);
            assert!((mean - m).abs() < 1e-8 * m, "{p:?}");
            assert!(
                (second - mean * mean - v).abs() < 1e-7 * v.max(1.0),
                "{p:?}"
            );
        }
    }

    #[test]
    fn pgf_derivative_at_one_is_mean() {
        let h = 1e-5;
        for p in grid() {
            let d =
                (harris_pgf(&p, 1.0 + h).unwrap() - harris_pgf(&p, 1.0 - h).unwrap()) / (2.0 * h);
            let (mean, _) = harris_mean_var(&p);
            assert!(((d - mean) / mean).abs() < 1e-5, "{p:?}: {d} vs {mean}");
        }
    }

    #[test]
    fn nb_examples() {
        assert!((nb_pmf(1.0, 0.5, 2).unwrap() - 0.125).abs() < 1e-15);
        assert!((nb_pmf(0.7, 0.3, 0).unwrap() - 0.3f64.powf(0.7)).abs() < 1e-15);
        assert!((nb_pmf(0.5, 0.25, 1).unwrap() - 0.1875).abs() < 1e-15);
        assert!(nb_pmf(0.5, 0.0, 1).is_err());
        assert!(nb_pmf(0.5, 1.0, 1).is_err());
        assert!(nb_pmf(0.0, 0.5, 1).is_err());
    }

    #[test]
    fn geometric_examples() {
        assert_eq!(decap_geometric_pmf(0.5, 1).unwrap(), 0.5);
        assert!((decap_geometric_pmf(0.5, 4).unwrap() - 0.0625).abs() < 1e-16);
        let p = HarrisParams::new(2.0, 1).unwrap();
        assert!((decap_geometric_pmf(0.5, 4).unwrap() - harris_pmf(&p, 3)).abs() < 1e-15);
        assert!(decap_geometric_pmf(1.0 - 1e-12, 3).unwrap() < 1e-20);
        assert!(decap_geometric_pmf(0.5, 0).is_err());
        assert!(decap_geometric_pmf(1.0, 2).is_err());
    }

    #[test]
    fn identities_on_grid() {
        for p in grid() {
            for n in 0..200u64 {
                let h = harris_pmf(&p, n);
                let nb = nb_pmf(1.0 / f64::from(p.k()), 1.0 / p.m(), n).unwrap();
                assert!((h - nb).abs() <= 1e-14);
                if p.k() == 1 {
                    let g = decap_geometric_pmf(1.0 / p.m(), n + 1).unwrap();
                    assert!((h - g).abs() <= 1e-14, "{p:?} n={n}: {h} vs {g}");
                }
            }
        }
    }

    #[test]
    fn table_normalization_and_monotone() {
        for p in grid() {
            let t = PmfTable::build(p, 1e-12).unwrap();
            let total = t.total();
            assert!((total - 1.0).abs() < 1e-10, "{p:?}: {total}");
            assert!(t.tail_certificate < 1e-12);
            assert!((total + t.tail_mass - 1.0).abs() <= 1e-12);
            for w in t.entries.windows(2) {
                assert!(w[1].1 <= w[0].1);
                assert_eq!((w[1].0.x - 1) % u64::from(p.k()), 0);
            }
        }
    }

    #[test]
    fn table_cap_is_enforced() {
        let p = HarrisParams::new(1e6, 1).unwrap();
        let err = PmfTable::build_with_cap(p, 1e-12, 1000).unwrap_err();
        assert!(matches!(err, HarrisError::Resource(_)));
        assert!(PmfTable::build(p, 0.0).is_err());
    }
}
