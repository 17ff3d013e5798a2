//! Globally adaptive Gauss–Kronrod (10/21 point) quadrature.
//!
//! Intervals are kept in a max-heap keyed on their error estimate and the
//! worst one is bisected until the summed estimate meets the tolerance.
//! Nodes never touch interval endpoints, so integrable endpoint
//! singularities are evaluated only in the interior.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{domain, HarrisError, Result};

#[allow(clippy::excessive_precision)]
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689_003,
    0.973_906_528_517_171_720_077_964_012_084_452,
    0.930_157_491_355_708_226_001_207_180_059_508,
    0.865_063_366_688_984_510_732_096_688_423_493,
    0.780_817_726_586_416_897_063_717_578_345_042,
    0.679_409_568_299_024_406_234_327_365_114_874,
    0.562_757_134_668_604_683_339_000_099_272_694,
    0.433_395_394_129_247_190_799_265_943_165_784,
    0.294_392_862_701_460_198_131_126_603_103_866,
    0.148_874_338_981_631_210_884_826_001_129_720,
    0.0,
];

#[allow(clippy::excessive_precision)]
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893_332,
    0.149_451_349_150_580_593_145_776_339_657_697,
    0.219_086_362_515_982_043_995_534_934_228_163,
    0.269_266_719_309_996_355_091_226_921_569_469,
    0.295_524_224_714_752_870_173_892_994_651_338,
];

#[allow(clippy::excessive_precision)]
const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062_192,
    0.032_558_162_307_964_727_478_818_972_459_390,
    0.054_755_896_574_351_996_031_381_300_244_580,
    0.075_039_674_810_919_952_767_043_140_916_190,
    0.093_125_454_583_697_605_535_065_465_083_366,
    0.109_387_158_802_297_641_899_210_590_325_805,
    0.123_491_976_262_065_851_077_958_109_831_074,
    0.134_709_217_311_473_325_928_054_001_771_707,
    0.142_775_938_577_060_080_797_094_273_138_717,
    0.147_739_104_901_338_491_374_841_515_972_068,
    0.149_445_554_002_916_905_664_936_468_389_821,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 0.0,
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    pub intervals: usize,
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}

impl Eq for Segment {}

impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

/// One 21-point Kronrod evaluation with the QUADPACK error heuristic.
fn gk21<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(center);
    let mut kronrod = WGK[10] * fc;
    let mut gauss = 0.0;
    let mut abs_sum = kronrod.abs();
    let mut fv1 = [0.0; 10];
    let mut fv2 = [0.0; 10];
    for j in 0..10 {
        let dx = half * XGK[j];
        let f1 = f(center - dx);
        let f2 = f(center + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        abs_sum += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = 0.5 * kronrod;
    let mut asc = WGK[10] * (fc - mean).abs();
    for j in 0..10 {
        asc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * half;
    let asc = asc * half.abs();
    let abs_sum = abs_sum * half.abs();
    let mut err = ((kronrod - gauss) * half).abs();
    if asc != 0.0 && err != 0.0 {
        err = asc * (200.0 * err / asc).powf(1.5).min(1.0);
    }
    if abs_sum > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * abs_sum);
    }
    (value, err)
}

/// Integrates `f` over the finite interval `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(
    f: F,
    a: f64,
    b: f64,
    opts: &QuadOptions,
) -> Result<QuadResult> {
    if !(a.is_finite() && b.is_finite() && a < b) {
        return domain(format!("quadrature interval [{a}, {b}] is invalid"));
    }
    let (value, error) = gk21(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;
    loop {
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if !total.is_finite() || !total_err.is_finite() {
            return Err(HarrisError::Convergence(
                "non-finite integrand value during quadrature".into(),
            ));
        }
        if total_err <= target {
            return Ok(QuadResult {
                value: total,
                abs_error: total_err,
                intervals: heap.len(),
            });
        }
        if heap.len() >= opts.max_intervals {
            return Err(HarrisError::Convergence(format!(
                "quadrature error {total_err:e} above {target:e} after {} intervals",
                heap.len()
            )));
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if !(mid > worst.a && mid < worst.b) {
            return Err(HarrisError::Convergence(format!(
                "quadrature interval [{}, {}] cannot be bisected further",
                worst.a, worst.b
            )));
        }
        let (v1, e1) = gk21(&f, worst.a, mid);
        let (v2, e2) = gk21(&f, mid, worst.b);
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment {
            a: worst.a,
            b: mid,
            value: v1,
            error: e1,
        });
        heap.push(Segment {
            a: mid,
            b: worst.b,
            value: v2,
            error: e2,
        });
        // Recompute the running sums periodically to shed cancellation drift.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
}

/// Integrates `f` over `(0, ∞)` through `x = u / (1 - u)`, `u ∈ (0, 1)`.
pub fn integrate_half_line<F: Fn(f64) -> f64>(f: F, opts: &QuadOptions) -> Result<QuadResult> {
    let mapped = |u: f64| {
        let one_minus = 1.0 - u;
        let x = u / one_minus;
        let v = f(x) / (one_minus * one_minus);
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    integrate(mapped, 0.0, 1.0, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| 3.0 * x * x, 0.0, 2.0, &QuadOptions::default()).unwrap();
        assert!((r.value - 8.0).abs() < 1e-13);
    }

    #[test]
    fn oscillatory() {
        let r = integrate(
            |x| (10.0 * x).sin(),
            0.0,
            std::f64::consts::PI,
            &QuadOptions::default(),
        )
        .unwrap();
        assert!(r.value.abs() < 1e-10);
    }

    #[test]
    fn half_line_exponential() {
        let r = integrate_half_line(|x| (-2.0 * x).exp(), &QuadOptions::default()).unwrap();
        assert!((r.value - 0.5).abs() < 1e-12);
    }

    #[test]
    fn endpoint_singularity() {
        // ∫_0^∞ x^{-2/3} e^{-x} dx = Γ(1/3).
        let r = integrate_half_line(|x| x.powf(-2.0 / 3.0) * (-x).exp(), &QuadOptions::default())
            .unwrap();
        let want = statrs::function::gamma::gamma(1.0 / 3.0);
        assert!((r.value - want).abs() < 1e-9, "{} vs {want}", r.value);
    }

    #[test]
    fn reports_failure() {
        let opts = QuadOptions {
            max_intervals: 3,
            ..QuadOptions::default()
        };
        let err = integrate(|x| 1.0 / x.sqrt(), 0.0, 1.0, &opts).unwrap_err();
        assert!(matches!(err, HarrisError::Convergence(_)));
        assert!(integrate(|x| x, 1.0, 0.0, &QuadOptions::default()).is_err());
    }
}
