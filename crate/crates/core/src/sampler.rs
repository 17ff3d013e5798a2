//! Random variate generation on top of [`RngStream`].
//!
//! Gamma: Marsaglia–Tsang squeeze for `shape >= 1`; for `shape < 1` a draw
//! at `shape + 1` is scaled by `U^{1/shape}`. Poisson: sequential inversion
//! below mean 10, Hörmann's PTRS transformed rejection above. Negative
//! binomial and Harris variates go through the gamma–Poisson mixture.

use statrs::function::gamma::ln_gamma;

use crate::dist::HarrisParams;
use crate::error::{domain, Result};
use crate::rng::RngStream;

const INVERSION_LIMIT: f64 = 10.0;

/// `-ln(U) / rate`; strictly positive.
pub fn sample_exponential(rng: &mut RngStream, rate: f64) -> Result<f64> {
    if !(rate > 0.0) || !rate.is_finite() {
        return domain(format!("exponential rate must be > 0, got {rate}"));
    }
    Ok(-rng.uniform().ln() / rate)
}

/// Standard normal via Box–Muller, one draw per call.
pub fn sample_standard_normal(rng: &mut RngStream) -> f64 {
    let u1 = rng.uniform();
    let u2 = rng.uniform();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Gamma with the given shape and rate (mean `shape / rate`).
pub fn sample_gamma(rng: &mut RngStream, shape: f64, rate: f64) -> Result<f64> {
    if !(shape > 0.0) || !shape.is_finite() {
        return domain(format!("gamma shape must be > 0, got {shape}"));
    }
    if !(rate > 0.0) || !rate.is_finite() {
        return domain(format!("gamma rate must be > 0, got {rate}"));
    }
    Ok(standard_gamma(rng, shape) / rate)
}

fn standard_gamma(rng: &mut RngStream, shape: f64) -> f64 {
    if shape < 1.0 {
        let g = marsaglia_tsang(rng, shape + 1.0);
        return g * rng.uniform().powf(1.0 / shape);
    }
    marsaglia_tsang(rng, shape)
}

fn marsaglia_tsang(rng: &mut RngStream, shape: f64) -> f64 {
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let (x, v) = loop {
            let x = sample_standard_normal(rng);
            let v = 1.0 + c * x;
            if v > 0.0 {
                break (x, v * v * v);
            }
        };
        let u = rng.uniform();
        let x2 = x * x;
        if u < 1.0 - 0.0331 * x2 * x2 {
            return d * v;
        }
        if u.ln() < 0.5 * x2 + d * (1.0 - v + v.ln()) {
            return d * v;
        }
    }
}

/// Poisson with the given mean; mean zero always yields zero.
pub fn sample_poisson(rng: &mut RngStream, mean: f64) -> Result<u64> {
    if !(mean >= 0.0) || !mean.is_finite() {
        return domain(format!("Poisson mean must be finite and >= 0, got {mean}"));
    }
    if mean == 0.0 {
        return Ok(0);
    }
    if mean < INVERSION_LIMIT {
        Ok(poisson_inversion(rng, mean))
    } else {
        Ok(poisson_ptrs(rng, mean))
    }
}

fn poisson_inversion(rng: &mut RngStream, mean: f64) -> u64 {
    let u = rng.uniform();
    let mut k = 0u64;
    let mut p = (-mean).exp();
    let mut cdf = p;
    while u > cdf {
        k += 1;
        p *= mean / k as f64;
        let next = cdf + p;
        // Guards the float plateau of the cdf far in the tail.
        if next == cdf {
            break;
        }
        cdf = next;
    }
    k
}

fn poisson_ptrs(rng: &mut RngStream, mean: f64) -> u64 {
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u = rng.uniform() - 0.5;
        let v = rng.uniform();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// Negative binomial failure count `NB(r, p)` as `Poisson(G)` with
/// `G ~ Gamma(shape r, rate p/(1-p))`.
pub fn sample_nb(rng: &mut RngStream, r: f64, p: f64) -> Result<u64> {
    if !(r > 0.0) || !r.is_finite() {
        return domain(format!("negative binomial shape must be > 0, got {r}"));
    }
    if !(p > 0.0 && p < 1.0) {
        return domain(format!("negative binomial requires 0 < p < 1, got {p}"));
    }
    let g = sample_gamma(rng, r, p / (1.0 - p))?;
    sample_poisson(rng, g)
}

/// Harris variate `1 + k · NB(1/k, 1/m)`.
pub fn sample_harris(rng: &mut RngStream, params: &HarrisParams) -> Result<u64> {
    let n = sample_nb(rng, params.index(), 1.0 / params.m())?;
    Ok(1 + u64::from(params.k()) * n)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn moments(xs: impl Iterator<Item = f64>) -> (f64, f64, usize) {
        let mut n = 0usize;
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for x in xs {
            n += 1;
            let d = x - mean;
            mean += d / n as f64;
            m2 += d * (x - mean);
        }
        (mean, m2 / (n - 1) as f64, n)
    }

    #[test]
    fn exponential_mean_and_scaling() {
        let mut rng = RngStream::new(42, 0);
        let (mean, _, _) =
            moments((0..1_000_000).map(|_| sample_exponential(&mut rng, 1.0).unwrap()));
        assert!((mean - 1.0).abs() < 0.01, "{mean}");

        let mut a = RngStream::new(9, 3);
        let mut b = RngStream::new(9, 3);
        for _ in 0..1000 {
            let x1 = sample_exponential(&mut a, 1.0).unwrap();
            let x2 = sample_exponential(&mut b, 2.0).unwrap();
            assert!(x1 > 0.0);
            assert_eq!(x2, 0.5 * x1);
        }
        assert!(sample_exponential(&mut a, 0.0).is_err());
        assert!(sample_exponential(&mut a, -1.0).is_err());
    }

    #[test]
    fn gamma_shape_one_is_exponential_in_law() {
        let mut rng = RngStream::new(5, 0);
        let n = 400_000.0f64;
        let (mean, var, _) =
            moments((0..400_000).map(|_| sample_gamma(&mut rng, 1.0, 3.0).unwrap()));
        let sigma2 = 1.0 / 9.0;
        assert!(
            (mean - 1.0 / 3.0).abs() < 3.0 * (sigma2 / n).sqrt(),
            "{mean}"
        );
        // Exponential fourth central moment is 9σ⁴.
        assert!(
            (var - sigma2).abs() < 3.0 * (8.0 * sigma2 * sigma2 / n).sqrt(),
            "{var}"
        );
    }

    #[test]
    fn gamma_small_shape_moments() {
        let n = 1_000_000usize;
        let mut rng = RngStream::new(42, 1);
        let (mean, _, _) = moments((0..n).map(|_| sample_gamma(&mut rng, 0.5, 1.0).unwrap()));
        assert!((mean - 0.5).abs() < 0.01, "{mean}");

        let mut rng = RngStream::new(42, 2);
        let xs: Vec<f64> = (0..n)
            .map(|_| sample_gamma(&mut rng, 0.5, 2.0).unwrap())
            .collect();
        let (mean, var, _) = moments(xs.iter().copied());
        let se_mean = (0.125 / n as f64).sqrt();
        assert!((mean - 0.25).abs() < 3.0 * se_mean, "{mean}");
        // Var of the sample variance: (μ4 - σ^4)/n with μ4 = 3σ^4(1 + 2/shape).
        let sigma4 = 0.125f64 * 0.125;
        let se_var = ((3.0 * sigma4 * (1.0 + 2.0 / 0.5) - sigma4) / n as f64).sqrt();
        assert!((var - 0.125).abs() < 3.0 * se_var, "{var}");
        assert!(xs.iter().all(|&x| x > 0.0));
        assert!(sample_gamma(&mut rng, 0.0, 1.0).is_err());
        assert!(sample_gamma(&mut rng, 1.0, 0.0).is_err());
    }

    #[test]
    fn poisson_examples() {
        let mut rng = RngStream::new(42, 0);
        for _ in 0..100 {
            assert_eq!(sample_poisson(&mut rng, 0.0).unwrap(), 0);
        }
        let n = 1_000_000;
        let xs: Vec<u64> = (0..n)
            .map(|_| sample_poisson(&mut rng, 4.0).unwrap())
            .collect();
        let (mean, _, _) = moments(xs.iter().map(|&x| x as f64));
        assert!((mean - 4.0).abs() < 0.012, "{mean}");
        let zeros = xs.iter().filter(|&&x| x == 0).count() as f64 / n as f64;
        let p0 = (-4.0f64).exp();
        assert!((zeros - p0).abs() < 4.0 * (p0 * (1.0 - p0) / n as f64).sqrt());
        assert!(sample_poisson(&mut rng, -1.0).is_err());
        assert!(sample_poisson(&mut rng, f64::NAN).is_err());
    }

    #[test]
    fn poisson_rejection_regime_moments() {
        let mut rng = RngStream::new(11, 0);
        for &lam in &[10.0, 37.5, 1e4] {
            let n = 200_000;
            let (mean, var, _) =
                moments((0..n).map(|_| sample_poisson(&mut rng, lam).unwrap() as f64));
            let se = (lam / n as f64).sqrt();
            assert!((mean - lam).abs() < 4.0 * se, "lam={lam} mean={mean}");
            assert!((var / lam - 1.0).abs() < 0.02, "lam={lam} var={var}");
        }
    }

    #[test]
    fn nb_examples() {
        let mut rng = RngStream::new(42, 0);
        let n = 1_000_000;
        let (mean, _, _) = moments((0..n).map(|_| sample_nb(&mut rng, 1.0, 0.5).unwrap() as f64));
        assert!((mean - 1.0).abs() < 0.005, "{mean}");

        let zeros = (0..1000)
            .filter(|_| sample_nb(&mut rng, 2.0, 1.0 - 1e-9).unwrap() == 0)
            .count();
        assert_eq!(zeros, 1000);
        assert!(sample_nb(&mut rng, 1.0, 1.0).is_err());
        assert!(sample_nb(&mut rng, 0.0, 0.5).is_err());
    }

    #[test]
    fn harris_support_and_mean() {
        let mut rng = RngStream::new(42, 0);
        for k in 1..=5u32 {
            let p = HarrisParams::new(3.0, k).unwrap();
            for _ in 0..10_000 {
                let x = sample_harris(&mut rng, &p).unwrap();
                assert_eq!((x - 1) % u64::from(k), 0);
            }
        }
        let p = HarrisParams::new(2.0, 1).unwrap();
        let n = 1_000_000;
        let (mean, _, _) = moments((0..n).map(|_| sample_harris(&mut rng, &p).unwrap() as f64));
        assert!((mean - 2.0).abs() < 3.0 * 2f64.sqrt() / 1e3, "{mean}");
    }

    #[test]
    fn determinism() {
        let run = || {
            let mut rng = RngStream::new(1234, 5);
            let p = HarrisParams::new(std::f64::consts::E, 2).unwrap();
            (0..1000)
                .map(|_| sample_harris(&mut rng, &p).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }
}
