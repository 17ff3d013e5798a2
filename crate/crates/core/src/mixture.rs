//! Gamma-mixed Poisson construction of the Harris law.
//!
//! Given an intensity `λ ~ Gamma(shape 1/k, rate a)`, the count `X(t)` is
//! Poisson with mean `λt` and `Z(t) = kX(t) + 1`. Integrating out `λ` gives
//! the Harris law with `m = (a + t)/a`.

use serde::Serialize;
use statrs::function::gamma::ln_gamma;

use crate::dist::{harris_mean_var, harris_pmf, HarrisParams};
use crate::error::{domain, Result};
use crate::quad::{integrate_half_line, QuadOptions};
use crate::rng::RngStream;
use crate::sampler::{sample_gamma, sample_poisson};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MixtureParams {
    a: f64,
    k: u32,
}

impl MixtureParams {
    pub fn new(a: f64, k: u32) -> Result<Self> {
        if !(a > 0.0) || !a.is_finite() {
            return domain(format!("gamma rate must satisfy a > 0, got {a}"));
        }
        if k == 0 {
            return domain("step must satisfy k >= 1, got k = 0");
        }
        Ok(Self { a, k })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Shape `1/k` of the mixing law.
    pub fn shape(&self) -> f64 {
        1.0 / f64::from(self.k)
    }

    /// Harris parameters of `Z(t)`: `m = (a + t)/a`.
    pub fn harris_at(&self, t: f64) -> Result<HarrisParams> {
        check_positive_time(t)?;
        HarrisParams::new((self.a + t) / self.a, self.k)
    }
}

fn check_positive_time(t: f64) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return domain(format!("query time must be finite and > 0, got t = {t}"));
    }
    Ok(())
}

/// `P(Z(t) = nk + 1)` in closed form.
pub fn mixture_pmf(params: &MixtureParams, t: f64, n: u64) -> Result<f64> {
    Ok(harris_pmf(&params.harris_at(t)?, n))
}

/// `P(Z(t) = nk + 1)` by adaptive quadrature of
/// `∫ e^{-λt}(λt)^n/n! · a^{1/k}/Γ(1/k) · e^{-aλ} λ^{1/k - 1} dλ` over `(0, ∞)`.
pub fn mixture_pmf_quadrature(params: &MixtureParams, t: f64, n: u64) -> Result<f64> {
    mixture_pmf_quadrature_with(params, t, n, &QuadOptions::default())
}

pub fn mixture_pmf_quadrature_with(
    params: &MixtureParams,
    t: f64,
    n: u64,
    opts: &QuadOptions,
) -> Result<f64> {
    check_positive_time(t)?;
    let r = params.shape();
    let a = params.a;
    let nf = n as f64;
    // Constant part of the log integrand: n ln t - ln n! + r ln a - ln Γ(r).
    let log_const = nf * t.ln() - ln_gamma(nf + 1.0) + r * a.ln() - ln_gamma(r);
    let power = nf + r - 1.0;
    let integrand = |lambda: f64| {
        if lambda <= 0.0 {
            return 0.0;
        }
        (log_const + power * lambda.ln() - lambda * (t + a)).exp()
    };
    Ok(integrate_half_line(integrand, opts)?.value)
}

/// Two-stage draw of `Z(t)`: `λ ~ Gamma(1/k, a)`, `X ~ Poisson(λt)`,
/// `Z = kX + 1`.
pub fn sample_model2(rng: &mut RngStream, params: &MixtureParams, t: f64) -> Result<u64> {
    check_positive_time(t)?;
    let lambda = sample_gamma(rng, params.shape(), params.a)?;
    let x = sample_poisson(rng, lambda * t)?;
    Ok(1 + u64::from(params.k) * x)
}

/// Draws `Z` at several times along one path: the intensity is drawn once
/// and the Poisson counts are accumulated over the increments.
pub fn sample_model2_path(
    rng: &mut RngStream,
    params: &MixtureParams,
    times: &[f64],
) -> Result<Vec<u64>> {
    let lambda = sample_gamma(rng, params.shape(), params.a)?;
    let mut out = Vec::with_capacity(times.len());
    let mut prev = 0.0;
    let mut count = 0u64;
    for &t in times {
        if !(t >= prev) || !t.is_finite() {
            return domain("path query times must be finite and nondecreasing from 0");
        }
        count += sample_poisson(rng, lambda * (t - prev))?;
        prev = t;
        out.push(1 + u64::from(params.k) * count);
    }
    Ok(out)
}

/// Draws `replicas` values of `Z(t)`; replica `r` uses stream `r`.
pub fn sample_model2_ensemble(
    params: &MixtureParams,
    t: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<u64>> {
    let one = |r: usize| {
        let mut rng = RngStream::new(seed, r as u64);
        sample_model2(&mut rng, params, t)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..replicas).into_par_iter().map(one).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..replicas).map(one).collect()
    }
}

/// `(E Z(t), Var Z(t)) = ((a+t)/a, (a+t)tk/a²)`; `(1, 0)` at `t = 0`.
pub fn mixture_moments(params: &MixtureParams, t: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0) || !t.is_finite() {
        return domain(format!("time must be finite and >= 0, got t = {t}"));
    }
    let a = params.a;
    let mean = (a + t) / a;
    let var = (a + t) * t * f64::from(params.k) / (a * a);
    Ok((mean, var))
}

/// Same moments routed through the Harris parameterization.
pub fn mixture_moments_via_harris(params: &MixtureParams, t: f64) -> Result<(f64, f64)> {
    if t == 0.0 {
        return Ok((1.0, 0.0));
    }
    Ok(harris_mean_var(&params.harris_at(t)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dist::tail_majorant;

    #[test]
    fn params_validation() {
        assert!(MixtureParams::new(0.0, 1).is_err());
        assert!(MixtureParams::new(1.0, 0).is_err());
        let p = MixtureParams::new(1.0, 2).unwrap();
        assert!(mixture_pmf(&p, 0.0, 0).is_err());
        assert!(mixture_pmf_quadrature(&p, -1.0, 0).is_err());
        let mut rng = RngStream::new(0, 0);
        assert!(sample_model2(&mut rng, &p, 0.0).is_err());
    }

    #[test]
    fn closed_form_examples() {
        let p = MixtureParams::new(2.0, 3).unwrap();
        let want = (2.0f64 / 3.0).powf(1.0 / 3.0);
        assert!((mixture_pmf(&p, 1.0, 0).unwrap() - want).abs() < 1e-15);

        let p = MixtureParams::new(1.0, 1).unwrap();
        assert!((mixture_pmf(&p, 1.0, 2).unwrap() - 0.125).abs() < 1e-15);

        let p = MixtureParams::new(2.0, 2).unwrap();
        let want = 0.5 * (2.0f64 / 3.0).sqrt() / 3.0;
        assert!((mixture_pmf(&p, 1.0, 1).unwrap() - want).abs() < 1e-15);
        assert!((want - 0.136_08).abs() < 1e-5);
    }

    #[test]
    fn quadrature_examples() {
        let p = MixtureParams::new(1.0, 1).unwrap();
        assert!((mixture_pmf_quadrature(&p, 1.0, 0).unwrap() - 0.5).abs() < 1e-10);
        assert!((mixture_pmf_quadrature(&p, 1.0, 2).unwrap() - 0.125).abs() < 1e-8);
        let p = MixtureParams::new(2.0, 2).unwrap();
        let q = mixture_pmf_quadrature(&p, 1.0, 1).unwrap();
        assert!((q - mixture_pmf(&p, 1.0, 1).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn quadrature_mass_with_certified_tail() {
        for k in 1..=3u32 {
            let p = MixtureParams::new(1.0, k).unwrap();
            let h = p.harris_at(1.0).unwrap();
            let mut total = 0.0;
            let mut n = 0u64;
            loop {
                let q = mixture_pmf_quadrature(&p, 1.0, n).unwrap();
                total += q;
                if tail_majorant(&h, harris_pmf(&h, n)) < 1e-12 {
                    break;
                }
                n += 1;
            }
            assert!((total - 1.0).abs() < 1e-8, "k={k}: {total}");
        }
    }

    #[test]
    fn sampler_support_and_mean() {
        let p = MixtureParams::new(1.0, 2).unwrap();
        let n = 1_000_000;
        let xs = sample_model2_ensemble(&p, 1.0, n, 42).unwrap();
        assert!(xs.iter().all(|&x| (x - 1) % 2 == 0));
        let mean = xs.iter().map(|&x| x as f64).sum::<f64>() / n as f64;
        let (m, v) = mixture_moments(&p, 1.0).unwrap();
        assert_eq!((m, v), (2.0, 4.0));
        assert!((mean - 2.0).abs() < 3.0 * (v / n as f64).sqrt(), "{mean}");
    }

    #[test]
    fn path_sampler_is_monotone() {
        let p = MixtureParams::new(0.5, 3).unwrap();
        let mut rng = RngStream::new(4, 0);
        for _ in 0..1000 {
            let z = sample_model2_path(&mut rng, &p, &[0.0, 0.5, 1.0, 2.0]).unwrap();
            assert_eq!(z[0], 1);
            assert!(z.windows(2).all(|w| w[1] >= w[0]));
            assert!(z.iter().all(|&x| (x - 1) % 3 == 0));
        }
        assert!(sample_model2_path(&mut rng, &p, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn moments() {
        let p = MixtureParams::new(1.0, 2).unwrap();
        assert_eq!(mixture_moments(&p, 0.0).unwrap(), (1.0, 0.0));
        for &t in &[0.3, 1.0, 4.0] {
            let (m1, v1) = mixture_moments(&p, t).unwrap();
            let (m2, v2) = mixture_moments_via_harris(&p, t).unwrap();
            assert!((m1 - m2).abs() < 1e-14 && (v1 - v2).abs() < 1e-12);
        }
        let mut prev = 1.0;
        for i in 1..50 {
            let (m, _) = mixture_moments(&p, i as f64 * 0.1).unwrap();
            assert!(m > prev);
            prev = m;
        }
    }
}
