//! Pearson chi-square goodness of fit and moment checks for comparing
//! simulated counts with an analytic law.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma_ur;

use crate::dist::{harris_mean_var, harris_pmf, HarrisParams, SupportPoint};
use crate::error::{domain, HarrisError, Result};

/// Classical minimum expected count per bin.
pub const DEFAULT_MIN_EXPECTED: f64 = 5.0;

/// Default relative tolerance of the variance check.
pub const DEFAULT_VAR_REL_TOL: f64 = 0.05;

const MAX_BIN_SCAN: u64 = 50_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofBin {
    pub label: String,
    /// First count index in the bin.
    pub lo: u64,
    /// Last count index, `None` for the open tail bin.
    pub hi: Option<u64>,
    pub observed: u64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GofResult {
    pub statistic: f64,
    pub degrees_of_freedom: u32,
    pub alpha: f64,
    pub threshold: f64,
    pub p_value: f64,
    pub passed: bool,
    pub bins: Vec<GofBin>,
}

/// Upper `alpha` quantile of the chi-square law with `df` degrees of freedom,
/// found by bisection on the regularized upper incomplete gamma function.
pub fn chi_square_quantile(df: u32, alpha: f64) -> Result<f64> {
    if df == 0 {
        return domain("chi-square degrees of freedom must be >= 1");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("significance must lie in (0, 1), got {alpha}"));
    }
    let half = f64::from(df) / 2.0;
    let sf = |x: f64| gamma_ur(half, x / 2.0);
    let mut lo = 0.0;
    let mut hi = f64::from(df).max(1.0);
    while sf(hi) > alpha {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(HarrisError::Convergence(
                "chi-square quantile bracket overflow".into(),
            ));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if sf(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Chi-square survival function `P(χ²_df > x)`.
pub fn chi_square_sf(df: u32, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    gamma_ur(f64::from(df) / 2.0, x / 2.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GofOptions {
    pub min_expected: f64,
}

impl Default for GofOptions {
    fn default() -> Self {
        Self {
            min_expected: DEFAULT_MIN_EXPECTED,
        }
    }
}

pub fn chi_square_gof<F>(
    observed: &BTreeMap<u64, u64>,
    expected_pmf: F,
    total: u64,
    alpha: f64,
) -> Result<GofResult>
where
    F: Fn(u64) -> f64,
{
    chi_square_gof_with(observed, expected_pmf, total, alpha, &GofOptions::default())
}

/// Bins the count-index support `0, 1, 2, ...` left to right, closing a bin
/// once its expected count reaches `min_expected`. Everything past the point
/// where the remaining expected count drops below `min_expected` goes into a
/// single open tail bin, which is folded into its neighbour if still too small.
pub fn chi_square_gof_with<F>(
    observed: &BTreeMap<u64, u64>,
    expected_pmf: F,
    total: u64,
    alpha: f64,
    opts: &GofOptions,
) -> Result<GofResult>
where
    F: Fn(u64) -> f64,
{
    if total == 0 {
        return domain("chi-square test needs a positive total count");
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return domain(format!("significance must lie in (0, 1), got {alpha}"));
    }
    let total_f = total as f64;
    let obs = |n: u64| observed.get(&n).copied().unwrap_or(0);

    let mut bins: Vec<GofBin> = Vec::new();
    let mut open_lo = 0u64;
    let mut open_p = 0.0;
    let mut open_o = 0u64;
    let mut cumulative = 0.0;
    let mut n = 0u64;
    loop {
        let p = expected_pmf(n);
        open_p += p;
        open_o += obs(n);
        cumulative += p;
        if total_f * open_p >= opts.min_expected {
            bins.push(GofBin {
                label: range_label(open_lo, n),
                lo: open_lo,
                hi: Some(n),
                observed: open_o,
                expected: total_f * open_p,
            });
            open_lo = n + 1;
            open_p = 0.0;
            open_o = 0;
        }
        if total_f * (1.0 - cumulative) < opts.min_expected {
            break;
        }
        n += 1;
        if n > MAX_BIN_SCAN {
            return Err(HarrisError::Resource(
                "chi-square binning did not reach the tail".into(),
            ));
        }
    }
    let beyond: u64 = observed.range(n + 1..).map(|(_, &c)| c).sum();
    let tail = GofBin {
        label: format!("{open_lo}+"),
        lo: open_lo,
        hi: None,
        observed: open_o + beyond,
        expected: total_f * (open_p + (1.0 - cumulative).max(0.0)),
    };
    if tail.expected >= opts.min_expected || bins.is_empty() {
        bins.push(tail);
    } else {
        let last = bins.last_mut().expect("nonempty");
        last.label = format!("{}+", last.lo);
        last.hi = None;
        last.observed += tail.observed;
        last.expected += tail.expected;
    }
    if bins.len() < 2 {
        return Err(HarrisError::TooFewBins(bins.len()));
    }

    let statistic: f64 = bins
        .iter()
        .map(|b| {
            let d = b.observed as f64 - b.expected;
            d * d / b.expected
        })
        .sum();
    let df = (bins.len() - 1) as u32;
    let threshold = chi_square_quantile(df, alpha)?;
    Ok(GofResult {
        statistic,
        degrees_of_freedom: df,
        alpha,
        threshold,
        p_value: chi_square_sf(df, statistic),
        passed: statistic <= threshold,
        bins,
    })
}

fn range_label(lo: u64, hi: u64) -> String {
    if lo == hi {
        lo.to_string()
    } else {
        format!("{lo}-{hi}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCheck {
    pub empirical: f64,
    pub analytic: f64,
    pub standard_error: f64,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarCheck {
    pub empirical: f64,
    pub analytic: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Returns `(mean_pass, var_pass)` with the default 5% variance tolerance.
pub fn moment_check(
    samples_mean: f64,
    samples_var: f64,
    n: u64,
    analytic_mean: f64,
    analytic_var: f64,
) -> Result<(bool, bool)> {
    let (m, v) = moment_checks(
        samples_mean,
        samples_var,
        n,
        analytic_mean,
        analytic_var,
        DEFAULT_VAR_REL_TOL,
    )?;
    Ok((m.passed, v.passed))
}

/// Mean passes within three standard errors `sqrt(analytic_var / n)`;
/// variance passes within `var_rel_tol` relative error.
pub fn moment_checks(
    samples_mean: f64,
    samples_var: f64,
    n: u64,
    analytic_mean: f64,
    analytic_var: f64,
    var_rel_tol: f64,
) -> Result<(MeanCheck, VarCheck)> {
    if n < 100 {
        return domain(format!("moment checks need at least 100 samples, got {n}"));
    }
    let se = (analytic_var / n as f64).sqrt();
    let mean = MeanCheck {
        empirical: samples_mean,
        analytic: analytic_mean,
        standard_error: se,
        passed: (samples_mean - analytic_mean).abs() <= 3.0 * se,
    };
    let var_passed = if analytic_var == 0.0 {
        samples_var == 0.0
    } else {
        ((samples_var - analytic_var) / analytic_var).abs() <= var_rel_tol
    };
    let var = VarCheck {
        empirical: samples_var,
        analytic: analytic_var,
        tolerance: var_rel_tol,
        passed: var_passed,
    };
    Ok((mean, var))
}

/// Sample mean and unbiased variance of a frequency table.
pub fn frequency_moments(counts: &BTreeMap<u64, u64>) -> (f64, f64, u64) {
    let total: u64 = counts.values().sum();
    if total == 0 {
        return (f64::NAN, f64::NAN, 0);
    }
    let n = total as f64;
    let mean = counts
        .iter()
        .map(|(&x, &c)| x as f64 * c as f64)
        .sum::<f64>()
        / n;
    let ss = counts
        .iter()
        .map(|(&x, &c)| c as f64 * (x as f64 - mean).powi(2))
        .sum::<f64>();
    let var = if total > 1 { ss / (n - 1.0) } else { 0.0 };
    (mean, var, total)
}

/// Re-keys a table of Harris support values `x = 1 + nk` by count index `n`.
pub fn counts_by_index(counts_by_value: &BTreeMap<u64, u64>, k: u32) -> Result<BTreeMap<u64, u64>> {
    let mut out = BTreeMap::new();
    for (&x, &c) in counts_by_value {
        let pt = SupportPoint::from_value(x, k)
            .ok_or_else(|| HarrisError::Domain(format!("value {x} is off the support 1 + {k}n")))?;
        *out.entry(pt.n).or_insert(0) += c;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub model: String,
    pub lambda: Option<f64>,
    pub a: Option<f64>,
    pub k: u32,
    pub m: f64,
    pub t: f64,
    pub replicas: u64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub scenario: Scenario,
    pub gof: GofResult,
    pub mean_check: MeanCheck,
    pub var_check: VarCheck,
    pub overall: bool,
}

impl ValidationReport {
    pub fn new(
        scenario: Scenario,
        gof: GofResult,
        mean_check: MeanCheck,
        var_check: VarCheck,
    ) -> Self {
        let overall = gof.passed && mean_check.passed && var_check.passed;
        Self {
            scenario,
            gof,
            mean_check,
            var_check,
            overall,
        }
    }
}

/// Full check of a table of observed support values against a Harris law.
pub fn validate_against_harris(
    scenario: Scenario,
    counts_by_value: &BTreeMap<u64, u64>,
    harris: &HarrisParams,
    alpha: f64,
    var_rel_tol: f64,
) -> Result<ValidationReport> {
    let by_index = counts_by_index(counts_by_value, harris.k())?;
    let (mean, var, total) = frequency_moments(counts_by_value);
    let gof = chi_square_gof(&by_index, |n| harris_pmf(harris, n), total, alpha)?;
    let (am, av) = harris_mean_var(harris);
    let (mc, vc) = moment_checks(mean, var, total, am, av, var_rel_tol)?;
    Ok(ValidationReport::new(scenario, gof, mc, vc))
}
