//! Subcommand implementations. Each builds a [`Document`]; rendering and exit
//! status are left to the caller.

use std::collections::BTreeMap;

use anyhow::{anyhow, bail, ensure, Result};
use rayon::prelude::*;
use serde_json::Value;

use harris_core::birth::{
    empirical_distribution, simulate_ensemble, solve_forward_odes, Trajectory,
};
use harris_core::dist::{
    decap_geometric_pmf, harris_mean_var, harris_pgf, harris_pmf, tail_majorant, PmfTable,
};
use harris_core::mixture::{mixture_pmf, mixture_pmf_quadrature, sample_model2_ensemble};
use harris_core::sampler::sample_harris;
use harris_core::validate::{validate_against_harris, Scenario};
use harris_core::{HarrisParams, MixtureParams, ProcessParams, RngStream, ValidationReport};

use crate::output::{Document, Table};
use crate::RunConfig;

/// Step used for the central difference of the pgf at `s = 1`.
pub const PGF_FD_STEP: f64 = 1e-5;
pub const PGF_SLOPE_REL_TOL: f64 = 1e-5;
pub const PGF_UNIT_TOL: f64 = 1e-12;

/// Which parameterization produced the Harris law.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mode {
    Direct,
    Birth { process: ProcessParams, t: f64 },
    Mixture { mixture: MixtureParams, t: f64 },
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Direct => "harris",
            Mode::Birth { .. } => "birth",
            Mode::Mixture { .. } => "mixture",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Resolved {
    pub harris: HarrisParams,
    pub mode: Mode,
}

fn require_k(c: &RunConfig) -> Result<u32> {
    c.k.ok_or_else(|| anyhow!("--k is required"))
}

fn require_t(c: &RunConfig, flag: &str) -> Result<f64> {
    c.t.ok_or_else(|| anyhow!("{flag} needs --t"))
}

/// Resolves exactly one of `--m`, `--lambda --t` or `--a --t`.
pub fn resolve(c: &RunConfig) -> Result<Resolved> {
    let modes = [c.m.is_some(), c.lambda.is_some(), c.a.is_some()];
    let count = modes.iter().filter(|&&b| b).count();
    ensure!(
        count == 1,
        "give exactly one parameter mode: --m, or --lambda with --t, or --a with --t"
    );
    let k = require_k(c)?;
    if let Some(m) = c.m {
        ensure!(c.t.is_none(), "--t has no meaning with --m");
        return Ok(Resolved {
            harris: HarrisParams::new(m, k)?,
            mode: Mode::Direct,
        });
    }
    if let Some(lambda) = c.lambda {
        let t = require_t(c, "--lambda")?;
        let process = ProcessParams::new(lambda, k)?;
        return Ok(Resolved {
            harris: process.harris_at(t)?,
            mode: Mode::Birth { process, t },
        });
    }
    let a = c.a.expect("one mode is set");
    let t = require_t(c, "--a")?;
    let mixture = MixtureParams::new(a, k)?;
    Ok(Resolved {
        harris: mixture.harris_at(t)?,
        mode: Mode::Mixture { mixture, t },
    })
}

fn parameter_meta(doc: &mut Document, r: &Resolved) {
    doc.meta("mode", r.mode.name());
    match r.mode {
        Mode::Direct => {}
        Mode::Birth { process, t } => {
            doc.meta("lambda", process.lambda()).meta("t", t);
        }
        Mode::Mixture { mixture, t } => {
            doc.meta("a", mixture.a()).meta("t", t);
        }
    }
    doc.meta("m", r.harris.m())
        .meta("k", u64::from(r.harris.k()));
}

fn check_tail(tail: f64) -> Result<()> {
    ensure!(
        tail > 0.0 && tail < 1.0,
        "--tail must lie in (0, 1), got {tail}"
    );
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    ensure!(
        alpha > 0.0 && alpha < 1.0,
        "--alpha must lie in (0, 1), got {alpha}"
    );
    Ok(())
}

/// Rows `(n, x, probability, cumulative)` until the cumulative mass reaches
/// `1 - tail` or the certified remainder drops below `tail`.
pub fn pmf(c: &RunConfig) -> Result<Document> {
    let r = resolve(c)?;
    check_tail(c.tail)?;
    let h = r.harris;
    let mut doc = Document::new("pmf");
    parameter_meta(&mut doc, &r);
    doc.meta("tail", c.tail);

    let mut table = Table::new("pmf", &["n", "x", "probability", "cumulative"]);
    let mut cumulative = 0.0;
    let mut n = 0u64;
    let certificate = loop {
        let p = harris_pmf(&h, n);
        cumulative += p;
        table.push(vec![
            n.into(),
            h.support_point(n).x.into(),
            p.into(),
            cumulative.into(),
        ]);
        let majorant = tail_majorant(&h, p);
        if cumulative >= 1.0 - c.tail || majorant < c.tail {
            break majorant;
        }
        ensure!(
            table.rows.len() < harris_core::dist::DEFAULT_TABLE_CAP,
            "pmf table exceeds {} rows; raise --tail",
            harris_core::dist::DEFAULT_TABLE_CAP
        );
        n += 1;
    };
    let (mean, var) = harris_mean_var(&h);
    doc.meta("rows", table.rows.len() as u64)
        .meta("tail_certificate", certificate)
        .meta("mean", mean)
        .meta("variance", var);
    doc.tables.push(table);
    Ok(doc)
}

/// Central difference of the pgf at `s = 1`.
pub fn pgf_slope_at_one(h: &HarrisParams, step: f64) -> Result<f64> {
    let up = harris_pgf(h, 1.0 + step)?;
    let down = harris_pgf(h, 1.0 - step)?;
    Ok((up - down) / (2.0 * step))
}

/// Closed-form pgf against the truncated series `Σ p(n) s^x`, plus the unit
/// value and slope checks at `s = 1`.
pub fn pgf(c: &RunConfig) -> Result<Document> {
    let r = resolve(c)?;
    check_tail(c.tail)?;
    let h = r.harris;
    let points: Vec<f64> = if c.s.is_empty() {
        (0..=20).map(|i| f64::from(i) / 20.0).collect()
    } else {
        c.s.clone()
    };
    for &s in &points {
        ensure!((0.0..=1.0).contains(&s), "--s must lie in [0, 1], got {s}");
    }
    let table = PmfTable::build(h, c.tail)?;

    let mut doc = Document::new("pgf");
    parameter_meta(&mut doc, &r);
    doc.meta("tail", c.tail).meta("tol", c.tol);

    let mut rows = Table::new("pgf", &["s", "closed_form", "series", "abs_diff"]);
    let mut max_diff = 0.0f64;
    for &s in &points {
        let closed = harris_pgf(&h, s)?;
        let series: f64 = table
            .entries
            .iter()
            .map(|&(sp, p)| p * s.powf(sp.x as f64))
            .sum();
        let diff = (closed - series).abs();
        max_diff = max_diff.max(diff);
        rows.push(vec![s.into(), closed.into(), series.into(), diff.into()]);
    }

    let at_one = harris_pgf(&h, 1.0)?;
    let slope = pgf_slope_at_one(&h, PGF_FD_STEP)?;
    let mean = h.m();
    let slope_rel = ((slope - mean) / mean).abs();
    let mut checks = Table::new(
        "checks",
        &["check", "value", "reference", "bound", "passed"],
    );
    let series_ok = max_diff <= c.tol;
    let unit_ok = (at_one - 1.0).abs() <= PGF_UNIT_TOL;
    let slope_ok = slope_rel <= PGF_SLOPE_REL_TOL;
    checks.push(vec![
        "series_max_abs_diff".into(),
        max_diff.into(),
        0.0.into(),
        c.tol.into(),
        series_ok.into(),
    ]);
    checks.push(vec![
        "pgf_at_1".into(),
        at_one.into(),
        1.0.into(),
        PGF_UNIT_TOL.into(),
        unit_ok.into(),
    ]);
    checks.push(vec![
        "slope_at_1".into(),
        slope.into(),
        mean.into(),
        PGF_SLOPE_REL_TOL.into(),
        slope_ok.into(),
    ]);
    doc.passed = series_ok && unit_ok && slope_ok;
    doc.tables.push(rows);
    doc.tables.push(checks);
    Ok(doc)
}

fn sample_harris_ensemble(h: &HarrisParams, replicas: usize, seed: u64) -> Result<Vec<u64>> {
    let draws: harris_core::Result<Vec<u64>> = (0..replicas)
        .into_par_iter()
        .map(|r| sample_harris(&mut RngStream::new(seed, r as u64), h))
        .collect();
    Ok(draws?)
}

fn tally(values: &[u64]) -> BTreeMap<u64, u64> {
    let mut counts = BTreeMap::new();
    for &v in values {
        *counts.entry(v).or_insert(0) += 1;
    }
    counts
}

/// Result of a Monte Carlo run, before rendering.
#[derive(Debug, Clone)]
pub struct SimulationOutcome {
    pub resolved: Resolved,
    pub counts: BTreeMap<u64, u64>,
    pub report: ValidationReport,
    /// Coupling violations; birth model only.
    pub coupling_violations: Option<u64>,
    pub trajectories: Vec<Trajectory>,
}

impl SimulationOutcome {
    pub fn passed(&self) -> bool {
        self.report.overall && self.coupling_violations.unwrap_or(0) == 0
    }
}

/// Runs the model selected by the parameter mode and validates the sample.
/// With `--m` the Harris sampler is used directly.
pub fn run_simulation(c: &RunConfig) -> Result<SimulationOutcome> {
    let r = resolve(c)?;
    check_alpha(c.alpha)?;
    ensure!(c.replicas >= 1, "--replicas must be at least 1");
    let replicas = usize::try_from(c.replicas).map_err(|_| anyhow!("--replicas is too large"))?;
    ensure!(c.var_tol > 0.0, "--var-tol must be positive");

    let (counts, violations, trajectories, lambda, a, t) = match r.mode {
        Mode::Direct => {
            ensure!(
                c.horizon.is_none(),
                "--horizon applies to the birth model only"
            );
            let draws = sample_harris_ensemble(&r.harris, replicas, c.seed)?;
            (tally(&draws), None, Vec::new(), None, None, 0.0)
        }
        Mode::Birth { process, t } => {
            let horizon = c.horizon.unwrap_or(t);
            ensure!(horizon >= t, "--horizon {horizon} is before --t {t}");
            let paths = simulate_ensemble(&process, horizon, replicas, c.seed)?;
            let counts = empirical_distribution(&paths, t)?;
            let violations: u64 = paths.iter().map(|p| p.coupling_violations() as u64).sum();
            (
                counts,
                Some(violations),
                paths,
                Some(process.lambda()),
                None,
                t,
            )
        }
        Mode::Mixture { mixture, t } => {
            ensure!(
                c.horizon.is_none(),
                "--horizon applies to the birth model only"
            );
            let draws = sample_model2_ensemble(&mixture, t, replicas, c.seed)?;
            (tally(&draws), None, Vec::new(), None, Some(mixture.a()), t)
        }
    };
    let scenario = Scenario {
        model: r.mode.name().to_owned(),
        lambda,
        a,
        k: r.harris.k(),
        m: r.harris.m(),
        t,
        replicas: c.replicas,
        seed: c.seed,
    };
    let report = validate_against_harris(scenario, &counts, &r.harris, c.alpha, c.var_tol)?;
    Ok(SimulationOutcome {
        resolved: r,
        counts,
        report,
        coupling_violations: violations,
        trajectories,
    })
}

/// Empirical distribution, GoF and moment checks for one simulated sample.
pub fn simulate(c: &RunConfig) -> Result<Document> {
    let out = run_simulation(c)?;
    let h = out.resolved.harris;
    let mut doc = Document::new("simulate");
    parameter_meta(&mut doc, &out.resolved);
    if let Some(horizon) = c.horizon {
        doc.meta("horizon", horizon);
    }
    doc.meta("replicas", c.replicas)
        .meta("seed", c.seed)
        .meta("alpha", c.alpha)
        .meta("var_tol", c.var_tol)
        .meta("rng", harris_core::rng::ALGORITHM);

    let total = c.replicas as f64;
    let k = u64::from(h.k());
    let max_n = out.counts.keys().next_back().map_or(0, |&x| (x - 1) / k);
    let mut dist = Table::new(
        "distribution",
        &[
            "n",
            "x",
            "observed",
            "expected_probability",
            "expected_count",
        ],
    );
    for n in 0..=max_n {
        let x = h.support_point(n).x;
        let observed = out.counts.get(&x).copied().unwrap_or(0);
        let p = harris_pmf(&h, n);
        dist.push(vec![
            n.into(),
            x.into(),
            observed.into(),
            p.into(),
            (p * total).into(),
        ]);
    }

    let rep = &out.report;
    let mut checks = Table::new(
        "checks",
        &["check", "value", "reference", "bound", "passed"],
    );
    checks.push(vec![
        "chi_square".into(),
        rep.gof.statistic.into(),
        u64::from(rep.gof.degrees_of_freedom).into(),
        rep.gof.threshold.into(),
        rep.gof.passed.into(),
    ]);
    checks.push(vec![
        "mean".into(),
        rep.mean_check.empirical.into(),
        rep.mean_check.analytic.into(),
        (3.0 * rep.mean_check.standard_error).into(),
        rep.mean_check.passed.into(),
    ]);
    checks.push(vec![
        "variance".into(),
        rep.var_check.empirical.into(),
        rep.var_check.analytic.into(),
        rep.var_check.tolerance.into(),
        rep.var_check.passed.into(),
    ]);
    if let Some(v) = out.coupling_violations {
        checks.push(vec![
            "coupling_violations".into(),
            v.into(),
            0u64.into(),
            0u64.into(),
            (v == 0).into(),
        ]);
    }
    doc.meta("p_value", rep.gof.p_value);
    doc.passed = out.passed();
    doc.tables.push(dist);
    doc.tables.push(checks);
    doc.attachments.push(("report", serde_json::to_value(rep)?));
    if let Some(v) = out.coupling_violations {
        doc.attachments
            .push(("coupling_violations", Value::from(v)));
    }
    Ok(doc)
}

/// Forward equations against the closed form at a single time.
pub fn ode(c: &RunConfig) -> Result<Document> {
    ensure!(
        c.m.is_none() && c.a.is_none(),
        "ode applies to the birth model; give --lambda, --k and --t"
    );
    let lambda = c.lambda.ok_or_else(|| anyhow!("ode needs --lambda"))?;
    let k = require_k(c)?;
    let t = require_t(c, "ode")?;
    ensure!(
        t >= 0.0 && t.is_finite(),
        "--t must be finite and >= 0, got {t}"
    );
    let process = ProcessParams::new(lambda, k)?;

    let mut doc = Document::new("ode");
    doc.meta("mode", "birth")
        .meta("lambda", lambda)
        .meta("t", t)
        .meta("m", process.induced_m(t))
        .meta("k", u64::from(k))
        .meta("tail", c.tail)
        .meta("tol", c.tol);

    let geometric = k == 1;
    let mut columns = vec![
        "n",
        "x",
        "ode_probability",
        "closedform_probability",
        "abs_diff",
    ];
    if geometric {
        columns.push("decap_geometric_probability");
    }
    let mut table = Table::new("ode", &columns);
    let mut summary = Table::new(
        "summary",
        &[
            "max_abs_diff",
            "n_max",
            "truncation_tail",
            "mass_defect",
            "passed",
        ],
    );

    if t == 0.0 {
        let mut row = vec![0u64.into(), 1u64.into(), 1.0.into(), 1.0.into(), 0.0.into()];
        if geometric {
            row.push(1.0.into());
        }
        table.push(row);
        summary.push(vec![
            0.0.into(),
            0u64.into(),
            0.0.into(),
            0.0.into(),
            true.into(),
        ]);
        doc.tables.push(table);
        doc.tables.push(summary);
        return Ok(doc);
    }

    let h = process.harris_at(t)?;
    let sol = solve_forward_odes(&process, t, c.tail)?;
    let q = (-lambda * t).exp();
    let mut max_diff = 0.0f64;
    for (n, &p_ode) in sol.probs.iter().enumerate() {
        let n = n as u64;
        let closed = harris_pmf(&h, n);
        let diff = (p_ode - closed).abs();
        max_diff = max_diff.max(diff);
        let mut row = vec![
            n.into(),
            h.support_point(n).x.into(),
            p_ode.into(),
            closed.into(),
            diff.into(),
        ];
        if geometric {
            // N(t) = n + 1 when k = 1.
            row.push(decap_geometric_pmf(q, n + 1)?.into());
        }
        table.push(row);
    }
    let passed = max_diff < c.tol;
    summary.push(vec![
        max_diff.into(),
        (sol.n_max() as u64).into(),
        sol.truncation_tail.into(),
        sol.mass_defect().into(),
        passed.into(),
    ]);
    doc.meta("ode_steps", sol.stats.accepted as u64)
        .meta("max_abs_diff", max_diff);
    doc.passed = passed;
    doc.tables.push(table);
    doc.tables.push(summary);
    Ok(doc)
}

pub const GRID_A: [f64; 3] = [0.5, 1.0, 2.0];
pub const GRID_T: [f64; 3] = [0.5, 1.0, 2.0];
pub const GRID_K: [u32; 3] = [1, 2, 3];

/// `(n, closed form, quadrature)` for one index.
pub type MixtureRow = (u64, f64, f64);

/// Largest `|closed form - quadrature|` over `n = 0..=n_max` at one point,
/// with the per-`n` rows.
pub fn mixture_point(a: f64, t: f64, k: u32, n_max: u64) -> Result<(f64, Vec<MixtureRow>)> {
    let p = MixtureParams::new(a, k)?;
    let mut rows = Vec::with_capacity(n_max as usize + 1);
    let mut worst = 0.0f64;
    for n in 0..=n_max {
        let closed = mixture_pmf(&p, t, n)?;
        let quad = mixture_pmf_quadrature(&p, t, n)?;
        worst = worst.max((closed - quad).abs());
        rows.push((n, closed, quad));
    }
    Ok((worst, rows))
}

/// Closed-form mixture pmf against quadrature, at one `(a, t)` point or over
/// the default grid when neither `--a` nor `--t` is given.
pub fn mixture_check(c: &RunConfig) -> Result<Document> {
    ensure!(
        c.m.is_none() && c.lambda.is_none(),
        "mixture-check takes --a and --t (or neither, for the full grid)"
    );
    let points: Vec<(f64, f64, u32)> = match (c.a, c.t) {
        (Some(a), Some(t)) => vec![(a, t, require_k(c)?)],
        (None, None) => {
            let ks: Vec<u32> = match c.k {
                Some(k) => vec![k],
                None => GRID_K.to_vec(),
            };
            let mut pts = Vec::new();
            for &a in &GRID_A {
                for &t in &GRID_T {
                    for &k in &ks {
                        pts.push((a, t, k));
                    }
                }
            }
            pts
        }
        _ => bail!("give both --a and --t, or neither for the full grid"),
    };

    let mut doc = Document::new("mixture-check");
    doc.meta("points", points.len() as u64)
        .meta("n_max", c.n_max)
        .meta("tol", c.tol);
    let mut table = Table::new(
        "mixture",
        &[
            "a",
            "t",
            "k",
            "n",
            "x",
            "closed_form",
            "quadrature",
            "abs_diff",
        ],
    );
    let mut worst = 0.0f64;
    for (a, t, k) in points {
        let (w, rows) = mixture_point(a, t, k, c.n_max)?;
        worst = worst.max(w);
        for (n, closed, quad) in rows {
            table.push(vec![
                a.into(),
                t.into(),
                u64::from(k).into(),
                n.into(),
                (1 + u64::from(k) * n).into(),
                closed.into(),
                quad.into(),
                (closed - quad).abs().into(),
            ]);
        }
    }
    doc.meta("max_abs_diff", worst);
    doc.passed = worst < c.tol;
    doc.tables.push(table);
    Ok(doc)
}
