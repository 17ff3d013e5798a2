//! The validation grid: nine numbered criteria with fixed tolerances.
//!
//! Each criterion returns a [`Criterion`] verdict. [`run_all`] evaluates them
//! in order and shares the simulated trajectories of criteria 3 and 5 with
//! the coupling check.

use std::time::{Duration, Instant};

use anyhow::{ensure, Result};
use serde::Serialize;

use harris_core::birth::{
    empirical_distribution, simulate_ensemble, solve_forward_odes, Trajectory,
};
use harris_core::dist::{decap_geometric_pmf, harris_pgf, harris_pmf, nb_pmf};
use harris_core::validate::{chi_square_gof, counts_by_index, GofResult};
use harris_core::{HarrisParams, ProcessParams};

use crate::commands::{
    mixture_point, pgf_slope_at_one, run_simulation, simulate, GRID_A, GRID_K, GRID_T, PGF_FD_STEP,
    PGF_SLOPE_REL_TOL, PGF_UNIT_TOL,
};
use crate::output::{Document, Format, Table};
use crate::RunConfig;

pub const ODE_TOL: f64 = 1e-8;
pub const ODE_TIME_LIMIT: Duration = Duration::from_secs(1);
pub const QUAD_TOL: f64 = 1e-8;
pub const MC_ALPHA: f64 = 0.01;
pub const SEED: u64 = 42;
pub const NB_IDENTITY_TOL: f64 = 1e-14;
pub const CALIBRATION_SEEDS: u64 = 200;
pub const CALIBRATION_REPLICAS: usize = 10_000;
pub const CALIBRATION_ALPHA: f64 = 0.05;
pub const CALIBRATION_BAND: (f64, f64) = (0.01, 0.11);

const ODE_LAMBDAS: [f64; 3] = [0.25, 0.5, 1.0];
const ODE_KS: [u32; 3] = [1, 2, 3];
const ODE_TIMES: [f64; 2] = [0.5, 1.0];
const IDENTITY_MS: [f64; 4] = [1.1, 2.0, std::f64::consts::E, 10.0];
const IDENTITY_KS: [u32; 4] = [1, 2, 3, 5];
const IDENTITY_N: u64 = 200;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Criterion {
    fn new(id: u32, name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            id,
            name,
            passed,
            detail,
        }
    }

    /// One-line summary, e.g. `PASS [3] model 1 law: ...`.
    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("{tag} [{}] {}: {}", self.id, self.name, self.detail)
    }
}

fn failed(id: u32, name: &'static str, err: anyhow::Error) -> Criterion {
    Criterion::new(id, name, false, format!("error: {err:#}"))
}

/// ODE against the closed form over the 18-point `(λ, k, t)` grid.
pub fn criterion_1() -> Criterion {
    const NAME: &str = "forward equations vs closed form";
    let run = || -> Result<(f64, Duration)> {
        let mut worst = 0.0f64;
        let mut slowest = Duration::ZERO;
        for &lambda in &ODE_LAMBDAS {
            for &k in &ODE_KS {
                for &t in &ODE_TIMES {
                    let p = ProcessParams::new(lambda, k)?;
                    let start = Instant::now();
                    let sol = solve_forward_odes(&p, t, 1e-12)?;
                    slowest = slowest.max(start.elapsed());
                    let h = p.harris_at(t)?;
                    for (n, &q) in sol.probs.iter().enumerate() {
                        worst = worst.max((q - harris_pmf(&h, n as u64)).abs());
                    }
                }
            }
        }
        Ok((worst, slowest))
    };
    match run() {
        Ok((worst, slowest)) => Criterion::new(
            1,
            NAME,
            worst < ODE_TOL && slowest < ODE_TIME_LIMIT,
            format!(
                "max |ode - closed| = {worst:.3e} (< {ODE_TOL:e}), slowest solve {:.1} ms (< 1000 ms)",
                slowest.as_secs_f64() * 1e3
            ),
        ),
        Err(e) => failed(1, NAME, e),
    }
}

/// Quadrature of the mixing integral against the closed form.
pub fn criterion_2() -> Criterion {
    const NAME: &str = "mixture quadrature vs closed form";
    let run = || -> Result<f64> {
        let mut worst = 0.0f64;
        for &a in &GRID_A {
            for &t in &GRID_T {
                for &k in &GRID_K {
                    worst = worst.max(mixture_point(a, t, k, 20)?.0);
                }
            }
        }
        Ok(worst)
    };
    match run() {
        Ok(worst) => Criterion::new(
            2,
            NAME,
            worst < QUAD_TOL,
            format!("27 points, n = 0..20, max diff = {worst:.3e} (< {QUAD_TOL:e})"),
        ),
        Err(e) => failed(2, NAME, e),
    }
}

/// Flags reproducing the Model 1 Monte Carlo run.
pub fn model1_config() -> RunConfig {
    RunConfig {
        lambda: Some(0.5),
        k: Some(2),
        t: Some(1.0),
        replicas: 100_000,
        seed: SEED,
        alpha: MC_ALPHA,
        ..RunConfig::default()
    }
}

/// Flags reproducing the Model 2 Monte Carlo run.
pub fn model2_config() -> RunConfig {
    RunConfig {
        a: Some(1.0),
        k: Some(2),
        t: Some(1.0),
        replicas: 1_000_000,
        seed: SEED,
        alpha: MC_ALPHA,
        ..RunConfig::default()
    }
}

fn monte_carlo(id: u32, name: &'static str, config: &RunConfig) -> (Criterion, Vec<Trajectory>) {
    match run_simulation(config) {
        Ok(out) => {
            let r = &out.report;
            let detail = format!(
                "chi2 = {:.3} on {} df (threshold {:.3}, p = {:.3}); mean {:.5} vs {:.5} ± {:.5}; var {:.4} vs {:.4} (±{}%)",
                r.gof.statistic,
                r.gof.degrees_of_freedom,
                r.gof.threshold,
                r.gof.p_value,
                r.mean_check.empirical,
                r.mean_check.analytic,
                3.0 * r.mean_check.standard_error,
                r.var_check.empirical,
                r.var_check.analytic,
                r.var_check.tolerance * 100.0,
            );
            (
                Criterion::new(id, name, r.overall, detail),
                out.trajectories,
            )
        }
        Err(e) => (failed(id, name, e), Vec::new()),
    }
}

/// Model 1: 10^5 trajectories at `(λ, k, t) = (0.5, 2, 1)`.
pub fn criterion_3() -> (Criterion, Vec<Trajectory>) {
    monte_carlo(3, "model 1 law, moments", &model1_config())
}

/// Model 2: 10^6 draws at `(a, k, t) = (1, 2, 1)`.
pub fn criterion_4() -> Criterion {
    monte_carlo(4, "model 2 law, moments", &model2_config()).0
}

pub const YULE_T: f64 = 0.7;
pub const YULE_REPLICAS: usize = 100_000;

/// `k = 1, λ = 1, t = 0.7`: ODE, closed form and the decapitated geometric
/// law agree, and simulation passes the GoF test against the latter.
pub fn criterion_5() -> (Criterion, Vec<Trajectory>) {
    const NAME: &str = "Yule-Furry reduction";
    let run = || -> Result<(f64, f64, GofResult, Vec<Trajectory>)> {
        let p = ProcessParams::new(1.0, 1)?;
        let h = p.harris_at(YULE_T)?;
        let q = (-YULE_T).exp();
        let sol = solve_forward_odes(&p, YULE_T, 1e-12)?;
        let mut ode_vs_geo = 0.0f64;
        let mut closed_vs_geo = 0.0f64;
        for (n, &y) in sol.probs.iter().enumerate() {
            let g = decap_geometric_pmf(q, n as u64 + 1)?;
            ode_vs_geo = ode_vs_geo.max((y - g).abs());
            closed_vs_geo = closed_vs_geo.max((harris_pmf(&h, n as u64) - g).abs());
        }
        let paths = simulate_ensemble(&p, YULE_T, YULE_REPLICAS, SEED)?;
        let counts = counts_by_index(&empirical_distribution(&paths, YULE_T)?, 1)?;
        let gof = chi_square_gof(
            &counts,
            |n| decap_geometric_pmf(q, n + 1).unwrap_or(0.0),
            YULE_REPLICAS as u64,
            MC_ALPHA,
        )?;
        Ok((ode_vs_geo, closed_vs_geo, gof, paths))
    };
    match run() {
        Ok((ode, closed, gof, paths)) => (
            Criterion::new(
                5,
                NAME,
                ode < ODE_TOL && closed < ODE_TOL && gof.passed,
                format!(
                    "max |ode - geo| = {ode:.3e}, max |closed - geo| = {closed:.3e}; MC chi2 = {:.3} (threshold {:.3}, p = {:.3})",
                    gof.statistic, gof.threshold, gof.p_value
                ),
            ),
            paths,
        ),
        Err(e) => (failed(5, NAME, e), Vec::new()),
    }
}

/// `N(t) = 1 + k I(t)` on every simulated path, at every jump time, at 0,
/// at the horizon and at the query time.
pub fn criterion_6(paths: &[&[Trajectory]], query_times: &[f64]) -> Criterion {
    const NAME: &str = "coupling N = 1 + k I";
    let mut total = 0usize;
    let mut violations = 0usize;
    for (set, &t) in paths.iter().zip(query_times) {
        for tr in set.iter() {
            total += 1;
            violations += tr.coupling_violations();
            let k = u64::from(tr.params.k());
            match (tr.state_at(t), tr.incentives_at(t)) {
                (Ok(n), Ok(i)) if n == 1 + k * i => {}
                _ => violations += 1,
            }
        }
    }
    Criterion::new(
        6,
        NAME,
        total > 0 && violations == 0,
        format!("{total} trajectories, {violations} violations"),
    )
}

/// NB identity, unit value of the pgf, and its slope at 1.
pub fn criterion_7() -> Criterion {
    const NAME: &str = "NB identity, pgf(1), pgf'(1)";
    let run = || -> Result<(f64, f64, f64)> {
        let mut nb = 0.0f64;
        let mut unit = 0.0f64;
        let mut slope = 0.0f64;
        for &m in &IDENTITY_MS {
            for &k in &IDENTITY_KS {
                let h = HarrisParams::new(m, k)?;
                for n in 0..=IDENTITY_N {
                    let d = (harris_pmf(&h, n) - nb_pmf(1.0 / f64::from(k), 1.0 / m, n)?).abs();
                    nb = nb.max(d);
                }
                unit = unit.max((harris_pgf(&h, 1.0)? - 1.0).abs());
                let s = pgf_slope_at_one(&h, PGF_FD_STEP)?;
                slope = slope.max(((s - m) / m).abs());
            }
        }
        Ok((nb, unit, slope))
    };
    match run() {
        Ok((nb, unit, slope)) => Criterion::new(
            7,
            NAME,
            nb <= NB_IDENTITY_TOL && unit <= PGF_UNIT_TOL && slope <= PGF_SLOPE_REL_TOL,
            format!("max |harris - nb| = {nb:.3e}, max |G(1) - 1| = {unit:.3e}, max rel slope error = {slope:.3e}"),
        ),
        Err(e) => failed(7, NAME, e),
    }
}

/// Rejection rate of the GoF test on Model 1 samples across 200 seeds.
pub fn criterion_8() -> Criterion {
    const NAME: &str = "GoF calibration under the null";
    let run = || -> Result<(u64, f64)> {
        let p = ProcessParams::new(0.5, 2)?;
        let h = p.harris_at(1.0)?;
        let mut rejections = 0u64;
        for seed in 0..CALIBRATION_SEEDS {
            let paths = simulate_ensemble(&p, 1.0, CALIBRATION_REPLICAS, seed)?;
            let counts = counts_by_index(&empirical_distribution(&paths, 1.0)?, 2)?;
            let gof = chi_square_gof(
                &counts,
                |n| harris_pmf(&h, n),
                CALIBRATION_REPLICAS as u64,
                CALIBRATION_ALPHA,
            )?;
            if !gof.passed {
                rejections += 1;
            }
        }
        Ok((rejections, rejections as f64 / CALIBRATION_SEEDS as f64))
    };
    let (lo, hi) = CALIBRATION_BAND;
    match run() {
        Ok((rej, rate)) => Criterion::new(
            8,
            NAME,
            (lo..=hi).contains(&rate),
            format!("{rej}/{CALIBRATION_SEEDS} rejections at alpha = {CALIBRATION_ALPHA}, rate {rate:.3} in [{lo}, {hi}]"),
        ),
        Err(e) => failed(8, NAME, e),
    }
}

/// Renders the Model 1 `simulate` document twice per format, once on a
/// single worker thread, and compares the bytes.
pub fn criterion_9() -> Criterion {
    const NAME: &str = "byte-identical reruns";
    let run = || -> Result<(usize, usize)> {
        let config = model1_config();
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build()?;
        let a = simulate(&config)?;
        let b = single.install(|| simulate(&config))?;
        let mut sizes = (0, 0);
        for format in [Format::Csv, Format::Json] {
            let (x, y) = (a.render(format), b.render(format));
            ensure!(x == y, "{format:?} output differs between runs");
            match format {
                Format::Csv => sizes.0 = x.len(),
                Format::Json => sizes.1 = x.len(),
            }
        }
        Ok(sizes)
    };
    match run() {
        Ok((csv, json)) => Criterion::new(
            9,
            NAME,
            true,
            format!(
                "CSV {csv} bytes and JSON {json} bytes identical across runs and thread counts"
            ),
        ),
        Err(e) => failed(9, NAME, e),
    }
}

/// Runs criteria 1..=8 in order; criterion 9 is added by the caller so that
/// it can choose between in-process and subprocess reruns.
pub fn run_numbered() -> Vec<Criterion> {
    let mut out = vec![criterion_1(), criterion_2()];
    let (c3, model1) = criterion_3();
    out.push(c3);
    out.push(criterion_4());
    let (c5, yule) = criterion_5();
    out.push(c5);
    out.push(criterion_6(&[&model1, &yule], &[1.0, YULE_T]));
    drop((model1, yule));
    out.push(criterion_7());
    out.push(criterion_8());
    out
}

pub fn run_all() -> Vec<Criterion> {
    let mut out = run_numbered();
    out.push(criterion_9());
    out
}

/// `validate` subcommand: the full grid with its fixed seeds and tolerances.
pub fn validate(c: &RunConfig) -> Result<Document> {
    ensure!(
        c.m.is_none() && c.lambda.is_none() && c.a.is_none() && c.k.is_none() && c.t.is_none(),
        "validate runs a fixed grid and takes no model parameters"
    );
    let results = run_all();
    let mut doc = Document::new("validate");
    doc.meta("seed", SEED).meta("alpha", MC_ALPHA);
    let mut table = Table::new("criteria", &["id", "name", "passed", "detail"]);
    for r in &results {
        table.push(vec![
            u64::from(r.id).into(),
            r.name.into(),
            r.passed.into(),
            r.detail.clone().into(),
        ]);
    }
    doc.passed = results.iter().all(|r| r.passed);
    doc.tables.push(table);
    Ok(doc)
}
