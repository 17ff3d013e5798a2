//! The Harris birth process `N(t)`.
//!
//! `N(0) = 1` and the state `1 + nk` jumps to `1 + (n+1)k` at rate
//! `(nk + 1)λ`. The incentive count `I(t) = (N(t) - 1)/k` is the number of
//! jumps by time `t`. At time `t > 0`, `N(t)` is Harris with `m = e^{tλk}`
//! and `I(t)` is negative binomial `NB(1/k, e^{-tλk})`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::dist::{harris_mean_var, harris_pmf, nb_pmf, tail_majorant, HarrisParams};
use crate::error::{domain, HarrisError, Result};
use crate::ode::{integrate, OdeOptions, OdeStats};
use crate::rng::RngStream;
use crate::sampler::sample_exponential;

/// Default bound on the number of jumps a single trajectory may take.
pub const DEFAULT_EVENT_CAP: usize = 1_000_000;

/// Default bound on the truncated state space of the forward equations.
pub const DEFAULT_STATE_CAP: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProcessParams {
    lambda: f64,
    k: u32,
}

impl ProcessParams {
    pub fn new(lambda: f64, k: u32) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return domain(format!("base rate must satisfy lambda > 0, got {lambda}"));
        }
        if k == 0 {
            return domain("step must satisfy k >= 1, got k = 0");
        }
        Ok(Self { lambda, k })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// Jump rate out of the state with incentive count `n`: `(nk + 1)λ`.
    #[inline]
    pub fn rate(&self, n: u64) -> f64 {
        (n as f64 * f64::from(self.k) + 1.0) * self.lambda
    }

    /// `m(t) = e^{tλk}`.
    pub fn induced_m(&self, t: f64) -> f64 {
        (t * self.lambda * f64::from(self.k)).exp()
    }

    /// Harris parameters of `N(t)`; requires `t > 0` so that `m > 1`.
    pub fn harris_at(&self, t: f64) -> Result<HarrisParams> {
        if !(t > 0.0) {
            return domain(format!("the Harris law of N(t) needs t > 0, got t = {t}"));
        }
        HarrisParams::new(self.induced_m(t), self.k)
    }
}

/// One sample path on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub params: ProcessParams,
    /// `jump_times[i]` is when the path enters `states[i + 1]`.
    pub jump_times: Vec<f64>,
    pub states: Vec<u64>,
    pub horizon: f64,
}

impl Trajectory {
    pub fn n_events(&self) -> usize {
        self.jump_times.len()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if t > self.horizon {
            return Err(HarrisError::BeyondHorizon {
                t,
                horizon: self.horizon,
            });
        }
        if !(t >= 0.0) {
            return domain(format!("query time must be >= 0, got {t}"));
        }
        Ok(())
    }

    /// `N(t)`: the last state whose entry time is `<= t`.
    pub fn state_at(&self, t: f64) -> Result<u64> {
        self.check_time(t)?;
        let jumps = self.jump_times.partition_point(|&s| s <= t);
        Ok(self.states[jumps])
    }

    /// `I(t)`: number of jumps by time `t`, counted from the jump times alone.
    pub fn incentives_at(&self, t: f64) -> Result<u64> {
        self.check_time(t)?;
        Ok(self.jump_times.partition_point(|&s| s <= t) as u64)
    }

    /// Counts times (0, every jump time, the horizon) at which
    /// `N(t) = 1 + k I(t)` fails, along with any broken path invariant.
    pub fn coupling_violations(&self) -> usize {
        let k = u64::from(self.params.k);
        let mut bad = 0;
        if self.states.first() != Some(&1) || self.states.len() != self.jump_times.len() + 1 {
            bad += 1;
        }
        for w in self.states.windows(2) {
            if w[1] != w[0] + k {
                bad += 1;
            }
        }
        for w in self.jump_times.windows(2) {
            if !(w[1] > w[0]) {
                bad += 1;
            }
        }
        let times = std::iter::once(0.0)
            .chain(self.jump_times.iter().copied())
            .chain(std::iter::once(self.horizon));
        for t in times {
            match (self.state_at(t), self.incentives_at(t)) {
                (Ok(n), Ok(i)) if n == 1 + k * i => {}
                _ => bad += 1,
            }
        }
        bad
    }
}

pub fn simulate_trajectory(
    rng: &mut RngStream,
    params: &ProcessParams,
    horizon: f64,
) -> Result<Trajectory> {
    simulate_trajectory_capped(rng, params, horizon, DEFAULT_EVENT_CAP)
}

/// Exact simulation: the holding time in state `1 + nk` is exponential with
/// rate `(nk + 1)λ`.
pub fn simulate_trajectory_capped(
    rng: &mut RngStream,
    params: &ProcessParams,
    horizon: f64,
    event_cap: usize,
) -> Result<Trajectory> {
    if !(horizon > 0.0) || !horizon.is_finite() {
        return domain(format!("horizon must be finite and > 0, got {horizon}"));
    }
    let k = u64::from(params.k);
    let mut jump_times = Vec::new();
    let mut states = vec![1u64];
    let mut t = 0.0;
    let mut n = 0u64;
    loop {
        let hold = sample_exponential(rng, params.rate(n))?;
        // A holding time below the resolution of `t` still advances time.
        let next = (t + hold).max(t.next_up());
        if next > horizon {
            break;
        }
        if jump_times.len() >= event_cap {
            return Err(HarrisError::Resource(format!(
                "trajectory exceeded {event_cap} events before t = {horizon}"
            )));
        }
        t = next;
        n += 1;
        jump_times.push(t);
        states.push(1 + n * k);
    }
    Ok(Trajectory {
        params: *params,
        jump_times,
        states,
        horizon,
    })
}

/// Simulates `replicas` independent paths; replica `r` uses stream `r`.
pub fn simulate_ensemble(
    params: &ProcessParams,
    horizon: f64,
    replicas: usize,
    seed: u64,
) -> Result<Vec<Trajectory>> {
    let one = |r: usize| {
        let mut rng = RngStream::new(seed, r as u64);
        simulate_trajectory(&mut rng, params, horizon)
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

/// Frequencies of `N(t)` across trajectories, keyed by state value.
pub fn empirical_distribution(trajectories: &[Trajectory], t: f64) -> Result<BTreeMap<u64, u64>> {
    let mut counts = BTreeMap::new();
    for tr in trajectories {
        *counts.entry(tr.state_at(t)?).or_insert(0) += 1;
    }
    Ok(counts)
}

/// Numerical solution of the forward equations at a single time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransientSolution {
    pub params: ProcessParams,
    pub t: f64,
    /// `probs[n] = P(N(t) = 1 + nk)` for `n = 0..=n_max`.
    pub probs: Vec<f64>,
    /// Certified bound on the probability beyond `n_max`.
    pub truncation_tail: f64,
    #[serde(skip)]
    pub stats: OdeStats,
}

impl TransientSolution {
    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mass_defect(&self) -> f64 {
        (self.probs.iter().sum::<f64>() + self.truncation_tail - 1.0).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ForwardOptions {
    pub ode: OdeOptions,
    pub state_cap: usize,
}

impl Default for ForwardOptions {
    fn default() -> Self {
        Self {
            ode: OdeOptions::default(),
            state_cap: DEFAULT_STATE_CAP,
        }
    }
}

pub fn solve_forward_odes(
    params: &ProcessParams,
    t: f64,
    tail_bound: f64,
) -> Result<TransientSolution> {
    solve_forward_odes_with(params, t, tail_bound, &ForwardOptions::default())
}

/// Integrates
///
/// ```text
/// dP_n/dt = ((n-1)k + 1)λ P_{n-1} - (nk + 1)λ P_n,    P_0(0) = 1,
/// ```
///
/// for `n = 0..=n_max`. The system is lower triangular, so truncation does
/// not perturb the retained components. `n_max` is twice the index at which
/// the closed-form tail majorant falls below `tail_bound`, and the reported
/// `truncation_tail` is that majorant evaluated at `n_max`.
pub fn solve_forward_odes_with(
    params: &ProcessParams,
    t: f64,
    tail_bound: f64,
    opts: &ForwardOptions,
) -> Result<TransientSolution> {
    if !(t >= 0.0) || !t.is_finite() {
        return domain(format!("time must be finite and >= 0, got {t}"));
    }
    if !(tail_bound > 0.0 && tail_bound <= 1e-6) {
        return domain(format!(
            "tail bound must lie in (0, 1e-6], got {tail_bound}"
        ));
    }
    if t == 0.0 {
        return Ok(TransientSolution {
            params: *params,
            t,
            probs: vec![1.0],
            truncation_tail: 0.0,
            stats: OdeStats::default(),
        });
    }

    let harris = params.harris_at(t)?;
    let n_max = truncation_level(&harris, tail_bound, opts.state_cap)?;
    let mut y = vec![0.0; n_max + 1];
    y[0] = 1.0;
    let rates: Vec<f64> = (0..=n_max as u64).map(|n| params.rate(n)).collect();
    let rhs = |_t: f64, p: &[f64], dp: &mut [f64]| {
        dp[0] = -rates[0] * p[0];
        for n in 1..=n_max {
            dp[n] = rates[n - 1] * p[n - 1] - rates[n] * p[n];
        }
    };
    let stats = integrate(rhs, 0.0, t, &mut y, &opts.ode)?;
    let truncation_tail = tail_majorant(&harris, harris_pmf(&harris, n_max as u64));
    Ok(TransientSolution {
        params: *params,
        t,
        probs: y,
        truncation_tail,
        stats,
    })
}

fn truncation_level(harris: &HarrisParams, tail_bound: f64, cap: usize) -> Result<usize> {
    let mut n = 0u64;
    while tail_majorant(harris, harris_pmf(harris, n)) >= tail_bound {
        n += 1;
        if 2 * n as usize > cap {
            return Err(HarrisError::Resource(format!(
                "forward equations need more than {cap} states for tail bound {tail_bound:e}"
            )));
        }
    }
    Ok((2 * n as usize).max(1))
}

/// `(E N(t), Var N(t)) = (e^{tλk}, e^{tλk}(e^{tλk} - 1)k)`; `(1, 0)` at `t = 0`.
pub fn process_moments(params: &ProcessParams, t: f64) -> Result<(f64, f64)> {
    if !(t >= 0.0) || !t.is_finite() {
        return domain(format!("time must be finite and >= 0, got {t}"));
    }
    if t == 0.0 {
        return Ok((1.0, 0.0));
    }
    Ok(harris_mean_var(&params.harris_at(t)?))
}

/// `P(I(t) = n)` under `NB(1/k, e^{-tλk})`. At `t = 0` the count is zero.
pub fn incentive_pmf(params: &ProcessParams, t: f64, n: u64) -> Result<f64> {
    if !(t >= 0.0) || !t.is_finite() {
        return domain(format!("time must be finite and >= 0, got {t}"));
    }
    if t == 0.0 {
        return Ok(if n == 0 { 1.0 } else { 0.0 });
    }
    let p = (-t * params.lambda * f64::from(params.k)).exp();
    nb_pmf(1.0 / f64::from(params.k), p, n)
}
