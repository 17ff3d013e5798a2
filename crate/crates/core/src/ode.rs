//! Explicit adaptive Runge–Kutta integration with the Dormand–Prince 5(4)
//! embedded pair (FSAL), advancing the fifth-order solution.

use crate::error::{domain, HarrisError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdeOptions {
    pub atol: f64,
    pub rtol: f64,
    pub max_steps: usize,
    /// Initial step; chosen automatically when `None`.
    pub h0: Option<f64>,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            atol: 1e-10,
            rtol: 1e-10,
            max_steps: 1_000_000,
            h0: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// Fifth-order weights minus fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrates `y' = f(t, y)` from `t0` to `t1` in place.
///
/// `f(t, y, dy)` writes the derivative into `dy`.
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    t1: f64,
    y: &mut [f64],
    opts: &OdeOptions,
) -> Result<OdeStats>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    if !(t1 >= t0) || !t0.is_finite() || !t1.is_finite() {
        return domain(format!("integration interval [{t0}, {t1}] is invalid"));
    }
    if !(opts.atol > 0.0 && opts.rtol >= 0.0) {
        return domain("ODE tolerances must be positive");
    }
    let mut stats = OdeStats::default();
    if t1 == t0 {
        return Ok(stats);
    }
    let dim = y.len();
    let mut k1 = vec![0.0; dim];
    let mut k2 = vec![0.0; dim];
    let mut k3 = vec![0.0; dim];
    let mut k4 = vec![0.0; dim];
    let mut k5 = vec![0.0; dim];
    let mut k6 = vec![0.0; dim];
    let mut k7 = vec![0.0; dim];
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];

    let mut t = t0;
    f(t, y, &mut k1);
    stats.evaluations += 1;

    let mut h = opts
        .h0
        .unwrap_or_else(|| initial_step(y, &k1, opts))
        .min(t1 - t0);

    let mut last_ratio: f64 = 1e-4;
    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(HarrisError::Convergence(format!(
                "ODE step limit {} reached at t = {t}",
                opts.max_steps
            )));
        }
        if h < 1e-14 * t.abs().max(1.0) {
            return Err(HarrisError::Convergence(format!(
                "ODE step size underflow at t = {t}"
            )));
        }
        let last = t + h >= t1;
        if last {
            h = t1 - t;
        }

        for i in 0..dim {
            stage[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &stage, &mut k2);
        for i in 0..dim {
            stage[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &stage, &mut k3);
        for i in 0..dim {
            stage[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &stage, &mut k4);
        for i in 0..dim {
            stage[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &stage, &mut k5);
        for i in 0..dim {
            stage[i] =
                y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        f(t + h, &stage, &mut k6);
        for i in 0..dim {
            y_new[i] =
                y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
        }
        f(t + h, &y_new, &mut k7);
        stats.evaluations += 6;

        let mut err = 0.0f64;
        for i in 0..dim {
            let e =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let scale = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            err = err.max((e / scale).abs());
        }
        if !err.is_finite() {
            return Err(HarrisError::Convergence(format!(
                "non-finite error estimate at t = {t}"
            )));
        }

        if err <= 1.0 {
            stats.accepted += 1;
            t = if last { t1 } else { t + h };
            y.copy_from_slice(&y_new);
            std::mem::swap(&mut k1, &mut k7);
            if last {
                return Ok(stats);
            }
            // PI controller (Hairer–Wanner, beta = 0.04).
            let err = err.max(1e-10);
            let factor = 0.9 * err.powf(-0.7 / 5.0) * last_ratio.powf(0.04);
            h *= factor.clamp(0.2, 5.0);
            last_ratio = err;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
}

fn initial_step(y: &[f64], dy: &[f64], opts: &OdeOptions) -> f64 {
    let mut d0 = 0.0f64;
    let mut d1 = 0.0f64;
    for (&yi, &fi) in y.iter().zip(dy) {
        let sc = opts.atol + opts.rtol * yi.abs();
        d0 = d0.max((yi / sc).abs());
        d1 = d1.max((fi / sc).abs());
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6
    } else {
        0.01 * d0 / d1
    };
    h.max(1e-12)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let mut y = [1.0];
        let stats = integrate(
            |_, y, dy| dy[0] = -2.0 * y[0],
            0.0,
            3.0,
            &mut y,
            &OdeOptions::default(),
        )
        .unwrap();
        let err = (y[0] - (-6.0f64).exp()).abs();
        assert!(err < 1e-10, "{err:e}");
        assert!(stats.accepted > 0);
    }

    #[test]
    fn harmonic_oscillator() {
        let mut y = [1.0, 0.0];
        let opts = OdeOptions::default();
        integrate(
            |_, y, dy| {
                dy[0] = y[1];
                dy[1] = -y[0];
            },
            0.0,
            10.0,
            &mut y,
            &opts,
        )
        .unwrap();
        assert!((y[0] - 10f64.cos()).abs() < 1e-9);
        assert!((y[1] + 10f64.sin()).abs() < 1e-9);
    }

    #[test]
    fn time_dependent_rhs() {
        let mut y = [0.0];
        integrate(
            |t, _, dy| dy[0] = t.cos(),
            0.0,
            2.0,
            &mut y,
            &OdeOptions::default(),
        )
        .unwrap();
        assert!((y[0] - 2f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn zero_length_interval_is_noop() {
        let mut y = [3.0];
        let s = integrate(
            |_, _, dy| dy[0] = 1.0,
            1.0,
            1.0,
            &mut y,
            &OdeOptions::default(),
        )
        .unwrap();
        assert_eq!(y[0], 3.0);
        assert_eq!(s.accepted, 0);
    }

    #[test]
    fn step_limit_reports_convergence_error() {
        let mut y = [1.0];
        let opts = OdeOptions {
            max_steps: 3,
            ..OdeOptions::default()
        };
        let err =
            integrate(|_, y, dy| dy[0] = -1000.0 * y[0], 0.0, 10.0, &mut y, &opts).unwrap_err();
        assert!(matches!(err, HarrisError::Convergence(_)));
    }

    #[test]
    fn rejects_backwards_interval() {
        let mut y = [1.0];
        assert!(integrate(
            |_, _, dy| dy[0] = 0.0,
            1.0,
            0.0,
            &mut y,
            &OdeOptions::default()
        )
        .is_err());
    }
}
