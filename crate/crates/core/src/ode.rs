//! Adaptive Dormand–Prince 5(4) stepping for small fixed-size systems.

use std::ops::ControlFlow;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rel_tol: f64,
    pub abs_tol: f64,
    /// Initial step; estimated from the derivative when `None`.
    pub h0: Option<f64>,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rel_tol: 1e-8,
            abs_tol: 1e-12,
            h0: None,
            max_steps: 2_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, Copy)]
pub struct OdeEnd<const D: usize> {
    pub t: f64,
    pub y: [f64; D],
    pub dy: [f64; D],
    /// Set when the observer asked to stop before `t_end`.
    pub interrupted: bool,
    pub stats: OdeStats,
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

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combo<const D: usize>(y: &[f64; D], h: f64, terms: &[(f64, &[f64; D])]) -> [f64; D] {
    let mut out = *y;
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (w, k) in terms {
            acc += w * k[i];
        }
        *o += h * acc;
    }
    out
}

fn error_norm<const D: usize>(err: &[f64; D], y0: &[f64; D], y1: &[f64; D], opts: &OdeOptions) -> f64 {
    let mut acc = 0.0;
    for i in 0..D {
        let sc = opts.abs_tol + opts.rel_tol * y0[i].abs().max(y1[i].abs());
        acc += (err[i] / sc).powi(2);
    }
    (acc / D as f64).sqrt()
}

fn initial_step<const D: usize>(y0: &[f64; D], f0: &[f64; D], span: f64, opts: &OdeOptions) -> f64 {
    let mut d0 = 0.0f64;
    let mut d1 = 0.0f64;
    for i in 0..D {
        let sc = opts.abs_tol + opts.rel_tol * y0[i].abs();
        d0 = d0.max((y0[i] / sc).abs());
        d1 = d1.max((f0[i] / sc).abs());
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.min(span.abs())
}

/// Integrates `dy/dt = f(t, y)` from `t0` to `t_end`.
///
/// `observer` sees every accepted step as `(t, y, dy/dt)` and may stop the
/// integration early by returning `ControlFlow::Break`.
pub fn dopri45<const D: usize, F, O>(
    mut f: F,
    t0: f64,
    y0: [f64; D],
    t_end: f64,
    opts: &OdeOptions,
    mut observer: O,
) -> Result<OdeEnd<D>>
where
    F: FnMut(f64, &[f64; D]) -> [f64; D],
    O: FnMut(f64, &[f64; D], &[f64; D]) -> ControlFlow<()>,
{
    if y0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("initial state"));
    }
    let mut stats = OdeStats::default();
    let mut t = t0;
    let mut y = y0;
    let mut k1 = f(t, &y);
    stats.evaluations += 1;
    if t_end <= t0 {
        return Ok(OdeEnd { t, y, dy: k1, interrupted: false, stats });
    }
    let mut h = opts.h0.unwrap_or_else(|| initial_step(&y, &k1, t_end - t0, opts));

    while t < t_end {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepBudget { steps: opts.max_steps, t });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(1e-300) {
            return Err(Error::StepUnderflow { t, h });
        }

        let k2 = f(t + C2 * h, &combo(&y, h, &[(A21, &k1)]));
        let k3 = f(t + C3 * h, &combo(&y, h, &[(A31, &k1), (A32, &k2)]));
        let k4 = f(t + C4 * h, &combo(&y, h, &[(A41, &k1), (A42, &k2), (A43, &k3)]));
        let k5 = f(
            t + C5 * h,
            &combo(&y, h, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]),
        );
        let k6 = f(
            t + h,
            &combo(&y, h, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]),
        );
        let y1 = combo(&y, h, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        let k7 = f(t + h, &y1);
        stats.evaluations += 6;

        let mut err = [0.0; D];
        for i in 0..D {
            err[i] = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        let en = error_norm(&err, &y, &y1, opts);
        if !en.is_finite() || y1.iter().any(|v| !v.is_finite()) {
            stats.rejected += 1;
            h *= 0.2;
            continue;
        }

        if en <= 1.0 {
            stats.accepted += 1;
            t = if last { t_end } else { t + h };
            y = y1;
            k1 = k7;
            if observer(t, &y, &k1).is_break() {
                return Ok(OdeEnd { t, y, dy: k1, interrupted: true, stats });
            }
            let factor = if en == 0.0 { 5.0 } else { (0.9 * en.powf(-0.2)).clamp(0.2, 5.0) };
            h *= factor;
        } else {
            stats.rejected += 1;
            h *= (0.9 * en.powf(-0.2)).clamp(0.2, 1.0);
        }
    }
    Ok(OdeEnd { t, y, dy: k1, interrupted: false, stats })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let opts = OdeOptions::default();
        let end = dopri45(|_, y: &[f64; 1]| [-3.0 * y[0]], 0.0, [1.0], 2.0, &opts, |_, _, _| {
            ControlFlow::Continue(())
        })
        .unwrap();
        let exact = (-6.0f64).exp();
        assert!(((end.y[0] - exact) / exact).abs() < 1e-7, "{} vs {}", end.y[0], exact);
        assert_eq!(end.t, 2.0);
    }

    #[test]
    fn harmonic_oscillator_keeps_energy() {
        let opts = OdeOptions { rel_tol: 1e-10, abs_tol: 1e-12, ..Default::default() };
        let end = dopri45(
            |_, y: &[f64; 2]| [y[1], -y[0]],
            0.0,
            [1.0, 0.0],
            10.0,
            &opts,
            |_, _, _| ControlFlow::Continue(()),
        )
        .unwrap();
        assert!((end.y[0] - 10f64.cos()).abs() < 1e-8);
        assert!((end.y[1] + 10f64.sin()).abs() < 1e-8);
    }

    #[test]
    fn observer_can_stop() {
        let opts = OdeOptions::default();
        let end = dopri45(|_, y: &[f64; 1]| [-y[0]], 0.0, [1.0], 100.0, &opts, |_, y, _| {
            if y[0] < 0.5 {
                ControlFlow::Break(())
            } else {
                ControlFlow::Continue(())
            }
        })
        .unwrap();
        assert!(end.interrupted);
        assert!(end.t < 100.0 && end.y[0] < 0.5);
    }

    #[test]
    fn step_budget_is_reported() {
        let opts = OdeOptions { max_steps: 10, ..Default::default() };
        let r = dopri45(|_, y: &[f64; 1]| [-1e6 * y[0]], 0.0, [1.0], 1.0, &opts, |_, _, _| {
            ControlFlow::Continue(())
        });
        assert!(matches!(r, Err(Error::StepBudget { .. })));
    }

    #[test]
    fn blow_up_underflows() {
        // y' = y², y(0) = 1 has a pole at t = 1
        let opts = OdeOptions::default();
        let r = dopri45(|_, y: &[f64; 1]| [y[0] * y[0]], 0.0, [1.0], 2.0, &opts, |_, _, _| {
            ControlFlow::Continue(())
        });
        assert!(matches!(r, Err(Error::StepUnderflow { .. }) | Err(Error::StepBudget { .. })));
    }
}
