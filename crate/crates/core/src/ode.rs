//! Dormand-Prince 5(4) integrator for real first-order systems.

use crate::error::{Error, Result};

// Butcher tableau
const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
#[cfg(test)]
const B: [f64; 7] = [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0, 0.0];
// difference between the fifth- and fourth-order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const MIN_FACTOR: f64 = 0.2;
const MAX_FACTOR: f64 = 5.0;
const MAX_STEPS: usize = 20_000_000;
// accepted steps pinned at the stability boundary before the problem is
// declared stiff; six unconstrained steps in a row reset the count
const STIFF_HITS: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_step: f64,
    pub initial_step: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

struct Work {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y_stage6: Vec<f64>,
    y_new: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Self {
        Self { k: std::array::from_fn(|_| vec![0.0; n]), tmp: vec![0.0; n], y_stage6: vec![0.0; n], y_new: vec![0.0; n] }
    }
}

/// One Dormand-Prince step from `(t, y)` with `k[0] = f(t, y)` already
/// filled in. Leaves the fifth-order solution in `w.y_new`, `f` of it in
/// `w.k[6]`, and returns the weighted RMS error estimate.
fn try_step<F>(f: &mut F, t: f64, y: &[f64], h: f64, tol: &Tolerances, w: &mut Work) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len();
    for s in 1..7 {
        for i in 0..n {
            let mut acc = 0.0;
            for (j, a) in A[s].iter().enumerate().take(s) {
                acc += a * w.k[j][i];
            }
            w.tmp[i] = y[i] + h * acc;
        }
        if s == 5 {
            w.y_stage6.copy_from_slice(&w.tmp);
        }
        f(t + C[s] * h, &w.tmp, &mut w.k[s]);
    }
    // stage 7 is evaluated at the fifth-order solution (FSAL)
    w.y_new.copy_from_slice(&w.tmp);
    let mut sum = 0.0;
    for i in 0..n {
        let mut err = 0.0;
        for (s, e) in E.iter().enumerate() {
            err += e * w.k[s][i];
        }
        let scale = tol.abs_tol + tol.rel_tol * y[i].abs().max(w.y_new[i].abs());
        let q = h * err / scale;
        sum += q * q;
    }
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// `h |lambda|` estimated from the last two stages (Hairer's test).
fn stiffness_ratio(w: &Work, h: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..w.y_new.len() {
        num += (w.k[6][i] - w.k[5][i]).powi(2);
        den += (w.y_new[i] - w.y_stage6[i]).powi(2);
    }
    if den > 0.0 {
        h * (num / den).sqrt()
    } else {
        0.0
    }
}

/// Integrates `dy/dt = f(t, y)` from `times[0]`, stopping exactly at every
/// entry of `times` (which must be increasing) and handing the state to
/// `sink`. Fails with a step-size underflow when the controller cannot
/// make progress.
pub fn integrate<F, S>(mut f: F, y0: &[f64], times: &[f64], tol: &Tolerances, mut sink: S) -> Result<Stats>
where
    F: FnMut(f64, &[f64], &mut [f64]),
    S: FnMut(usize, f64, &[f64]),
{
    let n = y0.len();
    let mut stats = Stats::default();
    let mut y = y0.to_vec();
    if times.is_empty() {
        return Ok(stats);
    }
    let mut t = times[0];
    sink(0, t, &y);
    let mut w = Work::new(n);
    f(t, &y, &mut w.k[0]);
    stats.evaluations += 1;
    let mut h = tol.initial_step.min(tol.max_step);
    let (mut stiff_hits, mut calm) = (0usize, 0usize);
    for (idx, &target) in times.iter().enumerate().skip(1) {
        while t < target {
            let remaining = target - t;
            let mut step = h.min(tol.max_step);
            let last = step >= remaining;
            if last {
                step = remaining;
            }
            if step <= f64::EPSILON * t.abs().max(1.0) && !last {
                return Err(Error::StepSizeUnderflow { t, step, gap: None });
            }
            let err = try_step(&mut f, t, &y, step, tol, &mut w);
            stats.evaluations += 6;
            if err <= 1.0 && err.is_finite() {
                if stiffness_ratio(&w, step) > 3.25 {
                    stiff_hits += 1;
                    calm = 0;
                    if stiff_hits > STIFF_HITS {
                        return Err(Error::StepSizeUnderflow { t, step, gap: None });
                    }
                } else {
                    calm += 1;
                    if calm >= 6 {
                        stiff_hits = 0;
                    }
                }
                t = if last { target } else { t + step };
                y.copy_from_slice(&w.y_new);
                let (first, rest) = w.k.split_at_mut(1);
                first[0].copy_from_slice(&rest[5]);
                stats.accepted += 1;
                let factor = if err == 0.0 { MAX_FACTOR } else { (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, MAX_FACTOR) };
                // a step shortened to land on a sample time says nothing
                // about the attainable size
                h = if last { h.max(step * factor) } else { step * factor };
            } else {
                stats.rejected += 1;
                let factor = if err.is_finite() { (SAFETY * err.powf(-0.2)).clamp(MIN_FACTOR, 1.0) } else { MIN_FACTOR };
                h = step * factor;
                if h <= f64::EPSILON * t.abs().max(1.0) * 16.0 {
                    return Err(Error::StepSizeUnderflow { t, step: h, gap: None });
                }
            }
            if stats.accepted + stats.rejected > MAX_STEPS {
                return Err(Error::StepSizeUnderflow { t, step: h, gap: None });
            }
        }
        sink(idx, t, &y);
    }
    Ok(stats)
}

/// Fixed-step Dormand-Prince fifth-order solution, used to check the
/// order of the scheme.
pub fn fixed_step<F>(mut f: F, y0: &[f64], t0: f64, t1: f64, steps: usize) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let tol = Tolerances { rel_tol: 1.0, abs_tol: 1.0, max_step: f64::INFINITY, initial_step: 0.0 };
    let mut w = Work::new(n);
    let mut y = y0.to_vec();
    let h = (t1 - t0) / steps as f64;
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        f(t, &y, &mut w.k[0]);
        try_step(&mut f, t, &y, h, &tol, &mut w);
        y.copy_from_slice(&w.y_new);
    }
    y
}
