//! Adaptive classical RK4 with step-doubling error control and a post-step
//! hook for projection and stopping rules.

use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
    /// Keep every accepted state in the outcome.
    pub record: bool,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions {
            rtol: 1e-9,
            atol: 1e-12,
            h_init: 1e-3,
            h_min: 1e-12,
            h_max: f64::INFINITY,
            max_steps: 200_000,
            record: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Debug)]
pub struct OdeOutcome {
    pub t: f64,
    pub y: Vec<f64>,
    pub steps: usize,
    pub rejected: usize,
    /// True if the hook stopped the integration before `t1`.
    pub stopped: bool,
    pub path: Vec<(f64, Vec<f64>)>,
}

fn axpy(y: &[f64], h: f64, k: &[f64]) -> Vec<f64> {
    y.iter().zip(k).map(|(a, b)| a + h * b).collect()
}

fn rk4<F>(f: &mut F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k1))?;
    let k3 = f(t + 0.5 * h, &axpy(y, 0.5 * h, &k2))?;
    let k4 = f(t + h, &axpy(y, h, &k3))?;
    Ok((0..y.len())
        .map(|i| y[i] + h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]))
        .collect())
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` (either direction).
///
/// After every accepted step `post` may modify the state (e.g. project it
/// back onto a constraint) and may stop the integration.
pub fn integrate<F, P>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    t1: f64,
    opts: &OdeOptions,
    mut post: P,
) -> Result<OdeOutcome>
where
    F: FnMut(f64, &[f64]) -> Result<Vec<f64>>,
    P: FnMut(f64, &mut Vec<f64>) -> Result<Control>,
{
    let mut out = OdeOutcome {
        t: t0,
        y: y0.to_vec(),
        steps: 0,
        rejected: 0,
        stopped: false,
        path: Vec::new(),
    };
    if opts.record {
        out.path.push((t0, y0.to_vec()));
    }
    let span = t1 - t0;
    if span == 0.0 {
        return Ok(out);
    }
    let dir = span.signum();
    let mut h = opts.h_init.min(span.abs()).min(opts.h_max);
    while (t1 - out.t) * dir > 0.0 {
        if out.steps + out.rejected >= opts.max_steps {
            return Err(LabError::StepCollapse(h));
        }
        let remaining = (t1 - out.t).abs();
        let last = h >= remaining;
        let hs = if last { remaining } else { h } * dir;
        let full = rk4(&mut f, out.t, &out.y, hs)?;
        let mid = rk4(&mut f, out.t, &out.y, 0.5 * hs)?;
        let fine = rk4(&mut f, out.t + 0.5 * hs, &mid, 0.5 * hs)?;
        let mut err: f64 = 0.0;
        for i in 0..fine.len() {
            let sc = opts.atol + opts.rtol * fine[i].abs().max(out.y[i].abs());
            err = err.max((fine[i] - full[i]).abs() / (15.0 * sc));
        }
        if !err.is_finite() {
            err = 1e10;
        }
        if err <= 1.0 {
            let mut y: Vec<f64> = (0..fine.len())
                .map(|i| fine[i] + (fine[i] - full[i]) / 15.0)
                .collect();
            let t = if last { t1 } else { out.t + hs };
            let ctl = post(t, &mut y)?;
            out.t = t;
            out.y = y;
            out.steps += 1;
            if opts.record {
                out.path.push((out.t, out.y.clone()));
            }
            if ctl == Control::Stop {
                out.stopped = true;
                break;
            }
            let grow = if err == 0.0 { 4.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 4.0) };
            if !last {
                h = (h * grow).min(opts.h_max);
            }
        } else {
            out.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).clamp(0.1, 0.5);
            if h < opts.h_min {
                return Err(LabError::StepCollapse(h));
            }
        }
    }
    Ok(out)
}
