//! Exact event-driven integration of the Max-Weight fluid model.
//!
//! For a constant arrival rate `lambda` the fluid trajectory has right
//! derivative equal to the minimum-norm element of
//! `lambda - conv(S(x))`, where `S(x)` is the Max-Weight argmax set. That
//! drift is constant until either a new service vector joins the argmax set
//! or a positive coordinate reaches zero, so the trajectory is piecewise
//! linear and can be integrated event by event without a step size.

mod minnorm;
mod trajectory;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::network::{Network, ServiceVector};

pub use minnorm::{
    certificate_gap, min_norm_point, min_norm_point_enumerate, min_norm_point_wolfe, MinNormPoint,
    CERTIFICATE_TOL, ENUMERATION_LIMIT,
};
pub use trajectory::{Breakpoint, JumpMark, PiecewiseLinearTrajectory};

/// Relative tolerance for score ties in fluid mode.
pub const FLUID_TIE_TOL: f64 = 1e-9;
/// States below this magnitude are treated as exact zeros.
const ZERO_SNAP: f64 = 1e-12;
/// Drift entries this small (relative to the generators) are rounding noise.
const DRIFT_SNAP: f64 = 1e-13;
/// Coordinates below `-NEG_TOL` are a hard error.
const NEG_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluidOptions {
    pub event_cap: usize,
    /// Event gaps below this are "tiny"; coincident events closer than this
    /// are merged.
    pub zeno_guard: f64,
    /// Consecutive tiny gaps tolerated before reporting a Zeno failure.
    pub zeno_repeat: usize,
}

impl Default for FluidOptions {
    fn default() -> Self {
        Self {
            event_cap: 1_000_000,
            zeno_guard: 1e-12,
            zeno_repeat: 1000,
        }
    }
}

/// The selected drift at a state together with the data certifying it.
#[derive(Debug, Clone, PartialEq)]
pub struct DriftQuery {
    pub lambda: Vec<f64>,
    pub active_set: Vec<ServiceVector>,
    pub drift: Vec<f64>,
    /// Convex weights over `active_set` with `drift = lambda - Σ w μ`.
    pub weights: Vec<f64>,
}

impl DriftQuery {
    /// Checks `drift ∈ lambda - conv(active_set)` through the stored weights.
    pub fn is_certified(&self, tol: f64) -> bool {
        let s: f64 = self.weights.iter().sum();
        if (s - 1.0).abs() > tol || self.weights.iter().any(|w| *w < -tol) {
            return false;
        }
        (0..self.lambda.len()).all(|j| {
            let served: f64 = self
                .active_set
                .iter()
                .zip(&self.weights)
                .map(|(mu, w)| w * mu.rates()[j])
                .sum();
            (self.lambda[j] - served - self.drift[j]).abs() <= tol
        })
    }
}

fn tie_tol(scores: impl Iterator<Item = f64>) -> f64 {
    let scale = scores.map(f64::abs).fold(1.0, f64::max);
    FLUID_TIE_TOL * scale
}

fn active_indices(net: &Network, x: &[f64]) -> Vec<usize> {
    let scores: Vec<f64> = net.service_set().iter().map(|m| m.score(x)).collect();
    let tol = tie_tol(scores.iter().copied());
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..scores.len()).filter(|&i| scores[i] >= best - tol).collect()
}

/// Minimum-norm drift at `x` for arrival rate `lambda`.
pub fn min_norm_drift(net: &Network, lambda: &[f64], x: &[f64]) -> Result<DriftQuery> {
    check_dim(net.ell(), lambda.len())?;
    check_dim(net.ell(), x.len())?;
    let active = active_indices(net, x);
    let gens: Vec<Vec<f64>> = active
        .iter()
        .map(|&i| {
            lambda
                .iter()
                .zip(net.service_set()[i].rates())
                .map(|(l, m)| l - m)
                .collect()
        })
        .collect();
    let mn = min_norm_point(&gens)?;
    // rounding residue from the solver would otherwise leak off the zero state
    let scale = gens.iter().flatten().fold(1.0f64, |a, b| a.max(b.abs()));
    let drift = mn
        .point
        .iter()
        .map(|d| if d.abs() <= DRIFT_SNAP * scale { 0.0 } else { *d })
        .collect();
    Ok(DriftQuery {
        lambda: lambda.to_vec(),
        active_set: active.iter().map(|&i| net.service_set()[i].clone()).collect(),
        drift,
        weights: mn.weights,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Time until the drift at `x` stops being valid: a service vector outside
/// the current argmax set catches up, or a positive coordinate hits zero.
/// `f64::INFINITY` if neither happens.
pub fn next_event(net: &Network, lambda: &[f64], x: &[f64], drift: &[f64]) -> Result<f64> {
    check_dim(net.ell(), lambda.len())?;
    check_dim(net.ell(), x.len())?;
    check_dim(net.ell(), drift.len())?;
    let set = net.service_set();
    let active = active_indices(net, x);
    // among the tied vectors, those that stay tied along the ray
    let drift_scores: Vec<f64> = active.iter().map(|&i| set[i].score(drift)).collect();
    let dtol = tie_tol(drift_scores.iter().copied());
    let best_drift = drift_scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lead = active[drift_scores
        .iter()
        .position(|s| *s >= best_drift - dtol)
        .expect("nonempty")];
    let lead_rates = set[lead].rates();

    let mut t = f64::INFINITY;
    for (i, nu) in set.iter().enumerate() {
        if active.contains(&i) {
            continue;
        }
        let diff: Vec<f64> = nu.rates().iter().zip(lead_rates).map(|(a, b)| a - b).collect();
        let closing = dot(drift, &diff);
        let gap = -dot(x, &diff);
        if closing > 1e-13 && gap > 0.0 {
            t = t.min(gap / closing);
        }
    }
    for j in 0..x.len() {
        if x[j] > 0.0 && drift[j] < 0.0 {
            t = t.min(-x[j] / drift[j]);
        }
    }
    Ok(t)
}

/// Continues a trajectory under a constant rate from `(t, x)` up to
/// `t_stop`. Pushes one breakpoint per segment start; the caller decides
/// whether to close the trajectory at `t_stop`.
pub(crate) struct Integrator<'a> {
    pub net: &'a Network,
    pub opts: FluidOptions,
    pub events: usize,
}

impl<'a> Integrator<'a> {
    pub fn new(net: &'a Network, opts: FluidOptions) -> Self {
        Self { net, opts, events: 0 }
    }

    pub fn run(
        &mut self,
        traj: &mut PiecewiseLinearTrajectory,
        lambda: &[f64],
        t_start: f64,
        x0: &[f64],
        t_stop: f64,
    ) -> Result<Vec<f64>> {
        let mut t = t_start;
        let mut x = x0.to_vec();
        let mut tiny = 0usize;
        while t < t_stop {
            let q = min_norm_drift(self.net, lambda, &x)?;
            let drift = q.drift;
            for j in 0..x.len() {
                if x[j] == 0.0 && drift[j] < -NEG_TOL {
                    return Err(Error::Nonnegativity { t, coord: j, value: x[j], drift: drift[j] });
                }
            }
            let dt = next_event(self.net, lambda, &x, &drift)?;
            if traj.breakpoints.last().is_some_and(|b| b.t == t) {
                traj.breakpoints.pop();
            }
            traj.breakpoints.push(Breakpoint { t, state: x.clone(), drift: drift.clone() });
            self.events += 1;
            if self.events > self.opts.event_cap {
                traj.t_end = t;
                return Err(Error::EventCap {
                    cap: self.opts.event_cap,
                    partial: Box::new(traj.clone()),
                });
            }
            let step = dt.min(t_stop - t);
            if step < self.opts.zeno_guard {
                tiny += 1;
                if tiny > self.opts.zeno_repeat {
                    return Err(Error::Zeno { t, tiny_steps: tiny, guard: self.opts.zeno_guard });
                }
            } else {
                tiny = 0;
            }
            let scale = x.iter().copied().fold(1.0, f64::max);
            for j in 0..x.len() {
                let hits_zero = drift[j] < 0.0 && x[j] > 0.0 && (-x[j] / drift[j]) <= step + self.opts.zeno_guard;
                x[j] += step * drift[j];
                if hits_zero || x[j].abs() <= ZERO_SNAP * scale {
                    x[j] = 0.0;
                }
                if x[j] < -NEG_TOL {
                    return Err(Error::Nonnegativity { t: t + step, coord: j, value: x[j], drift: drift[j] });
                }
                x[j] = x[j].max(0.0);
            }
            t = if step == t_stop - t { t_stop } else { t + step };
            if dt.is_infinite() {
                t = t_stop;
            }
        }
        Ok(x)
    }

    /// Appends the closing breakpoint at `t`.
    pub fn close(
        &mut self,
        traj: &mut PiecewiseLinearTrajectory,
        lambda: &[f64],
        t: f64,
        x: Vec<f64>,
    ) -> Result<()> {
        let drift = min_norm_drift(self.net, lambda, &x)?.drift;
        if traj.breakpoints.last().is_some_and(|b| b.t == t) {
            traj.breakpoints.pop();
        }
        traj.breakpoints.push(Breakpoint { t, state: x, drift });
        traj.t_end = t;
        Ok(())
    }
}

/// Integrates the fluid model at constant rate `lambda` from `q0` on
/// `[0, t_end]`.
pub fn integrate_fluid(
    net: &Network,
    lambda: &[f64],
    q0: &[f64],
    t_end: f64,
) -> Result<PiecewiseLinearTrajectory> {
    integrate_fluid_with(net, lambda, q0, t_end, FluidOptions::default())
}

pub fn integrate_fluid_with(
    net: &Network,
    lambda: &[f64],
    q0: &[f64],
    t_end: f64,
    opts: FluidOptions,
) -> Result<PiecewiseLinearTrajectory> {
    check_dim(net.ell(), lambda.len())?;
    check_dim(net.ell(), q0.len())?;
    if !(t_end > 0.0) {
        return Err(Error::InvalidArgument(format!("t_end must be positive, got {t_end}")));
    }
    if q0.iter().chain(lambda).any(|v| !(*v >= 0.0) || !v.is_finite()) {
        return Err(Error::InvalidArgument("initial state and rates must be finite and nonnegative".into()));
    }
    let mut traj = PiecewiseLinearTrajectory::new(net.ell());
    let mut integ = Integrator::new(net, opts);
    let x = integ.run(&mut traj, lambda, 0.0, q0, t_end)?;
    integ.close(&mut traj, lambda, t_end, x)?;
    Ok(traj)
}
