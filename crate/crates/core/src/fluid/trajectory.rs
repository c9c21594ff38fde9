use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Start of a linear segment: the (right) state at `t` and the drift that
/// holds until the next breakpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub t: f64,
    pub state: Vec<f64>,
    pub drift: Vec<f64>,
}

/// An upward discontinuity in a single coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpMark {
    pub t: f64,
    pub queue: usize,
    pub size: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

/// A fluid or jumping-fluid solution on `[0, t_end]`.
///
/// Breakpoint times are strictly increasing. The state is right-continuous;
/// discontinuities happen only at recorded jump marks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewiseLinearTrajectory {
    pub ell: usize,
    pub breakpoints: Vec<Breakpoint>,
    pub jumps: Vec<JumpMark>,
    pub t_end: f64,
}

impl PiecewiseLinearTrajectory {
    pub(crate) fn new(ell: usize) -> Self {
        Self {
            ell,
            breakpoints: Vec::new(),
            jumps: Vec::new(),
            t_end: 0.0,
        }
    }

    fn segment_at(&self, t: f64, strict: bool) -> Option<&Breakpoint> {
        let k = self
            .breakpoints
            .partition_point(|b| if strict { b.t < t } else { b.t <= t });
        k.checked_sub(1).map(|i| &self.breakpoints[i])
    }

    /// State at time `t` (right value at jump times). Zero before the first
    /// breakpoint.
    pub fn state_at(&self, t: f64) -> Vec<f64> {
        match self.segment_at(t, false) {
            Some(b) => b.state.iter().zip(&b.drift).map(|(x, d)| x + (t - b.t) * d).collect(),
            None => vec![0.0; self.ell],
        }
    }

    /// Left limit `q(t-)`.
    pub fn left_limit(&self, t: f64) -> Vec<f64> {
        match self.segment_at(t, true) {
            Some(b) => b.state.iter().zip(&b.drift).map(|(x, d)| x + (t - b.t) * d).collect(),
            None => vec![0.0; self.ell],
        }
    }

    pub fn final_state(&self) -> Vec<f64> {
        self.breakpoints
            .last()
            .map(|b| b.state.clone())
            .unwrap_or_else(|| vec![0.0; self.ell])
    }

    pub fn times(&self) -> Vec<f64> {
        self.breakpoints.iter().map(|b| b.t).collect()
    }

    /// Smallest coordinate over all breakpoints and jump limits.
    pub fn min_coordinate(&self) -> f64 {
        let bps = self.breakpoints.iter().flat_map(|b| b.state.iter());
        let jumps = self.jumps.iter().flat_map(|j| j.left.iter().chain(&j.right));
        bps.chain(jumps).copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with columns `t, q_1..q_l, drift_1..drift_l, is_jump`. A jump time
    /// produces two rows: the left limit (is_jump 0) then the right value.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t");
        for j in 1..=self.ell {
            let _ = write!(out, ",q_{j}");
        }
        for j in 1..=self.ell {
            let _ = write!(out, ",drift_{j}");
        }
        out.push_str(",is_jump\n");
        let row = |out: &mut String, t: f64, q: &[f64], d: &[f64], jump: bool| {
            let _ = write!(out, "{t}");
            for x in q.iter().chain(d) {
                let _ = write!(out, ",{x}");
            }
            let _ = writeln!(out, ",{}", u8::from(jump));
        };
        let zero = vec![0.0; self.ell];
        let mut prev_drift = zero.clone();
        for b in &self.breakpoints {
            let jumped = self.jumps.iter().any(|j| j.t == b.t);
            if jumped {
                let left = self.jumps.iter().find(|j| j.t == b.t).map(|j| j.left.clone());
                row(&mut out, b.t, &left.unwrap_or_else(|| zero.clone()), &prev_drift, false);
            }
            row(&mut out, b.t, &b.state, &b.drift, jumped);
            prev_drift = b.drift.clone();
        }
        out
    }
}
