//! Jumping-fluid (JF) trajectories.
//!
//! An ε-JF(n) trajectory starts at zero, takes `n_j` upward jumps in
//! coordinate `j`, and otherwise follows the fluid dynamics under a
//! piecewise-constant arrival rate that stays within ε of `lambda_star`.

mod reachable;
mod search;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::fluid::{FluidOptions, Integrator, JumpMark, PiecewiseLinearTrajectory};
use crate::network::Network;

pub use reachable::{attraction_test, sample_reachable, AttractionReport, PointCloud, MAX_CLOUD_POINTS};
pub use search::{check_rjf, RjfStatus, RjfVerdict, SearchConfig, SearchStats, Witness};

/// Slack on the ε-ball membership test.
const BALL_TOL: f64 = 1e-12;

/// Serde helpers writing infinite exponents as the string `"inf"`.
pub mod gamma_serde {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Entry {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(g: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<Entry> = g
            .iter()
            .map(|x| if x.is_infinite() { Entry::Text("inf".into()) } else { Entry::Num(*x) })
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v = Vec::<Entry>::deserialize(d)?;
        v.into_iter()
            .map(|e| match e {
                Entry::Num(x) => Ok(x),
                Entry::Text(t) => t.parse::<f64>().map_err(serde::de::Error::custom),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatePiece {
    pub start: f64,
    pub rate: Vec<f64>,
}

/// Right-continuous piecewise-constant arrival rate inside the ε-ball
/// around `lambda_star`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateProfile {
    pub lambda_star: Vec<f64>,
    pub epsilon: f64,
    pieces: Vec<RatePiece>,
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

impl RateProfile {
    /// Pieces must start at 0 with strictly increasing start times.
    pub fn new(lambda_star: Vec<f64>, epsilon: f64, pieces: Vec<RatePiece>) -> Result<Self> {
        if !(epsilon >= 0.0) || !epsilon.is_finite() {
            return Err(Error::InvalidArgument(format!("epsilon must be finite and >= 0, got {epsilon}")));
        }
        if lambda_star.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
            return Err(Error::InvalidArgument("lambda_star must be finite and nonnegative".into()));
        }
        let first = pieces.first().ok_or(Error::Empty("rate pieces"))?;
        if first.start != 0.0 {
            return Err(Error::InvalidArgument("first rate piece must start at 0".into()));
        }
        for w in pieces.windows(2) {
            if !(w[1].start > w[0].start) {
                return Err(Error::InvalidArgument("rate piece starts must increase strictly".into()));
            }
        }
        for p in &pieces {
            check_dim(lambda_star.len(), p.rate.len())?;
            if p.rate.iter().any(|x| !(*x >= 0.0)) {
                return Err(Error::InvalidArgument("rates must be nonnegative".into()));
            }
            let d = dist(&p.rate, &lambda_star);
            if d > epsilon * (1.0 + BALL_TOL) + BALL_TOL {
                return Err(Error::InvalidArgument(format!(
                    "rate piece at t={} is {d} from lambda_star, epsilon is {epsilon}",
                    p.start
                )));
            }
        }
        Ok(Self { lambda_star, epsilon, pieces })
    }

    pub fn constant(lambda_star: Vec<f64>, epsilon: f64) -> Result<Self> {
        let rate = lambda_star.clone();
        Self::new(lambda_star, epsilon, vec![RatePiece { start: 0.0, rate }])
    }

    pub fn pieces(&self) -> &[RatePiece] {
        &self.pieces
    }

    pub fn rate_at(&self, t: f64) -> &[f64] {
        let k = self.pieces.partition_point(|p| p.start <= t).max(1);
        &self.pieces[k - 1].rate
    }

    /// Same pieces with every start time multiplied by `factor`.
    pub fn time_scaled(&self, factor: f64) -> Self {
        let pieces = self
            .pieces
            .iter()
            .map(|p| RatePiece { start: p.start * factor, rate: p.rate.clone() })
            .collect();
        Self { lambda_star: self.lambda_star.clone(), epsilon: self.epsilon, pieces }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub t: f64,
    pub queue: usize,
    pub size: f64,
}

/// Upward jumps sorted by time (stable for equal times).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct JumpSchedule {
    jumps: Vec<Jump>,
}

impl JumpSchedule {
    pub fn new(mut jumps: Vec<Jump>) -> Result<Self> {
        for j in &jumps {
            if !(j.size > 0.0) || !j.size.is_finite() {
                return Err(Error::InvalidArgument(format!("jump sizes must be positive, got {}", j.size)));
            }
            if !(j.t >= 0.0) || !j.t.is_finite() {
                return Err(Error::InvalidArgument(format!("jump times must be >= 0, got {}", j.t)));
            }
        }
        jumps.sort_by(|a, b| a.t.total_cmp(&b.t));
        Ok(Self { jumps })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn jumps(&self) -> &[Jump] {
        &self.jumps
    }

    /// Jump counts per queue (the vector `n`).
    pub fn counts(&self, ell: usize) -> Vec<usize> {
        let mut n = vec![0; ell];
        for j in &self.jumps {
            if j.queue < ell {
                n[j.queue] += 1;
            }
        }
        n
    }
}

fn check_gamma(gamma: &[f64]) -> Result<()> {
    if let Some(g) = gamma.iter().find(|g| !(**g > 0.0)) {
        return Err(Error::InvalidArgument(format!("tail exponents must lie in (0, inf], got {g}")));
    }
    Ok(())
}

/// `γᵀn` with the convention `∞·0 = 0`.
pub fn budget_value(gamma: &[f64], n: &[usize]) -> Result<f64> {
    check_gamma(gamma)?;
    check_dim(gamma.len(), n.len())?;
    Ok(gamma
        .iter()
        .zip(n)
        .map(|(g, &k)| if k == 0 { 0.0 } else { g * k as f64 })
        .sum())
}

/// Whether `γᵀn <= 1`.
pub fn budget_ok(gamma: &[f64], n: &[usize]) -> Result<bool> {
    Ok(budget_value(gamma, n)? <= 1.0 + 1e-12)
}

/// All `n` with `γᵀn <= 1`, in lexicographic order.
pub fn enumerate_budgets(gamma: &[f64]) -> Result<Vec<Vec<usize>>> {
    check_gamma(gamma)?;
    let caps: Vec<usize> = gamma
        .iter()
        .map(|g| if g.is_infinite() { 0 } else { ((1.0 + 1e-12) / g).floor() as usize })
        .collect();
    let mut out = Vec::new();
    let mut n = vec![0usize; gamma.len()];
    loop {
        if budget_ok(gamma, &n)? {
            out.push(n.clone());
        }
        // odometer over the box, last coordinate fastest
        let mut k = gamma.len();
        loop {
            if k == 0 {
                return Ok(out);
            }
            k -= 1;
            if n[k] < caps[k] {
                n[k] += 1;
                break;
            }
            n[k] = 0;
        }
    }
}

/// Integrates an ε-JF trajectory on `[0, t_end]` from the zero state.
pub fn integrate_jf(
    net: &Network,
    profile: &RateProfile,
    jumps: &JumpSchedule,
    t_end: f64,
) -> Result<PiecewiseLinearTrajectory> {
    integrate_jf_with(net, profile, jumps, t_end, FluidOptions::default())
}

pub fn integrate_jf_with(
    net: &Network,
    profile: &RateProfile,
    jumps: &JumpSchedule,
    t_end: f64,
    opts: FluidOptions,
) -> Result<PiecewiseLinearTrajectory> {
    let ell = net.ell();
    check_dim(ell, profile.lambda_star.len())?;
    if let Some(j) = jumps.jumps().iter().find(|j| j.queue >= ell) {
        return Err(Error::InvalidArgument(format!("jump queue {} out of range", j.queue)));
    }
    if !(t_end >= 0.0) || jumps.jumps().last().is_some_and(|j| j.t > t_end) {
        return Err(Error::InvalidArgument("t_end must cover every jump".into()));
    }
    let mut times: Vec<f64> = profile
        .pieces()
        .iter()
        .map(|p| p.start)
        .chain(jumps.jumps().iter().map(|j| j.t))
        .filter(|t| *t <= t_end)
        .collect();
    times.sort_by(f64::total_cmp);
    times.dedup();

    let mut traj = PiecewiseLinearTrajectory::new(ell);
    let mut integ = Integrator::new(net, opts);
    let mut x = vec![0.0; ell];
    let mut pending = jumps.jumps().iter().peekable();
    for (k, &t) in times.iter().enumerate() {
        while let Some(j) = pending.next_if(|j| j.t == t) {
            let left = x.clone();
            x[j.queue] += j.size;
            traj.jumps.push(JumpMark { t, queue: j.queue, size: j.size, left, right: x.clone() });
        }
        let stop = times.get(k + 1).copied().unwrap_or(t_end);
        x = integ.run(&mut traj, profile.rate_at(t), t, &x, stop)?;
    }
    integ.close(&mut traj, profile.rate_at(t_end), t_end, x)?;
    Ok(traj)
}
