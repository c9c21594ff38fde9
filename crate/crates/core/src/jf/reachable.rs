//! Sampled reachable sets W(n) and the ε-attracting property test.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{budget_ok, integrate_jf, Jump, JumpSchedule, RatePiece, RateProfile};
use crate::error::{check_dim, Error, Result};
use crate::fluid::integrate_fluid;
use crate::network::Network;

pub const MAX_CLOUD_POINTS: usize = 100_000;
/// States recorded per sampled trajectory.
const EVALS_PER_TRAJECTORY: usize = 8;
/// Evaluation times are uniform on `[0, HORIZON]`.
const HORIZON: f64 = 2.0;

/// A finite point set with exact nearest-neighbour distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub ell: usize,
    points: Vec<Vec<f64>>,
    /// How the cloud was generated, e.g. `n`, seed and sample count.
    pub metadata: serde_json::Value,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum()
}

impl PointCloud {
    /// Exact duplicates are dropped; insertion order is kept otherwise.
    pub fn new(ell: usize, points: Vec<Vec<f64>>) -> Result<Self> {
        let mut cloud = Self { ell, points: Vec::new(), metadata: serde_json::Value::Null };
        cloud.extend(points)?;
        Ok(cloud)
    }

    pub fn extend(&mut self, points: impl IntoIterator<Item = Vec<f64>>) -> Result<()> {
        let mut seen: HashSet<Vec<u64>> = self.points.iter().map(|p| key(p)).collect();
        for p in points {
            check_dim(self.ell, p.len())?;
            if seen.insert(key(&p)) {
                if self.points.len() == MAX_CLOUD_POINTS {
                    return Err(Error::InvalidArgument(format!(
                        "point cloud capped at {MAX_CLOUD_POINTS} points"
                    )));
                }
                self.points.push(p);
            }
        }
        Ok(())
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Euclidean distance from `x` to the nearest cloud point.
    pub fn distance(&self, x: &[f64]) -> f64 {
        self.points
            .iter()
            .map(|p| dist2(p, x))
            .fold(f64::INFINITY, f64::min)
            .sqrt()
    }

    /// Largest nearest-neighbour gap over up to `probe` cloud points; a
    /// crude scale below which distances reflect sampling, not geometry.
    pub fn resolution(&self, probe: usize) -> f64 {
        let n = self.points.len();
        if n < 2 {
            return 0.0;
        }
        let step = (n / probe.max(1)).max(1);
        (0..n)
            .step_by(step)
            .map(|i| {
                self.points
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != i)
                    .map(|(_, p)| dist2(p, &self.points[i]))
                    .fold(f64::INFINITY, f64::min)
                    .sqrt()
            })
            .fold(0.0, f64::max)
    }

    /// Componentwise maximum over the cloud.
    pub fn upper_corner(&self) -> Vec<f64> {
        let mut hi = vec![0.0f64; self.ell];
        for p in &self.points {
            for (h, x) in hi.iter_mut().zip(p) {
                *h = h.max(*x);
            }
        }
        hi
    }
}

fn key(p: &[f64]) -> Vec<u64> {
    p.iter().map(|x| (x + 0.0).to_bits()).collect()
}

pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform on the sphere of radius ε around `center` with probability 1/2,
/// else the center itself; negative entries are clipped (which only moves
/// the point closer to a nonnegative center).
fn surface_or_center(rng: &mut ChaCha8Rng, center: &[f64], eps: f64) -> Vec<f64> {
    if eps == 0.0 || rng.gen_bool(0.5) {
        return center.to_vec();
    }
    let d: Vec<f64> = center.iter().map(|_| StandardNormal.sample(rng)).collect();
    let n = d.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    center.iter().zip(&d).map(|(c, x)| (c + eps * x / n).max(0.0)).collect()
}

/// Samples `samples` random ε-JF(n) trajectories and records their states
/// at random times, together with the origin.
pub fn sample_reachable(
    net: &Network,
    lambda_star: &[f64],
    gamma: &[f64],
    epsilon: f64,
    n: &[usize],
    samples: usize,
    seed: u64,
) -> Result<PointCloud> {
    let ell = net.ell();
    check_dim(ell, lambda_star.len())?;
    check_dim(ell, n.len())?;
    if !budget_ok(gamma, n)? {
        return Err(Error::InvalidArgument(format!("jump counts {n:?} exceed the budget")));
    }
    let queues: Vec<usize> = n.iter().enumerate().flat_map(|(j, &k)| std::iter::repeat_n(j, k)).collect();
    let states: Vec<Vec<Vec<f64>>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let jumps: Vec<Jump> = queues
                .iter()
                .map(|&q| Jump {
                    t: rng.gen_range(f64::MIN_POSITIVE..1.0),
                    queue: q,
                    size: (rng.gen_range(0.05f64.ln()..=20f64.ln())).exp(),
                })
                .collect();
            let jumps = JumpSchedule::new(jumps)?;
            let mut starts: Vec<f64> = vec![0.0];
            starts.extend(jumps.jumps().iter().map(|j| j.t));
            starts.dedup();
            let pieces = starts
                .into_iter()
                .map(|start| RatePiece { start, rate: surface_or_center(&mut rng, lambda_star, epsilon) })
                .collect();
            let profile = RateProfile::new(lambda_star.to_vec(), epsilon, pieces)?;
            let tr = integrate_jf(net, &profile, &jumps, HORIZON)?;
            Ok((0..EVALS_PER_TRAJECTORY)
                .map(|_| tr.state_at(rng.gen_range(0.0..=HORIZON)))
                .collect())
        })
        .collect::<Result<_>>()?;
    let mut cloud = PointCloud::new(ell, vec![vec![0.0; ell]])?;
    cloud.extend(states.into_iter().flatten())?;
    cloud.metadata = serde_json::json!({
        "n": n,
        "samples": samples,
        "evals_per_trajectory": EVALS_PER_TRAJECTORY,
        "horizon": HORIZON,
        "epsilon": epsilon,
        "seed": seed,
    });
    Ok(cloud)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttractionReport {
    pub trials: usize,
    /// Starts farther from the cloud than its resolution.
    pub exterior_starts: usize,
    pub passes: usize,
    pub pass_fraction: f64,
    /// Smallest observed average decay rate of the distance.
    pub worst_rate: f64,
    pub resolution: f64,
    pub seed: u64,
}

/// Integrates the fluid at `lambda_star` from random starts and checks that
/// the distance to the cloud decays at average rate at least `ε - 0.1ε`.
///
/// Starts are uniform in the cloud's bounding box, widened to at least 1
/// per coordinate. Starts
/// within the cloud's sampling resolution are skipped; with no exterior
/// start the test passes vacuously.
pub fn attraction_test(
    cloud: &PointCloud,
    net: &Network,
    lambda_star: &[f64],
    epsilon: f64,
    trials: usize,
    seed: u64,
) -> Result<AttractionReport> {
    if cloud.is_empty() {
        return Err(Error::Empty("point cloud"));
    }
    check_dim(net.ell(), cloud.ell)?;
    let tol = 0.1 * epsilon;
    let resolution = cloud.resolution(200);
    let box_hi: Vec<f64> = cloud.upper_corner().iter().map(|h| h.max(1.0)).collect();
    let rates: Vec<Option<f64>> = (0..trials as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i);
            let x: Vec<f64> = box_hi.iter().map(|h| rng.gen_range(0.0..*h)).collect();
            let d0 = cloud.distance(&x);
            if d0 <= resolution.max(1e-9) {
                return Ok(None);
            }
            // window short enough that the distance should stay positive
            let tau = if epsilon > 0.0 { (0.5 * d0 / epsilon).min(1.0) } else { 1.0 };
            let tr = integrate_fluid(net, lambda_star, &x, tau)?;
            let d1 = cloud.distance(&tr.final_state());
            Ok(Some((d0 - d1) / tau))
        })
        .collect::<Result<_>>()?;
    let observed: Vec<f64> = rates.into_iter().flatten().collect();
    let passes = observed.iter().filter(|r| **r >= epsilon - tol).count();
    let exterior = observed.len();
    Ok(AttractionReport {
        trials,
        exterior_starts: exterior,
        passes,
        pass_fraction: if exterior == 0 { 1.0 } else { passes as f64 / exterior as f64 },
        worst_rate: observed.iter().copied().fold(f64::INFINITY, f64::min),
        resolution,
        seed,
    })
}
