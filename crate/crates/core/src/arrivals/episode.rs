//! Episodes: a JF witness replayed as a time-scaled stochastic arrival
//! plan, and the concatenation of episodes with growing lengths.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{episode_density, ArrivalPlan, ArrivalSpec, EpisodeDensity, SlotRng};
use crate::error::{Error, Result};
use crate::jf::{integrate_jf, Jump, JumpSchedule, RateProfile, Witness};
use crate::network::Network;
use crate::stability::{trimmed_mean, Replica};

/// Staggers tried, largest first, when a witness has coincident jumps.
const STAGGERS: [f64; 6] = [0.02, 0.01, 0.005, 0.002, 0.001, 1e-4];

/// `μ̄ = 1 + max‖μ‖ + ‖λ*‖ + ε`.
pub fn mu_bar(net: &Network, lambda_star: &[f64], epsilon: f64) -> f64 {
    let l = lambda_star.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 + net.max_service_norm() + l + epsilon
}

/// Constants of one episode derived from a violating witness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodePlan {
    pub witness: Witness,
    /// The witness with coincident jumps pulled apart, if needed.
    pub profile: RateProfile,
    pub jumps: JumpSchedule,
    /// Jump fractions `0 < Θ_1 < … < Θ_n < 1`.
    pub theta: Vec<f64>,
    pub jump_sizes: Vec<f64>,
    pub jump_queues: Vec<usize>,
    /// `q_m(1)` of the (staggered) trajectory.
    pub c: f64,
    pub d: f64,
    pub mu_bar: f64,
    /// `min(1, min_j γ_j)`.
    pub gamma_min: f64,
}

fn strictly_inside(jumps: &[Jump]) -> bool {
    jumps.first().is_none_or(|j| j.t > 0.0)
        && jumps.last().is_none_or(|j| j.t < 1.0)
        && jumps.windows(2).all(|w| w[1].t > w[0].t)
}

fn stagger(jumps: &[Jump], delta: f64) -> Vec<Jump> {
    let mut out: Vec<Jump> = Vec::with_capacity(jumps.len());
    for j in jumps {
        let lo = out.last().map_or(delta, |p: &Jump| p.t + delta);
        out.push(Jump { t: j.t.max(lo), ..*j });
    }
    out
}

impl EpisodePlan {
    pub fn new(net: &Network, witness: &Witness) -> Result<Self> {
        if !(witness.value > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "episode needs a violating witness, q_m(1) = {}",
                witness.value
            )));
        }
        let profile = witness.profile.clone();
        let eval = |jumps: &JumpSchedule| -> Result<f64> {
            Ok(integrate_jf(net, &profile, jumps, 1.0)?.state_at(1.0)[witness.queue])
        };
        let (jumps, c) = if strictly_inside(witness.jumps.jumps()) {
            (witness.jumps.clone(), witness.value)
        } else {
            let mut found = None;
            for delta in STAGGERS {
                let s = stagger(witness.jumps.jumps(), delta);
                if !strictly_inside(&s) {
                    continue;
                }
                let js = JumpSchedule::new(s)?;
                let c = eval(&js)?;
                if c > 0.5 * witness.value {
                    found = Some((js, c));
                    break;
                }
            }
            found.ok_or_else(|| {
                Error::Numerical("could not separate coincident jump times without losing the violation".into())
            })?
        };
        let theta: Vec<f64> = jumps.jumps().iter().map(|j| j.t).collect();
        let jump_sizes: Vec<f64> = jumps.jumps().iter().map(|j| j.size).collect();
        let jump_queues: Vec<usize> = jumps.jumps().iter().map(|j| j.queue).collect();
        let mu_bar = mu_bar(net, &profile.lambda_star, profile.epsilon);
        let gamma_min = witness.gamma.iter().copied().fold(1.0, f64::min);
        let d = guard_constant(gamma_min, c, mu_bar, &theta, &jump_sizes);
        Ok(Self { witness: witness.clone(), profile, jumps, theta, jump_sizes, jump_queues, c, d, mu_bar, gamma_min })
    }

    /// Rate `λ(s)` of the JF trajectory at normalized time `s`.
    pub fn rate_at(&self, s: f64) -> &[f64] {
        self.profile.rate_at(s)
    }

    pub fn ell(&self) -> usize {
        self.profile.lambda_star.len()
    }
}

/// `d = ½ min{γc/(4(1+4μ̄)), min gap of 0,Θ_1,…,Θ_n,1, min a/(1+2μ̄)}`,
/// with the last term zero when there are no jumps.
pub fn guard_constant(gamma: f64, c: f64, mu_bar: f64, theta: &[f64], sizes: &[f64]) -> f64 {
    let first = gamma * c / (4.0 * (1.0 + 4.0 * mu_bar));
    let mut edges = vec![0.0];
    edges.extend_from_slice(theta);
    edges.push(1.0);
    let gap = edges.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let size = if sizes.is_empty() {
        0.0
    } else {
        sizes.iter().copied().fold(f64::INFINITY, f64::min) / (1.0 + 2.0 * mu_bar)
    };
    0.5 * first.min(gap).min(size)
}

/// Per-queue densities for the heavy queues of an episode.
fn tables(ep: &EpisodePlan) -> Result<Vec<Option<Arc<EpisodeDensity>>>> {
    ep.witness
        .gamma
        .iter()
        .map(|&g| if g.is_finite() { episode_density(g, ep.mu_bar).map(Some) } else { Ok(None) })
        .collect()
}

fn episode_draw(
    tables: &[Option<Arc<EpisodeDensity>>],
    lambda_bar: &[f64],
    slot: u64,
    rng: &mut SlotRng,
    out: &mut [f64],
) {
    for (j, t) in tables.iter().enumerate() {
        out[j] = match t {
            None => lambda_bar[j],
            Some(t) => t.sample(lambda_bar[j], rng.at(slot, j)),
        };
    }
}

/// One episode on slots `[t0, t0 + T)`; slots before `t0` carry no
/// arrivals.
#[derive(Debug, Clone)]
pub struct EpisodeSchedule {
    pub episode: Arc<EpisodePlan>,
    pub t0: u64,
    pub length: u64,
    tables: Vec<Option<Arc<EpisodeDensity>>>,
}

/// Assigns each slot of `[t0, t0 + T)` its arrival law: deterministic
/// `λ̄_j(t)` for light queues and the episode density with mean `λ̄_j(t)`
/// for heavy ones, where `λ̄(t) = λ((t - t0)/T)`.
pub fn build_episode_schedule(episode: Arc<EpisodePlan>, length: u64, t0: u64) -> Result<EpisodeSchedule> {
    if length == 0 {
        return Err(Error::InvalidArgument("episode length must be at least one slot".into()));
    }
    let tables = tables(&episode)?;
    for (j, t) in tables.iter().enumerate() {
        if let Some(t) = t {
            for p in episode.profile.pieces() {
                t.check_mean(p.rate[j])?;
            }
        }
    }
    Ok(EpisodeSchedule { episode, t0, length, tables })
}

impl EpisodeSchedule {
    pub fn lambda_bar(&self, slot: u64) -> Vec<f64> {
        if slot < self.t0 {
            return vec![0.0; self.episode.ell()];
        }
        self.episode.rate_at((slot - self.t0) as f64 / self.length as f64).to_vec()
    }

    /// Per-queue laws in effect at `slot`.
    pub fn spec_at(&self, slot: u64) -> Vec<ArrivalSpec> {
        let lb = self.lambda_bar(slot);
        self.episode
            .witness
            .gamma
            .iter()
            .zip(lb)
            .map(|(&gamma, mean)| {
                if gamma.is_finite() && slot >= self.t0 {
                    ArrivalSpec::EpisodeDensity { gamma, mean, mu_bar: self.episode.mu_bar }
                } else {
                    ArrivalSpec::Deterministic { rate: mean }
                }
            })
            .collect()
    }
}

impl ArrivalPlan for EpisodeSchedule {
    fn ell(&self) -> usize {
        self.episode.ell()
    }

    fn covers(&self) -> Option<u64> {
        Some(self.t0 + self.length)
    }

    fn arrivals(&self, slot: u64, rng: &mut SlotRng, out: &mut [f64]) {
        if slot < self.t0 {
            out.iter_mut().for_each(|x| *x = 0.0);
            return;
        }
        let lb = self.episode.rate_at((slot - self.t0) as f64 / self.length as f64);
        episode_draw(&self.tables, lb, slot, rng, out);
    }

    fn mean(&self, slot: u64, out: &mut [f64]) {
        out.copy_from_slice(&self.lambda_bar(slot));
    }

    fn descriptor(&self) -> serde_json::Value {
        serde_json::json!({ "episode": *self.episode, "t0": self.t0, "length": self.length })
    }
}

/// Episodes `[T_i, T_{i+1})` back to back.
#[derive(Debug, Clone)]
pub struct ConcatenatedPlan {
    pub episode: Arc<EpisodePlan>,
    /// `T_0 = 0 < T_1 < …`.
    pub boundaries: Vec<u64>,
    tables: Vec<Option<Arc<EpisodeDensity>>>,
}

impl ConcatenatedPlan {
    pub fn new(episode: Arc<EpisodePlan>, boundaries: Vec<u64>) -> Result<Self> {
        if boundaries.first() != Some(&0) || boundaries.windows(2).any(|w| w[1] <= w[0]) || boundaries.len() < 2 {
            return Err(Error::InvalidArgument("boundaries must start at 0 and increase".into()));
        }
        let tables = build_episode_schedule(episode.clone(), 1, 0)?.tables;
        Ok(Self { episode, boundaries, tables })
    }

    fn locate(&self, slot: u64) -> (u64, u64) {
        let i = self.boundaries.partition_point(|b| *b <= slot).clamp(1, self.boundaries.len() - 1) - 1;
        (self.boundaries[i], self.boundaries[i + 1] - self.boundaries[i])
    }

    pub fn lambda_bar(&self, slot: u64) -> &[f64] {
        let (t0, len) = self.locate(slot);
        self.episode.rate_at((slot - t0) as f64 / len as f64)
    }
}

impl ArrivalPlan for ConcatenatedPlan {
    fn ell(&self) -> usize {
        self.episode.ell()
    }

    fn covers(&self) -> Option<u64> {
        self.boundaries.last().copied()
    }

    fn arrivals(&self, slot: u64, rng: &mut SlotRng, out: &mut [f64]) {
        let lb = self.lambda_bar(slot);
        episode_draw(&self.tables, lb, slot, rng, out);
    }

    fn mean(&self, slot: u64, out: &mut [f64]) {
        out.copy_from_slice(self.lambda_bar(slot));
    }

    fn descriptor(&self) -> serde_json::Value {
        serde_json::json!({ "episode": *self.episode, "boundaries": self.boundaries })
    }
}

/// Monte Carlo settings for estimating `E‖Q(T_i)‖`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PilotConfig {
    pub replications: usize,
    pub trim: f64,
    pub seed: u64,
    /// Refuse plans longer than this many slots.
    pub max_slots: u64,
}

impl Default for PilotConfig {
    fn default() -> Self {
        Self { replications: 64, trim: 0.1, seed: 0, max_slots: 1 << 26 }
    }
}

#[derive(Debug, Clone)]
pub struct Concatenation {
    pub plan: ConcatenatedPlan,
    /// `T_0, T_1, …, T_k` for `k` episodes.
    pub boundaries: Vec<u64>,
    /// Trimmed-mean estimates of `E‖Q(T_i)‖` for `i = 1..k-1`.
    pub estimates: Vec<f64>,
    pub pilot: PilotConfig,
}

/// `T_{i+1} = T_i + max{T_i, ⌈10·E‖Q(T_i)‖/c⌉}`.
pub fn next_boundary(t_i: u64, estimate: f64, c: f64) -> u64 {
    let extra = (10.0 * estimate.max(0.0) / c).ceil();
    let extra = if extra >= u64::MAX as f64 { u64::MAX / 4 } else { extra as u64 };
    t_i + t_i.max(extra)
}

/// Builds `episodes` episodes with `T_1 = base_T`, estimating each
/// `E‖Q(T_i)‖` from pilot replications of the plan built so far.
pub fn concatenate_episodes(
    net: &Network,
    witness: &Witness,
    base_t: u64,
    episodes: usize,
    pilot: &PilotConfig,
) -> Result<Concatenation> {
    if !(witness.value > 0.0) {
        return Err(Error::InvalidArgument(format!("c = q_m(1) must be positive, got {}", witness.value)));
    }
    if base_t < 2 || episodes == 0 {
        return Err(Error::InvalidArgument("need base_T >= 2 and at least one episode".into()));
    }
    let episode = Arc::new(EpisodePlan::new(net, witness)?);
    let c = episode.c;
    let ell = net.ell();
    let mut boundaries = vec![0, base_t];
    let mut estimates = Vec::new();
    let mut replicas: Vec<Replica> =
        (0..pilot.replications as u64).map(|r| Replica::new(ell, pilot.seed, r)).collect();
    while boundaries.len() <= episodes {
        let plan = ConcatenatedPlan::new(episode.clone(), boundaries.clone())?;
        let until = *boundaries.last().expect("nonempty");
        replicas.par_iter_mut().try_for_each(|r| r.advance(net, &plan, until))?;
        let norms: Vec<f64> = replicas.iter().map(|r| r.q.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        let est = trimmed_mean(&norms, pilot.trim);
        estimates.push(est);
        let next = next_boundary(until, est, c);
        if next > pilot.max_slots {
            return Err(Error::InvalidArgument(format!(
                "episode boundary {next} exceeds max_slots {}",
                pilot.max_slots
            )));
        }
        boundaries.push(next);
    }
    let plan = ConcatenatedPlan::new(episode, boundaries.clone())?;
    Ok(Concatenation { plan, boundaries, estimates, pilot: pilot.clone() })
}
