//! Stochastic arrival laws and arrival plans.
//!
//! Randomness is counter-based: the draw for `(slot, queue)` in replication
//! `r` reads a fixed window of the ChaCha8 stream `r` under the master seed,
//! so any slot can be regenerated without replaying the ones before it.

mod density;
mod episode;

use std::fmt::Write as _;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Pareto};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use density::{episode_density, sample_episode_density, sigma, EpisodeDensity};
pub use episode::{
    build_episode_schedule, concatenate_episodes, mu_bar, Concatenation, ConcatenatedPlan, EpisodePlan,
    EpisodeSchedule, PilotConfig,
};

/// 32-bit words reserved per `(slot, queue)` draw: two `u64` uniforms.
const WORDS_PER_DRAW: u128 = 4;

/// Per-queue arrival law for one slot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ArrivalSpec {
    Deterministic { rate: f64 },
    /// Zero with probability `1 - w`, else Pareto with scale `x_min` and
    /// shape `1 + gamma`; `w` is set by the mean.
    ParetoMixture { gamma: f64, mean: f64, x_min: f64 },
    EpisodeDensity { gamma: f64, mean: f64, mu_bar: f64 },
}

impl ArrivalSpec {
    pub fn mean(&self) -> f64 {
        match *self {
            Self::Deterministic { rate } => rate,
            Self::ParetoMixture { mean, .. } | Self::EpisodeDensity { mean, .. } => mean,
        }
    }

    /// Validates the spec and precomputes what sampling needs.
    pub fn prepare(&self) -> Result<PreparedSpec> {
        match *self {
            Self::Deterministic { rate } => {
                if !(rate >= 0.0) || !rate.is_finite() {
                    return Err(Error::InvalidArgument(format!("deterministic rate must be >= 0, got {rate}")));
                }
                Ok(PreparedSpec::Deterministic(rate))
            }
            Self::ParetoMixture { gamma, mean, x_min } => {
                let weight = pareto_weight(gamma, mean, x_min)?;
                let dist = Pareto::new(x_min, 1.0 + gamma)
                    .map_err(|e| Error::InvalidArgument(format!("pareto parameters: {e}")))?;
                Ok(PreparedSpec::Pareto { weight, mean, dist })
            }
            Self::EpisodeDensity { gamma, mean, mu_bar } => {
                let table = episode_density(gamma, mu_bar)?;
                table.check_mean(mean)?;
                Ok(PreparedSpec::Episode { table, mean })
            }
        }
    }
}

/// Mixture weight `w = mean·γ / ((1+γ)·x_min)` of the Pareto part.
pub fn pareto_weight(gamma: f64, mean: f64, x_min: f64) -> Result<f64> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "pareto mixture needs finite gamma > 0, got {gamma}; use a deterministic spec for light tails"
        )));
    }
    if !(mean > 0.0) || !(x_min > 0.0) || !mean.is_finite() || !x_min.is_finite() {
        return Err(Error::InvalidArgument("pareto mixture needs mean > 0 and x_min > 0".into()));
    }
    let w = mean * gamma / ((1.0 + gamma) * x_min);
    if w > 1.0 {
        return Err(Error::InvalidArgument(format!(
            "mean {mean} needs mixture weight {w} > 1; lower x_min"
        )));
    }
    Ok(w)
}

#[derive(Debug, Clone)]
pub enum PreparedSpec {
    Deterministic(f64),
    Pareto { weight: f64, mean: f64, dist: Pareto<f64> },
    Episode { table: Arc<EpisodeDensity>, mean: f64 },
}

impl PreparedSpec {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Self::Deterministic(r) => *r,
            Self::Pareto { weight, dist, .. } => {
                let v: f64 = rng.gen();
                let x = dist.sample(rng);
                if v < *weight {
                    x
                } else {
                    0.0
                }
            }
            Self::Episode { table, mean } => table.sample(*mean, rng),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            Self::Deterministic(r) => *r,
            Self::Pareto { mean, .. } | Self::Episode { mean, .. } => *mean,
        }
    }
}

/// One draw from the Pareto mixture.
pub fn sample_pareto_mixture<R: Rng + ?Sized>(gamma: f64, mean: f64, x_min: f64, rng: &mut R) -> Result<f64> {
    let spec = ArrivalSpec::ParetoMixture { gamma, mean, x_min }.prepare()?;
    Ok(spec.sample(rng))
}

/// Random access into the per-replication stream.
#[derive(Debug, Clone)]
pub struct SlotRng {
    rng: ChaCha8Rng,
    ell: usize,
}

impl SlotRng {
    pub fn new(seed: u64, replication: u64, ell: usize) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(replication);
        Self { rng, ell }
    }

    /// The generator positioned at the window of `(slot, queue)`.
    pub fn at(&mut self, slot: u64, queue: usize) -> &mut ChaCha8Rng {
        let pos = (slot as u128 * self.ell as u128 + queue as u128) * WORDS_PER_DRAW;
        self.rng.set_word_pos(pos);
        &mut self.rng
    }
}

/// Source of per-slot arrival vectors.
pub trait ArrivalPlan: Send + Sync {
    fn ell(&self) -> usize;

    /// Number of slots covered, `None` if unbounded.
    fn covers(&self) -> Option<u64>;

    /// Writes the arrival vector for `slot` into `out`.
    fn arrivals(&self, slot: u64, rng: &mut SlotRng, out: &mut [f64]);

    /// Writes `E[A(slot)]` into `out`.
    fn mean(&self, slot: u64, out: &mut [f64]);

    /// Serializable description sufficient to rebuild the plan.
    fn descriptor(&self) -> serde_json::Value;
}

/// The same per-queue law in every slot.
#[derive(Debug, Clone)]
pub struct StationaryPlan {
    specs: Vec<ArrivalSpec>,
    prepared: Vec<PreparedSpec>,
}

impl StationaryPlan {
    pub fn new(specs: Vec<ArrivalSpec>) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::Empty("arrival specs"));
        }
        let prepared = specs.iter().map(ArrivalSpec::prepare).collect::<Result<_>>()?;
        Ok(Self { specs, prepared })
    }

    pub fn deterministic(rates: &[f64]) -> Result<Self> {
        Self::new(rates.iter().map(|&rate| ArrivalSpec::Deterministic { rate }).collect())
    }

    pub fn specs(&self) -> &[ArrivalSpec] {
        &self.specs
    }
}

impl ArrivalPlan for StationaryPlan {
    fn ell(&self) -> usize {
        self.specs.len()
    }

    fn covers(&self) -> Option<u64> {
        None
    }

    fn arrivals(&self, slot: u64, rng: &mut SlotRng, out: &mut [f64]) {
        for (j, p) in self.prepared.iter().enumerate() {
            out[j] = match p {
                PreparedSpec::Deterministic(r) => *r,
                _ => p.sample(rng.at(slot, j)),
            };
        }
    }

    fn mean(&self, _slot: u64, out: &mut [f64]) {
        for (o, s) in out.iter_mut().zip(&self.specs) {
            *o = s.mean();
        }
    }

    fn descriptor(&self) -> serde_json::Value {
        serde_json::json!({ "stationary": self.specs })
    }
}

/// Everything needed to regenerate an arrival matrix bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayDescriptor {
    pub seed: u64,
    pub replication: u64,
    pub slots: u64,
    pub plan: serde_json::Value,
}

/// Arrival matrix rows `slot, queue, value` for `slots` slots.
pub fn export_plan_csv(plan: &dyn ArrivalPlan, seed: u64, replication: u64, slots: u64) -> Result<String> {
    if let Some(c) = plan.covers() {
        if c < slots {
            return Err(Error::PlanTooShort { covered: c, requested: slots });
        }
    }
    let ell = plan.ell();
    let mut rng = SlotRng::new(seed, replication, ell);
    let mut a = vec![0.0; ell];
    let mut out = String::from("slot,queue,value\n");
    for t in 0..slots {
        plan.arrivals(t, &mut rng, &mut a);
        for (j, x) in a.iter().enumerate() {
            let _ = writeln!(out, "{t},{},{x}", j + 1);
        }
    }
    Ok(out)
}
