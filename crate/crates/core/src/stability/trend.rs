//! Monte Carlo trend test for `sup_t E[Q_m(t)] < ∞`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::{median, mean, ols_slope, quantile, trimmed_mean};
use super::Replica;
use crate::arrivals::ArrivalPlan;
use crate::error::{check_dim, Error, Result};
use crate::network::Network;

/// Stream offset for the bootstrap generator, away from replication streams.
const BOOTSTRAP_STREAM: u64 = 1 << 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrendVerdict {
    BoundedTrend,
    GrowingTrend,
    Inconclusive,
}

/// Verdict rules. The growth exponent `b` is the OLS slope of
/// `log2(1 + tm_k)` on the checkpoint index `k`, so `tm ~ t^a` gives
/// `b -> a`. With `(lo, hi)` its bootstrap band at level `confidence`:
///
/// - `GrowingTrend` if `lo > growth_floor` and the slope of the trimmed
///   mean itself has a positive lower bound;
/// - `BoundedTrend` if `hi < growth_floor` (a plateau within noise);
/// - `Inconclusive` otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrendThresholds {
    pub confidence: f64,
    pub bootstrap: usize,
    /// Exponents below this are indistinguishable from a plateau.
    pub growth_floor: f64,
}

impl Default for TrendThresholds {
    fn default() -> Self {
        Self { confidence: 0.9, bootstrap: 1000, growth_floor: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloConfig {
    /// Increasing horizons; [`geometric_horizons`] gives the ratio-2 grid.
    pub horizons: Vec<u64>,
    pub replications: usize,
    pub seed: u64,
    pub trim: f64,
    pub thresholds: TrendThresholds,
}

impl Default for MonteCarloConfig {
    fn default() -> Self {
        Self {
            horizons: geometric_horizons(16, 1 << 17),
            replications: 64,
            seed: 0,
            trim: 0.1,
            thresholds: TrendThresholds::default(),
        }
    }
}

/// `first, 2·first, 4·first, …` up to `last`.
pub fn geometric_horizons(first: u64, last: u64) -> Vec<u64> {
    let mut h = Vec::new();
    let mut t = first.max(1);
    while t <= last {
        h.push(t);
        t *= 2;
    }
    h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueTrend {
    pub queue: usize,
    pub trimmed_mean: Vec<f64>,
    pub median: Vec<f64>,
    /// Reported only; never used by the verdict.
    pub raw_mean: Vec<f64>,
    /// Slope of the trimmed mean per checkpoint index (per doubling).
    pub slope_index: f64,
    pub slope_index_band: (f64, f64),
    /// Slope of the trimmed mean per slot.
    pub slope_horizon: f64,
    /// Per-doubling growth exponent of `1 + tm`.
    pub growth_exponent: f64,
    pub growth_exponent_band: (f64, f64),
    /// `tm_K - tm_{K-1}`.
    pub last_step: f64,
    pub last_step_band: (f64, f64),
    pub verdict: TrendVerdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub config: MonteCarloConfig,
    /// `samples[r][k][j] = Q_j(horizons[k])` in replication `r`.
    pub samples: Vec<Vec<Vec<f64>>>,
    pub queues: Vec<QueueTrend>,
    pub plan: serde_json::Value,
}

impl StabilityReport {
    /// Recomputes every estimate and verdict from the stored samples.
    pub fn recompute(&self) -> Vec<QueueTrend> {
        let ell = self.samples.first().and_then(|r| r.first()).map_or(0, Vec::len);
        (0..ell).map(|j| queue_trend(&self.samples, &self.config, j)).collect()
    }

    pub fn verdict(&self, queue: usize) -> Option<TrendVerdict> {
        self.queues.get(queue).map(|q| q.verdict)
    }

    /// Human-readable report with every verdict input.
    pub fn to_text(&self) -> String {
        let c = &self.config;
        let mut s = format!(
            "monte_carlo seed={} replications={} trim={} confidence={} bootstrap={} growth_floor={}\nplan={}\nhorizons={:?}\n",
            c.seed, c.replications, c.trim, c.thresholds.confidence, c.thresholds.bootstrap, c.thresholds.growth_floor,
            self.plan, c.horizons
        );
        for q in &self.queues {
            s += &format!(
                "queue {}: verdict={:?} growth_exponent={:.6} band=({:.6}, {:.6}) slope_index={:.6} band=({:.6}, {:.6}) slope_horizon={:.3e} last_step={:.6} band=({:.6}, {:.6})\n",
                q.queue + 1, q.verdict, q.growth_exponent, q.growth_exponent_band.0, q.growth_exponent_band.1,
                q.slope_index, q.slope_index_band.0, q.slope_index_band.1,
                q.slope_horizon, q.last_step, q.last_step_band.0, q.last_step_band.1
            );
            s += &format!("  trimmed_mean={:?}\n  median={:?}\n  raw_mean={:?}\n", q.trimmed_mean, q.median, q.raw_mean);
        }
        s
    }
}

fn column(samples: &[Vec<Vec<f64>>], rows: impl Iterator<Item = usize>, k: usize, j: usize) -> Vec<f64> {
    rows.map(|r| samples[r][k][j]).collect()
}

fn fit(tm: &[f64], x_idx: &[f64]) -> (f64, f64, f64) {
    let k = tm.len();
    let step = if k >= 2 { tm[k - 1] - tm[k - 2] } else { 0.0 };
    let logs: Vec<f64> = tm.iter().map(|v| (1.0 + v.max(0.0)).log2()).collect();
    (ols_slope(x_idx, tm), ols_slope(x_idx, &logs), step)
}

fn queue_trend(samples: &[Vec<Vec<f64>>], cfg: &MonteCarloConfig, j: usize) -> QueueTrend {
    let r = samples.len();
    let kk = cfg.horizons.len();
    let x_idx: Vec<f64> = (0..kk).map(|k| k as f64).collect();
    let x_h: Vec<f64> = cfg.horizons.iter().map(|&h| h as f64).collect();
    let cols: Vec<Vec<f64>> = (0..kk).map(|k| column(samples, 0..r, k, j)).collect();
    let tm: Vec<f64> = cols.iter().map(|c| trimmed_mean(c, cfg.trim)).collect();
    let (slope_index, growth_exponent, last_step) = fit(&tm, &x_idx);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(BOOTSTRAP_STREAM + j as u64);
    let mut slopes = Vec::with_capacity(cfg.thresholds.bootstrap);
    let mut steps = Vec::with_capacity(cfg.thresholds.bootstrap);
    let mut exps = Vec::with_capacity(cfg.thresholds.bootstrap);
    let mut idx = vec![0usize; r];
    for _ in 0..cfg.thresholds.bootstrap {
        idx.iter_mut().for_each(|i| *i = rng.gen_range(0..r));
        let btm: Vec<f64> =
            (0..kk).map(|k| trimmed_mean(&column(samples, idx.iter().copied(), k, j), cfg.trim)).collect();
        let (s, e, d) = fit(&btm, &x_idx);
        slopes.push(s);
        exps.push(e);
        steps.push(d);
    }
    let a = (1.0 - cfg.thresholds.confidence) / 2.0;
    let band = |v: &[f64]| (quantile(v, a), quantile(v, 1.0 - a));
    let slope_index_band = band(&slopes);
    let last_step_band = band(&steps);
    let growth_exponent_band = band(&exps);
    let floor = cfg.thresholds.growth_floor;
    let verdict = if growth_exponent_band.0 > floor && slope_index_band.0 > 0.0 {
        TrendVerdict::GrowingTrend
    } else if growth_exponent_band.1 < floor {
        TrendVerdict::BoundedTrend
    } else {
        TrendVerdict::Inconclusive
    };
    QueueTrend {
        queue: j,
        median: cols.iter().map(|c| median(c)).collect(),
        raw_mean: cols.iter().map(|c| mean(c)).collect(),
        slope_horizon: ols_slope(&x_h, &tm),
        trimmed_mean: tm,
        slope_index,
        slope_index_band,
        growth_exponent,
        growth_exponent_band,
        last_step,
        last_step_band,
        verdict,
    }
}

/// Runs `R` replications of `plan` (replication `r` reads stream `r` under
/// `cfg.seed`) and classifies the growth of every queue.
pub fn monte_carlo<P: ArrivalPlan + ?Sized>(net: &Network, plan: &P, cfg: &MonteCarloConfig) -> Result<StabilityReport> {
    check_dim(net.ell(), plan.ell())?;
    if cfg.replications < 8 {
        return Err(Error::InvalidArgument(format!("need at least 8 replications, got {}", cfg.replications)));
    }
    if cfg.horizons.len() < 2 || cfg.horizons.windows(2).any(|w| w[1] <= w[0]) || cfg.horizons[0] == 0 {
        return Err(Error::InvalidArgument("need at least two increasing positive horizons".into()));
    }
    let ell = net.ell();
    let samples: Vec<Vec<Vec<f64>>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| -> Result<Vec<Vec<f64>>> {
            let mut rep = Replica::new(ell, cfg.seed, r);
            let mut rows = Vec::with_capacity(cfg.horizons.len());
            for &h in &cfg.horizons {
                rep.advance(net, plan, h)?;
                rows.push(rep.q.clone());
            }
            Ok(rows)
        })
        .collect::<Result<_>>()?;
    let queues = (0..ell).map(|j| queue_trend(&samples, cfg, j)).collect();
    Ok(StabilityReport { config: cfg.clone(), samples, queues, plan: plan.descriptor() })
}
