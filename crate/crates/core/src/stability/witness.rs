//! The instability witness: episode replays, their event diagnostics, and
//! the forced-jump deterministic tracking check.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{norm, simulate, Replica, SimOptions, SimTrace};
use crate::arrivals::{ArrivalPlan, ConcatenatedPlan, EpisodePlan, SlotRng};
use crate::error::{check_dim, Error, Result};
use crate::jf::Witness;
use crate::network::Network;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessConfig {
    pub replications: usize,
    pub seed: u64,
    /// Stand-in for the unknown sensitivity constant in the fluctuation
    /// bound `γcT/(32 C r)`.
    pub fluc_constant: f64,
}

impl Default for WitnessConfig {
    fn default() -> Self {
        Self { replications: 64, seed: 0, fluc_constant: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeDiagnostics {
    pub start: u64,
    pub length: u64,
    /// `c·length/2`.
    pub threshold: f64,
    /// Fraction of replications with `Q_m(start + length) >= threshold`.
    pub exceedance: f64,
    /// Per jump `κ`: fraction where the bulk arrivals emulate the jump.
    pub jump_events: Vec<f64>,
    /// Per inter-jump interval `κ = 0..n`: fraction with small fluctuations.
    pub fluc_events: Vec<f64>,
    /// Fraction where all jump and fluctuation events occur together.
    pub all_events: f64,
    /// Exceedance among replications where all events occur.
    pub exceedance_given_events: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WitnessReport {
    pub config: WitnessConfig,
    pub queue: usize,
    pub c: f64,
    pub d: f64,
    pub episodes: Vec<EpisodeDiagnostics>,
    /// `Q_m` at each episode end, per replication.
    pub final_queue: Vec<Vec<f64>>,
    pub plan: serde_json::Value,
}

impl WitnessReport {
    /// Exceedance of the last episode.
    pub fn exceedance(&self) -> f64 {
        self.episodes.last().map_or(0.0, |e| e.exceedance)
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "witness seed={} replications={} queue={} c={} d={} fluc_constant={}\nplan={}\n",
            self.config.seed,
            self.config.replications,
            self.queue + 1,
            self.c,
            self.d,
            self.config.fluc_constant,
            self.plan
        );
        for (i, e) in self.episodes.iter().enumerate() {
            s += &format!(
                "episode {i}: start={} length={} threshold={} exceedance={} jump_events={:?} fluc_events={:?} all_events={} exceedance_given_events={:?}\n",
                e.start, e.length, e.threshold, e.exceedance, e.jump_events, e.fluc_events, e.all_events,
                e.exceedance_given_events
            );
        }
        s
    }
}

#[derive(Debug, Clone, Copy)]
enum Window {
    Jump { kappa: usize, queue: usize, size: f64, start: u64, end: u64 },
    Fluc { kappa: usize, start: u64, end: u64 },
}

fn windows(ep: &EpisodePlan, t0: u64, len: u64) -> Vec<Window> {
    let l = len as f64;
    let dl = (ep.d * l).floor() as u64;
    let mut w = Vec::new();
    for (k, (&th, (&j, &a))) in ep.theta.iter().zip(ep.jump_queues.iter().zip(&ep.jump_sizes)).enumerate() {
        let s = t0 + (th * l).floor() as u64;
        w.push(Window::Jump { kappa: k, queue: j, size: a, start: s, end: s + dl.max(1) });
    }
    let mut edges = vec![0.0];
    edges.extend_from_slice(&ep.theta);
    edges.push(1.0);
    for k in 0..edges.len() - 1 {
        let s = t0 + (edges[k] * l).floor() as u64 + dl;
        let e = t0 + (edges[k + 1] * l).floor() as u64;
        w.push(Window::Fluc { kappa: k, start: s, end: e.max(s) });
    }
    w
}

struct EpisodeOutcome {
    q_m: f64,
    jump: Vec<bool>,
    fluc: Vec<bool>,
}

fn run_replication(
    net: &Network,
    plan: &ConcatenatedPlan,
    queue: usize,
    cfg: &WitnessConfig,
    r: u64,
) -> Vec<EpisodeOutcome> {
    let ep = &plan.episode;
    let ell = net.ell();
    let pieces = ep.profile.pieces().len() as f64;
    let mut rep = Replica::new(ell, cfg.seed, r);
    let mut mean = vec![0.0; ell];
    let mut out = Vec::new();
    for b in plan.boundaries.windows(2) {
        let (t0, len) = (b[0], b[1] - b[0]);
        let l = len as f64;
        let ws = windows(ep, t0, len);
        let mut sums: Vec<Vec<f64>> = vec![vec![0.0; ell]; ws.len()];
        let mut worst = vec![0.0f64; ws.len()];
        while rep.slot < b[1] {
            let t = rep.slot;
            rep.tick(net, plan);
            plan.mean(t, &mut mean);
            let a = rep.last_arrivals();
            for (i, w) in ws.iter().enumerate() {
                match *w {
                    Window::Jump { start, end, .. } if t >= start && t < end => {
                        sums[i].iter_mut().zip(a).for_each(|(s, x)| *s += x);
                    }
                    Window::Fluc { start, end, .. } if t >= start && t < end => {
                        sums[i].iter_mut().zip(a).zip(&mean).for_each(|((s, x), m)| *s += x - m);
                        worst[i] = worst[i].max(norm(&sums[i]));
                    }
                    _ => {}
                }
            }
        }
        let mut jump = vec![false; ep.theta.len()];
        let mut fluc = vec![false; ep.theta.len() + 1];
        let fluc_bound = ep.gamma_min * ep.c * l / (32.0 * cfg.fluc_constant * pieces);
        for (i, w) in ws.iter().enumerate() {
            match *w {
                Window::Jump { kappa, queue: j, size, .. } => {
                    let mut dev = sums[i].clone();
                    dev[j] -= l * size;
                    jump[kappa] = norm(&dev) <= ep.d * l * (1.0 + 2.0 * ep.mu_bar);
                }
                Window::Fluc { kappa, .. } => fluc[kappa] = worst[i] <= fluc_bound,
            }
        }
        out.push(EpisodeOutcome { q_m: rep.q[queue], jump, fluc });
    }
    out
}

/// Replays `plan` in `cfg.replications` independent replications and
/// estimates `P(Q_m(T_{i+1}) >= c(T_{i+1} - T_i)/2)` per episode.
pub fn run_witness(net: &Network, plan: &ConcatenatedPlan, cfg: &WitnessConfig) -> Result<WitnessReport> {
    check_dim(net.ell(), plan.ell())?;
    if cfg.replications == 0 || !(cfg.fluc_constant > 0.0) {
        return Err(Error::InvalidArgument("need replications > 0 and a positive fluctuation constant".into()));
    }
    let ep = &plan.episode;
    let queue = ep.witness.queue;
    let runs: Vec<Vec<EpisodeOutcome>> = (0..cfg.replications as u64)
        .into_par_iter()
        .map(|r| run_replication(net, plan, queue, cfg, r))
        .collect();
    let rr = runs.len() as f64;
    let mut episodes = Vec::new();
    for (i, b) in plan.boundaries.windows(2).enumerate() {
        let len = b[1] - b[0];
        let threshold = ep.c * len as f64 / 2.0;
        let frac = |f: &dyn Fn(&EpisodeOutcome) -> bool| runs.iter().filter(|r| f(&r[i])).count() as f64 / rr;
        let all = |o: &EpisodeOutcome| o.jump.iter().chain(&o.fluc).all(|x| *x);
        let n_all = runs.iter().filter(|r| all(&r[i])).count();
        let both = runs.iter().filter(|r| all(&r[i]) && r[i].q_m >= threshold).count();
        episodes.push(EpisodeDiagnostics {
            start: b[0],
            length: len,
            threshold,
            exceedance: frac(&|o| o.q_m >= threshold),
            jump_events: (0..ep.theta.len()).map(|k| frac(&|o| o.jump[k])).collect(),
            fluc_events: (0..=ep.theta.len()).map(|k| frac(&|o| o.fluc[k])).collect(),
            all_events: n_all as f64 / rr,
            exceedance_given_events: (n_all > 0).then(|| both as f64 / n_all as f64),
        });
    }
    Ok(WitnessReport {
        config: cfg.clone(),
        queue,
        c: ep.c,
        d: ep.d,
        episodes,
        final_queue: runs.iter().map(|r| r.iter().map(|o| o.q_m).collect()).collect(),
        plan: plan.descriptor(),
    })
}

/// Mean arrivals `λ̄(t)` plus the bulk `T a_κ` at queue `j_κ`, spread
/// evenly over `max(1, ⌊dT⌋)` slots from `⌊Θ_κ T⌋`.
#[derive(Debug, Clone)]
pub struct ForcedPlan {
    pub episode: Arc<EpisodePlan>,
    pub horizon: u64,
}

impl ForcedPlan {
    fn spread(&self) -> u64 {
        ((self.episode.d * self.horizon as f64).floor() as u64).max(1)
    }
}

impl ArrivalPlan for ForcedPlan {
    fn ell(&self) -> usize {
        self.episode.ell()
    }

    fn covers(&self) -> Option<u64> {
        Some(self.horizon)
    }

    fn arrivals(&self, slot: u64, _rng: &mut SlotRng, out: &mut [f64]) {
        self.mean(slot, out);
        let l = self.horizon as f64;
        let spread = self.spread();
        let ep = &self.episode;
        for ((&th, &j), &a) in ep.theta.iter().zip(&ep.jump_queues).zip(&ep.jump_sizes) {
            let s = (th * l).floor() as u64;
            if slot >= s && slot < s + spread {
                out[j] += l * a / spread as f64;
            }
        }
    }

    fn mean(&self, slot: u64, out: &mut [f64]) {
        out.copy_from_slice(self.episode.rate_at(slot as f64 / self.horizon as f64));
    }

    fn descriptor(&self) -> serde_json::Value {
        serde_json::json!({ "forced": *self.episode, "horizon": self.horizon })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ForcedVerdict {
    Pass,
    Fail,
    /// `T` below the configured threshold; nothing asserted.
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForcedRun {
    pub horizon: u64,
    pub queue: usize,
    pub c: f64,
    pub tolerance: f64,
    /// `cT/2 - tolerance·T`.
    pub target: f64,
    pub q_m: f64,
    pub verdict: ForcedVerdict,
    pub trace: SimTrace,
}

impl ForcedRun {
    pub fn passed(&self) -> bool {
        self.verdict == ForcedVerdict::Pass
    }
}

/// Runs one episode of length `horizon` under [`ForcedPlan`] and checks
/// `Q_m(T) >= cT/2 - tolerance·T`. Horizons below `min_horizon` give
/// [`ForcedVerdict::Inconclusive`].
pub fn forced_jump_run(
    net: &Network,
    witness: &Witness,
    horizon: u64,
    tolerance: f64,
    min_horizon: u64,
) -> Result<ForcedRun> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be positive".into()));
    }
    let episode = Arc::new(EpisodePlan::new(net, witness)?);
    let plan = ForcedPlan { episode: episode.clone(), horizon };
    let opts = SimOptions { stride: (horizon / 1000).max(1), full_arrivals: true, schedules: false };
    let trace = simulate(net, &plan, horizon, 0, &opts)?;
    let q_m = trace.final_state()[witness.queue];
    let t = horizon as f64;
    let target = episode.c * t / 2.0 - tolerance * t;
    let verdict = if horizon < min_horizon {
        ForcedVerdict::Inconclusive
    } else if q_m >= target {
        ForcedVerdict::Pass
    } else {
        ForcedVerdict::Fail
    };
    Ok(ForcedRun { horizon, queue: witness.queue, c: episode.c, tolerance, target, q_m, verdict, trace })
}
