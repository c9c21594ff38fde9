//! Discrete-time Max-Weight simulation and the estimators built on it.
//!
//! A replication starts from `Q(0) = 0` and applies
//! `Q(t+1) = [Q(t) - μ(t)]⁺ + A(t)` with `μ(t)` the canonical Max-Weight
//! pick at `Q(t)`.

mod diagnostics;
mod stats;
mod trend;
mod witness;

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::arrivals::{ArrivalPlan, SlotRng};
use crate::error::{check_dim, Error, Result};
use crate::network::{Network, ServiceVector, SIM_TIE_TOL};

pub use diagnostics::{detect_jumps, jump_threshold, sensitivity_check, JumpEntry, JumpLog, SensitivityReport};
pub use stats::{mean, median, ols_slope, quantile, trimmed_mean};
pub use trend::{
    geometric_horizons, monte_carlo, MonteCarloConfig, QueueTrend, StabilityReport, TrendThresholds, TrendVerdict,
};
pub use witness::{
    forced_jump_run, run_witness, EpisodeDiagnostics, ForcedPlan, ForcedRun, ForcedVerdict, WitnessConfig,
    WitnessReport,
};

/// `[q - μ]⁺ + a`.
pub fn step(q: &[f64], mu: &ServiceVector, a: &[f64]) -> Result<Vec<f64>> {
    check_dim(q.len(), mu.len())?;
    check_dim(q.len(), a.len())?;
    if q.iter().chain(a).any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidArgument("queue and arrival vectors must be nonnegative".into()));
    }
    Ok(q.iter().zip(mu.rates()).zip(a).map(|((q, m), a)| (q - m).max(0.0) + a).collect())
}

/// Index of the canonical Max-Weight pick in the service set.
pub(crate) fn pick_index(net: &Network, q: &[f64]) -> usize {
    let set = net.service_set();
    let mut best = f64::NEG_INFINITY;
    for v in set {
        best = best.max(v.score(q));
    }
    set.iter().position(|v| v.score(q) >= best - SIM_TIE_TOL).expect("service set is nonempty")
}

fn ensure_covers(plan: &(impl ArrivalPlan + ?Sized), until: u64) -> Result<()> {
    match plan.covers() {
        Some(c) if c < until => Err(Error::PlanTooShort { covered: c, requested: until }),
        _ => Ok(()),
    }
}

/// One sample path, advanced slot by slot.
#[derive(Debug, Clone)]
pub struct Replica {
    pub q: Vec<f64>,
    pub slot: u64,
    rng: SlotRng,
    a: Vec<f64>,
}

impl Replica {
    pub fn new(ell: usize, seed: u64, replication: u64) -> Self {
        Self { q: vec![0.0; ell], slot: 0, rng: SlotRng::new(seed, replication, ell), a: vec![0.0; ell] }
    }

    /// Runs one slot; returns the schedule index used and leaves `A(t)` in
    /// [`Replica::last_arrivals`].
    pub fn tick<P: ArrivalPlan + ?Sized>(&mut self, net: &Network, plan: &P) -> usize {
        let k = pick_index(net, &self.q);
        plan.arrivals(self.slot, &mut self.rng, &mut self.a);
        for ((q, m), a) in self.q.iter_mut().zip(net.service_set()[k].rates()).zip(&self.a) {
            *q = (*q - m).max(0.0) + a;
        }
        self.slot += 1;
        k
    }

    pub fn last_arrivals(&self) -> &[f64] {
        &self.a
    }

    /// Runs until `slot == until`.
    pub fn advance<P: ArrivalPlan + ?Sized>(&mut self, net: &Network, plan: &P, until: u64) -> Result<()> {
        check_dim(net.ell(), plan.ell())?;
        check_dim(net.ell(), self.q.len())?;
        ensure_covers(plan, until)?;
        while self.slot < until {
            self.tick(net, plan);
        }
        Ok(())
    }
}

/// What [`simulate`] keeps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Record `Q(t)` (and `A(t)` unless the log is full) every `stride` slots.
    pub stride: u64,
    /// Keep `A(t)` for every slot.
    pub full_arrivals: bool,
    /// Keep the schedule index of every slot.
    pub schedules: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self { stride: 1, full_arrivals: true, schedules: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub ell: usize,
    pub horizon: u64,
    pub seed: u64,
    pub replication: u64,
    pub stride: u64,
    /// Recorded slots: multiples of `stride` below the horizon, then the horizon.
    pub slots: Vec<u64>,
    pub queues: Vec<Vec<f64>>,
    /// `A(t)` every `arrival_stride` slots, for `t < horizon`.
    pub arrival_stride: u64,
    pub arrivals: Vec<Vec<f64>>,
    /// Service-set index per slot, when requested.
    pub schedules: Option<Vec<usize>>,
    pub plan: serde_json::Value,
}

impl SimTrace {
    pub fn arrival_at(&self, t: u64) -> Option<&[f64]> {
        if t >= self.horizon || !t.is_multiple_of(self.arrival_stride) {
            return None;
        }
        self.arrivals.get((t / self.arrival_stride) as usize).map(Vec::as_slice)
    }

    pub fn has_full_arrivals(&self) -> bool {
        self.arrival_stride == 1
    }

    pub fn final_state(&self) -> &[f64] {
        self.queues.last().expect("trace records the horizon")
    }

    /// `Q` at a recorded slot.
    pub fn queue_at(&self, t: u64) -> Option<&[f64]> {
        self.slots.binary_search(&t).ok().map(|i| self.queues[i].as_slice())
    }

    pub fn max_norm(&self) -> f64 {
        self.queues.iter().map(|q| norm(q)).fold(0.0, f64::max)
    }

    /// Checks the evolution identity on every recorded consecutive pair for
    /// which `A(t)` and the schedule are known; returns the pair count.
    pub fn check_evolution(&self, net: &Network) -> Result<usize> {
        let Some(sched) = &self.schedules else { return Ok(0) };
        let mut checked = 0;
        for w in 0..self.slots.len().saturating_sub(1) {
            let t = self.slots[w];
            if self.slots[w + 1] != t + 1 {
                continue;
            }
            let Some(a) = self.arrival_at(t) else { continue };
            let next = step(&self.queues[w], &net.service_set()[sched[t as usize]], a)?;
            if next != self.queues[w + 1] {
                return Err(Error::Numerical(format!("evolution identity fails at slot {t}")));
            }
            checked += 1;
        }
        Ok(checked)
    }

    /// Rows `slot,Q_1..Q_ℓ,A_1..A_ℓ`; the arrival columns are empty where
    /// `A(t)` was not kept.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("slot");
        for j in 1..=self.ell {
            let _ = write!(out, ",Q_{j}");
        }
        for j in 1..=self.ell {
            let _ = write!(out, ",A_{j}");
        }
        out.push('\n');
        for (t, q) in self.slots.iter().zip(&self.queues) {
            let _ = write!(out, "{t}");
            for x in q {
                let _ = write!(out, ",{x}");
            }
            match self.arrival_at(*t) {
                Some(a) => a.iter().for_each(|x| {
                    let _ = write!(out, ",{x}");
                }),
                None => (0..self.ell).for_each(|_| out.push(',')),
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Replication 0 of [`simulate_replication`].
pub fn simulate<P: ArrivalPlan + ?Sized>(
    net: &Network,
    plan: &P,
    horizon: u64,
    seed: u64,
    opts: &SimOptions,
) -> Result<SimTrace> {
    simulate_replication(net, plan, horizon, seed, 0, opts)
}

pub fn simulate_replication<P: ArrivalPlan + ?Sized>(
    net: &Network,
    plan: &P,
    horizon: u64,
    seed: u64,
    replication: u64,
    opts: &SimOptions,
) -> Result<SimTrace> {
    check_dim(net.ell(), plan.ell())?;
    ensure_covers(plan, horizon)?;
    if opts.stride == 0 {
        return Err(Error::InvalidArgument("stride must be positive".into()));
    }
    let ell = net.ell();
    let arrival_stride = if opts.full_arrivals { 1 } else { opts.stride };
    let mut r = Replica::new(ell, seed, replication);
    let mut slots = Vec::new();
    let mut queues = Vec::new();
    let mut arrivals = Vec::new();
    let mut schedules = opts.schedules.then(Vec::new);
    while r.slot < horizon {
        let t = r.slot;
        if t.is_multiple_of(opts.stride) {
            slots.push(t);
            queues.push(r.q.clone());
        }
        let k = r.tick(net, plan);
        if t.is_multiple_of(arrival_stride) {
            arrivals.push(r.last_arrivals().to_vec());
        }
        if let Some(s) = schedules.as_mut() {
            s.push(k);
        }
    }
    slots.push(horizon);
    queues.push(r.q.clone());
    Ok(SimTrace {
        ell,
        horizon,
        seed,
        replication,
        stride: opts.stride,
        slots,
        queues,
        arrival_stride,
        arrivals,
        schedules,
        plan: plan.descriptor(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::{ArrivalSpec, StationaryPlan};

    fn pair_set() -> Network {
        Network::new(3, vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap()
    }

    fn sv(v: &[f64]) -> ServiceVector {
        ServiceVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn step_examples() {
        assert_eq!(step(&[2.0, 0.0, 5.0], &sv(&[1.0, 1.0, 1.0]), &[0.0, 3.0, 0.0]).unwrap(), vec![1.0, 3.0, 4.0]);
        assert_eq!(step(&[0.0; 3], &sv(&[1.0, 0.0, 1.0]), &[0.5, 2.0, 0.0]).unwrap(), vec![0.5, 2.0, 0.0]);
        assert_eq!(step(&[1.0, 1.0], &sv(&[2.0, 0.0]), &[0.0, 0.0]).unwrap(), vec![0.0, 1.0]);
        assert!(step(&[1.0], &sv(&[1.0, 0.0]), &[0.0]).is_err());
    }

    #[test]
    fn step_is_monotone_in_arrivals() {
        let mu = sv(&[1.0, 0.0, 1.0]);
        let q = [0.3, 2.0, 0.0];
        let base = step(&q, &mu, &[0.1, 0.0, 0.2]).unwrap();
        let more = step(&q, &mu, &[0.6, 0.0, 0.9]).unwrap();
        assert!(more.iter().sum::<f64>() >= base.iter().sum::<f64>());
    }

    #[test]
    fn zero_arrivals_keep_queues_empty() {
        let plan = StationaryPlan::deterministic(&[0.0; 3]).unwrap();
        let tr = simulate(&pair_set(), &plan, 500, 1, &SimOptions::default()).unwrap();
        assert!(tr.queues.iter().all(|q| q.iter().all(|x| *x == 0.0)));
    }

    #[test]
    fn interior_deterministic_plateaus() {
        let plan = StationaryPlan::deterministic(&[0.5, 0.5, 0.5]).unwrap();
        let opts = SimOptions { stride: 100, full_arrivals: false, schedules: false };
        let short = simulate(&pair_set(), &plan, 1000, 1, &opts).unwrap().max_norm();
        let long = simulate(&pair_set(), &plan, 10_000, 1, &opts).unwrap().max_norm();
        assert!(long <= short + 1e-9, "{short} {long}");
        assert!(long < 5.0);
    }

    #[test]
    fn replay_and_evolution_identity() {
        let plan = StationaryPlan::new(vec![
            ArrivalSpec::ParetoMixture { gamma: 0.6, mean: 0.5, x_min: 1.0 },
            ArrivalSpec::ParetoMixture { gamma: 0.6, mean: 0.5, x_min: 1.0 },
            ArrivalSpec::Deterministic { rate: 0.25 },
        ])
        .unwrap();
        let opts = SimOptions { schedules: true, ..Default::default() };
        let a = simulate(&pair_set(), &plan, 2000, 9, &opts).unwrap();
        let b = simulate(&pair_set(), &plan, 2000, 9, &opts).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.check_evolution(&pair_set()).unwrap(), 2000);
        assert_eq!(a.queues[0], vec![0.0; 3]);
        let c = simulate(&pair_set(), &plan, 2000, 10, &opts).unwrap();
        assert_ne!(a.queues, c.queues);
    }

    #[test]
    fn thinned_trace_csv() {
        let plan = StationaryPlan::deterministic(&[0.5, 0.25, 0.25]).unwrap();
        let opts = SimOptions { stride: 10, full_arrivals: false, schedules: false };
        let tr = simulate(&pair_set(), &plan, 35, 0, &opts).unwrap();
        assert_eq!(tr.slots, vec![0, 10, 20, 30, 35]);
        let csv = tr.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "slot,Q_1,Q_2,Q_3,A_1,A_2,A_3");
        assert!(lines[1].ends_with(",0.5,0.25,0.25"));
        assert!(lines[5].ends_with(",,,"));
    }

    #[test]
    fn mismatched_plan_is_rejected() {
        let net = pair_set();
        let plan = StationaryPlan::deterministic(&[0.5, 0.5]).unwrap();
        assert!(simulate(&net, &plan, 10, 0, &SimOptions::default()).is_err());
    }
}
