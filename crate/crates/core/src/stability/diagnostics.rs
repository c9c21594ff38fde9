//! Jump detection against the threshold `θ_t` and the fluid sensitivity
//! ratio.

use serde::{Deserialize, Serialize};

use super::{norm, SimTrace};
use crate::error::{check_dim, Error, Result};
use crate::fluid::integrate_fluid;
use crate::jf::{budget_ok, budget_value};
use crate::network::Network;

/// `θ_t = (M+T-t) / (η ln(M+T-t))`.
pub fn jump_threshold(m: f64, horizon: u64, eta: f64, t: u64) -> f64 {
    let r = m + (horizon - t) as f64;
    r / (eta * r.ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpEntry {
    pub slot: u64,
    pub queue: usize,
    pub value: f64,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JumpLog {
    pub entries: Vec<JumpEntry>,
    /// Jumps per queue.
    pub counts: Vec<usize>,
    /// `γᵀN`, with `∞·0 = 0`.
    pub budget: f64,
    pub within_budget: bool,
}

/// Flags every `A_j(t) > θ_t` for `t < T`.
pub fn detect_jumps(trace: &SimTrace, m: f64, horizon: u64, eta: f64, gamma: &[f64]) -> Result<JumpLog> {
    check_dim(trace.ell, gamma.len())?;
    if !(m > 0.0) || !(eta > 0.0) {
        return Err(Error::InvalidArgument("M and eta must be positive".into()));
    }
    if !trace.has_full_arrivals() || trace.horizon < horizon {
        return Err(Error::InvalidArgument("jump detection needs the full arrival log over [0, T)".into()));
    }
    let mut entries = Vec::new();
    let mut counts = vec![0usize; trace.ell];
    for t in 0..horizon {
        let a = trace.arrival_at(t).expect("full log");
        let th = jump_threshold(m, horizon, eta, t);
        for (j, &v) in a.iter().enumerate() {
            if v > th {
                entries.push(JumpEntry { slot: t, queue: j, value: v, threshold: th });
                counts[j] += 1;
            }
        }
    }
    Ok(JumpLog { budget: budget_value(gamma, &counts)?, within_budget: budget_ok(gamma, &counts)?, entries, counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityReport {
    /// `(t, ‖Q(t)-q(t)‖ / (1 + ‖λ‖ + max_{k<t} ‖Σ_{τ≤k}(A(τ)-λ)‖))`.
    pub profile: Vec<(u64, f64)>,
    pub max_ratio: f64,
}

/// Compares the trace with the fluid trajectory at `lambda` started from
/// `Q(0)`, at every recorded slot.
pub fn sensitivity_check(trace: &SimTrace, net: &Network, lambda: &[f64]) -> Result<SensitivityReport> {
    check_dim(net.ell(), lambda.len())?;
    check_dim(net.ell(), trace.ell)?;
    if !trace.has_full_arrivals() {
        return Err(Error::InvalidArgument("sensitivity check needs the full arrival log".into()));
    }
    let fluid = integrate_fluid(net, lambda, &trace.queues[0], trace.horizon as f64)?;
    let lnorm = norm(lambda);
    let mut partial = vec![0.0; trace.ell];
    let mut dev = 0.0f64;
    let mut profile = Vec::with_capacity(trace.slots.len());
    let mut next = 0u64;
    for (&t, q) in trace.slots.iter().zip(&trace.queues) {
        while next < t {
            let a = trace.arrival_at(next).expect("full log");
            partial.iter_mut().zip(a).zip(lambda).for_each(|((s, a), l)| *s += a - l);
            dev = dev.max(norm(&partial));
            next += 1;
        }
        let qf = fluid.state_at(t as f64);
        let diff: Vec<f64> = q.iter().zip(&qf).map(|(a, b)| a - b).collect();
        profile.push((t, norm(&diff) / (1.0 + lnorm + dev)));
    }
    let max_ratio = profile.iter().map(|p| p.1).fold(0.0, f64::max);
    Ok(SensitivityReport { profile, max_ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arrivals::StationaryPlan;
    use crate::stability::{simulate, SimOptions};

    fn pair_set() -> Network {
        Network::new(3, vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap()
    }

    fn synthetic(arrivals: Vec<Vec<f64>>) -> SimTrace {
        let horizon = arrivals.len() as u64;
        SimTrace {
            ell: 2,
            horizon,
            seed: 0,
            replication: 0,
            stride: horizon,
            slots: vec![0, horizon],
            queues: vec![vec![0.0; 2]; 2],
            arrival_stride: 1,
            arrivals,
            schedules: None,
            plan: serde_json::Value::Null,
        }
    }

    #[test]
    fn threshold_last_slot() {
        let (m, t, eta) = (50.0, 1000, 2.0);
        let want = (m + 1.0) / (eta * (m + 1.0f64).ln());
        assert_eq!(jump_threshold(m, t, eta, t - 1), want);
    }

    #[test]
    fn zero_arrivals_log_nothing() {
        let log = detect_jumps(&synthetic(vec![vec![0.0; 2]; 100]), 10.0, 100, 1.0, &[0.5, f64::INFINITY]).unwrap();
        assert!(log.entries.is_empty());
        assert_eq!(log.counts, vec![0, 0]);
        assert!(log.within_budget);
    }

    #[test]
    fn planted_jump_is_found_once() {
        let (m, h, eta) = (10.0, 200u64, 1.5);
        let mut a = vec![vec![0.3, 0.1]; h as usize];
        let th = jump_threshold(m, h, eta, 77);
        a[77][1] = 2.0 * th;
        let log = detect_jumps(&synthetic(a.clone()), m, h, eta, &[0.5, 0.6]).unwrap();
        assert_eq!(log.entries.len(), 1);
        assert_eq!((log.entries[0].slot, log.entries[0].queue), (77, 1));
        assert!(log.entries[0].value > log.entries[0].threshold);
        assert!((log.budget - 0.6).abs() < 1e-15);
        // sub-threshold perturbations leave the log alone
        for t in 0..h as usize {
            if t != 77 {
                a[t][0] = 0.9 * jump_threshold(m, h, eta, t as u64);
            }
        }
        assert_eq!(detect_jumps(&synthetic(a), m, h, eta, &[0.5, 0.6]).unwrap(), log);
    }

    #[test]
    fn sensitivity_of_zero_and_exact_rates() {
        let net = pair_set();
        let zero = StationaryPlan::deterministic(&[0.0; 3]).unwrap();
        let tr = simulate(&net, &zero, 100, 0, &SimOptions::default()).unwrap();
        assert_eq!(sensitivity_check(&tr, &net, &[0.0; 3]).unwrap().max_ratio, 0.0);

        let lam = [0.5, 0.5, 0.5];
        let plan = StationaryPlan::deterministic(&lam).unwrap();
        let short = simulate(&net, &plan, 1000, 0, &SimOptions::default()).unwrap();
        let long = simulate(&net, &plan, 10_000, 0, &SimOptions::default()).unwrap();
        let a = sensitivity_check(&short, &net, &lam).unwrap().max_ratio;
        let b = sensitivity_check(&long, &net, &lam).unwrap().max_ratio;
        assert!(a.is_finite() && a < 5.0);
        assert!((b - a).abs() < 1e-9, "{a} {b}");
    }
}
