//! Violation search for the robust jumping-fluid condition.
//!
//! For every admissible jump-count vector the search maximizes `q_m(1)`
//! over jump times, jump sizes and rate profiles, using grid starts,
//! coordinate ascent and a random local polish. A violation is certified by
//! re-integrating the witness; "no violation found" is relative to the
//! search budget.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{budget_value, enumerate_budgets, gamma_serde, integrate_jf, Jump, JumpSchedule, RatePiece, RateProfile};
use crate::error::{check_dim, Error, Result};
use crate::network::Network;

/// `q_m(1)` above this counts as a violation.
pub const VIOLATION_THRESHOLD: f64 = 1e-6;
const SIZE_MIN: f64 = 0.05;
const SIZE_MAX: f64 = 20.0;
const TIME_MIN: f64 = 1e-3;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Interior points of the uniform jump-time grid on (0, 1).
    pub time_grid: usize,
    /// Points of the geometric jump-size grid on [0.05, 20].
    pub size_grid: usize,
    /// Objective evaluations allowed across all budget vectors.
    pub budget_evals: usize,
    pub max_rounds: usize,
    pub polish_iters: usize,
    pub seed: u64,
    /// Known witnesses evaluated as extra starting points.
    #[serde(default)]
    pub seeds: Vec<Witness>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            time_grid: 17,
            size_grid: 12,
            budget_evals: 60_000,
            max_rounds: 12,
            polish_iters: 300,
            seed: 0,
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RjfStatus {
    Violated,
    NoViolationFound,
}

/// A concrete ε-JF(γ) trajectory with its attained value, sufficient for
/// replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    pub queue: usize,
    #[serde(with = "gamma_serde")]
    pub gamma: Vec<f64>,
    pub n: Vec<usize>,
    pub profile: RateProfile,
    pub jumps: JumpSchedule,
    pub t_eval: f64,
    pub value: f64,
    pub seed: u64,
}

impl Witness {
    /// Re-integrates the trajectory and returns `q_m(t_eval)`.
    pub fn replay(&self, net: &Network) -> Result<f64> {
        let tr = integrate_jf(net, &self.profile, &self.jumps, self.t_eval)?;
        Ok(tr.state_at(self.t_eval)[self.queue])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub evaluations: usize,
    pub budgets_searched: usize,
    pub best_value: f64,
    pub best_n: Vec<usize>,
    /// `γᵀn` of the best budget vector.
    pub budget_consumed: f64,
    pub failed_integrations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RjfVerdict {
    pub status: RjfStatus,
    pub witness: Option<Witness>,
    pub search_stats: SearchStats,
}

#[derive(Debug, Clone, PartialEq)]
struct Candidate {
    queues: Vec<usize>,
    times: Vec<f64>,
    sizes: Vec<f64>,
    /// One rate per inter-jump segment, in time order.
    rates: Vec<Vec<f64>>,
}

struct Ctx<'a> {
    net: &'a Network,
    lambda_star: &'a [f64],
    epsilon: f64,
    m: usize,
}

impl Candidate {
    fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.times.len()).collect();
        idx.sort_by(|&a, &b| self.times[a].total_cmp(&self.times[b]).then(a.cmp(&b)));
        idx
    }

    fn build(&self, ctx: &Ctx) -> Result<(RateProfile, JumpSchedule)> {
        let order = self.order();
        let mut pieces: Vec<RatePiece> = vec![RatePiece { start: 0.0, rate: self.rates[0].clone() }];
        for (k, &i) in order.iter().enumerate() {
            let piece = RatePiece { start: self.times[i], rate: self.rates[k + 1].clone() };
            // zero-length segments are dropped; the later piece wins
            if pieces.last().is_some_and(|p| p.start == piece.start) {
                pieces.pop();
            }
            pieces.push(piece);
        }
        let profile = RateProfile::new(ctx.lambda_star.to_vec(), ctx.epsilon, pieces)?;
        let jumps = order
            .iter()
            .map(|&i| Jump { t: self.times[i], queue: self.queues[i], size: self.sizes[i] })
            .collect();
        Ok((profile, JumpSchedule::new(jumps)?))
    }

    fn value(&self, ctx: &Ctx) -> Result<f64> {
        let (profile, jumps) = self.build(ctx)?;
        let tr = integrate_jf(ctx.net, &profile, &jumps, 1.0)?;
        Ok(tr.state_at(1.0)[ctx.m])
    }

    fn from_witness(w: &Witness) -> Self {
        let jumps = w.jumps.jumps();
        let mut rates = vec![w.profile.rate_at(0.0).to_vec()];
        rates.extend(jumps.iter().map(|j| w.profile.rate_at(j.t).to_vec()));
        Self {
            queues: jumps.iter().map(|j| j.queue).collect(),
            times: jumps.iter().map(|j| j.t).collect(),
            sizes: jumps.iter().map(|j| j.size).collect(),
            rates,
        }
    }
}

struct Evaluator<'a> {
    ctx: Ctx<'a>,
    evals: usize,
    cap: usize,
    failures: usize,
}

impl Evaluator<'_> {
    fn exhausted(&self) -> bool {
        self.evals >= self.cap
    }

    fn eval(&mut self, c: &Candidate) -> f64 {
        self.evals += 1;
        match c.value(&self.ctx) {
            Ok(v) => v,
            Err(_) => {
                self.failures += 1;
                f64::NEG_INFINITY
            }
        }
    }
}

fn clamp_to_ball(rate: Vec<f64>) -> Vec<f64> {
    rate.into_iter().map(|x| x.max(0.0)).collect()
}

fn rate_candidates(lambda_star: &[f64], eps: f64, ascent: Option<&[f64]>) -> Vec<Vec<f64>> {
    let mut out = vec![lambda_star.to_vec()];
    if eps > 0.0 {
        for j in 0..lambda_star.len() {
            for s in [1.0, -1.0] {
                let mut r = lambda_star.to_vec();
                r[j] += s * eps;
                out.push(clamp_to_ball(r));
            }
        }
        if let Some(g) = ascent {
            let r = lambda_star.iter().zip(g).map(|(l, d)| l + eps * d).collect();
            out.push(clamp_to_ball(r));
        }
    }
    out.dedup();
    out
}

/// Unit direction of steepest finite-difference ascent for a uniform rate
/// shift applied to every segment.
fn ascent_direction(ev: &mut Evaluator, cur: &Candidate, base: f64) -> Option<Vec<f64>> {
    let eps = ev.ctx.epsilon;
    if eps == 0.0 {
        return None;
    }
    let h = eps / 4.0;
    let ell = ev.ctx.lambda_star.len();
    let mut g = vec![0.0; ell];
    for j in 0..ell {
        let mut c = cur.clone();
        for r in &mut c.rates {
            *r = ev.ctx.lambda_star.to_vec();
            r[j] += h;
        }
        g[j] = (ev.eval(&c) - base) / h;
    }
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    (n > 0.0 && n.is_finite()).then(|| g.iter().map(|x| x / n).collect())
}

fn coordinate_ascent(ev: &mut Evaluator, mut cur: Candidate, mut best: f64, cfg: &SearchConfig) -> (Candidate, f64) {
    let times: Vec<f64> = (1..=cfg.time_grid).map(|i| i as f64 / (cfg.time_grid + 1) as f64).collect();
    let sizes = size_grid(cfg.size_grid);
    for _ in 0..cfg.max_rounds {
        let start = best;
        for k in 0..cur.times.len() {
            for &t in &times {
                try_update(ev, &mut cur, &mut best, |c| c.times[k] = t);
            }
            for &s in &sizes {
                try_update(ev, &mut cur, &mut best, |c| c.sizes[k] = s);
            }
        }
        let center = {
            let mut c = cur.clone();
            c.rates.iter_mut().for_each(|r| *r = ev.ctx.lambda_star.to_vec());
            ev.eval(&c)
        };
        let g = ascent_direction(ev, &cur, center);
        let rates = rate_candidates(ev.ctx.lambda_star, ev.ctx.epsilon, g.as_deref());
        for p in 0..cur.rates.len() {
            for r in &rates {
                try_update(ev, &mut cur, &mut best, |c| c.rates[p] = r.clone());
            }
        }
        if best <= start + 1e-12 || ev.exhausted() {
            break;
        }
    }
    (cur, best)
}

fn try_update(ev: &mut Evaluator, cur: &mut Candidate, best: &mut f64, f: impl FnOnce(&mut Candidate)) {
    if ev.exhausted() {
        return;
    }
    let mut c = cur.clone();
    f(&mut c);
    if c == *cur {
        return;
    }
    let v = ev.eval(&c);
    if v > *best + 1e-12 {
        *cur = c;
        *best = v;
    }
}

fn size_grid(k: usize) -> Vec<f64> {
    if k <= 1 {
        return vec![1.0];
    }
    let r = (SIZE_MAX / SIZE_MIN).ln() / (k - 1) as f64;
    (0..k).map(|i| SIZE_MIN * (r * i as f64).exp()).collect()
}

fn random_ball_point(rng: &mut ChaCha8Rng, center: &[f64], eps: f64) -> Vec<f64> {
    let mut d: Vec<f64> = center.iter().map(|_| StandardNormal.sample(rng)).collect();
    let n = d.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
    let r = eps * rng.gen::<f64>().powf(1.0 / center.len() as f64);
    d.iter_mut().for_each(|x| *x *= r / n);
    clamp_to_ball(center.iter().zip(&d).map(|(c, x)| c + x).collect())
}

fn polish(ev: &mut Evaluator, mut cur: Candidate, mut best: f64, iters: usize, rng: &mut ChaCha8Rng) -> (Candidate, f64) {
    for _ in 0..iters {
        if ev.exhausted() {
            break;
        }
        let mut c = cur.clone();
        for t in &mut c.times {
            let z: f64 = StandardNormal.sample(rng);
            *t = (*t + 0.03 * z).clamp(TIME_MIN, 1.0 - TIME_MIN);
        }
        for s in &mut c.sizes {
            let z: f64 = StandardNormal.sample(rng);
            *s = (*s * (0.2 * z).exp()).clamp(SIZE_MIN, SIZE_MAX);
        }
        for r in &mut c.rates {
            if rng.gen_bool(0.3) {
                *r = random_ball_point(rng, ev.ctx.lambda_star, ev.ctx.epsilon);
            }
        }
        let v = ev.eval(&c);
        if v > best + 1e-12 {
            cur = c;
            best = v;
        }
    }
    (cur, best)
}

struct BudgetResult {
    candidate: Candidate,
    value: f64,
    evals: usize,
    failures: usize,
}

fn search_budget(ctx: Ctx, n: &[usize], cap: usize, cfg: &SearchConfig, stream: u64) -> BudgetResult {
    let queues: Vec<usize> = n.iter().enumerate().flat_map(|(j, &k)| std::iter::repeat_n(j, k)).collect();
    let k = queues.len();
    let lambda_star = ctx.lambda_star.to_vec();
    let mut ev = Evaluator { ctx, evals: 0, cap, failures: 0 };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);

    let first = 1.0 / (cfg.time_grid + 1) as f64;
    let base = |times: Vec<f64>, size: f64| Candidate {
        queues: queues.clone(),
        times,
        sizes: vec![size; k],
        rates: vec![lambda_star.clone(); k + 1],
    };
    let mut starts = vec![base(vec![first; k], 1.0), base(vec![first; k], SIZE_MAX)];
    if k > 1 {
        let staggered = (0..k).map(|i| first + 0.5 * i as f64 / k as f64).collect();
        starts.push(base(staggered, 1.0));
    }
    for w in &cfg.seeds {
        if w.n == n && w.queue == ev.ctx.m {
            starts.push(Candidate::from_witness(w));
        }
    }
    if k == 0 {
        starts.truncate(1);
        starts.extend(cfg.seeds.iter().filter(|w| w.n == n && w.queue == ev.ctx.m).map(Candidate::from_witness));
    }

    let mut best: Option<(Candidate, f64)> = None;
    for s in starts {
        let v = ev.eval(&s);
        let (c, v) = coordinate_ascent(&mut ev, s, v, cfg);
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((c, v));
        }
    }
    let (c, v) = best.expect("at least one start");
    let (candidate, value) = polish(&mut ev, c, v, cfg.polish_iters, &mut rng);
    BudgetResult { candidate, value, evals: ev.evals, failures: ev.failures }
}

/// Searches for an ε-JF(γ) trajectory with `q_m(1) > 1e-6`.
///
/// `m` is a 0-based queue index.
pub fn check_rjf(
    net: &Network,
    lambda_star: &[f64],
    gamma: &[f64],
    epsilon: f64,
    m: usize,
    search: &SearchConfig,
) -> Result<RjfVerdict> {
    check_dim(net.ell(), lambda_star.len())?;
    check_dim(net.ell(), gamma.len())?;
    if m >= net.ell() {
        return Err(Error::InvalidArgument(format!("queue index {m} out of range")));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    let budgets = enumerate_budgets(gamma)?;
    let cap = (search.budget_evals / budgets.len()).max(2_000);
    let results: Vec<BudgetResult> = budgets
        .par_iter()
        .enumerate()
        .map(|(i, n)| {
            let ctx = Ctx { net, lambda_star, epsilon, m };
            search_budget(ctx, n, cap, search, i as u64)
        })
        .collect();

    // first maximum in enumeration order
    let mut bi = 0;
    for (i, r) in results.iter().enumerate() {
        if r.value > results[bi].value {
            bi = i;
        }
    }
    let best = &results[bi];
    let ctx = Ctx { net, lambda_star, epsilon, m };
    let (profile, jumps) = best.candidate.build(&ctx)?;
    let n = budgets[bi].clone();
    let stats = SearchStats {
        evaluations: results.iter().map(|r| r.evals).sum(),
        budgets_searched: budgets.len(),
        best_value: best.value,
        best_n: n.clone(),
        budget_consumed: budget_value(gamma, &n)?,
        failed_integrations: results.iter().map(|r| r.failures).sum(),
    };
    if best.value > VIOLATION_THRESHOLD {
        let witness = Witness {
            queue: m,
            gamma: gamma.to_vec(),
            n,
            profile,
            jumps,
            t_eval: 1.0,
            value: best.value,
            seed: search.seed,
        };
        let replayed = witness.replay(net)?;
        if (replayed - witness.value).abs() > 1e-9 {
            return Err(Error::Numerical(format!(
                "witness replay gave {replayed}, search recorded {}",
                witness.value
            )));
        }
        Ok(RjfVerdict { status: RjfStatus::Violated, witness: Some(witness), search_stats: stats })
    } else {
        Ok(RjfVerdict { status: RjfStatus::NoViolationFound, witness: None, search_stats: stats })
    }
}
