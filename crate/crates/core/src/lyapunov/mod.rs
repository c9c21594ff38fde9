//! Numerical checks of special ε-Lyapunov functions.
//!
//! A function passes when no counterexample turns up at the sample budget;
//! a failure always comes with a concrete point that can be rechecked.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::fluid::integrate_fluid;
use crate::jf::{sample_reachable, PointCloud};
use crate::network::Network;

/// Nearest-neighbour probe size for the cloud resolution.
const RESOLUTION_PROBE: usize = 200;
/// Counterexamples kept per property.
const MAX_COUNTEREXAMPLES: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum CandidateKind {
    DistanceToCloud { points: usize, heavy_closure: bool },
    UserSupplied { name: String },
}

type Evaluator = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A candidate `V: R_+^ℓ -> R_+` with its heavy coordinates.
#[derive(Clone)]
pub struct LyapunovCandidate {
    pub ell: usize,
    pub kind: CandidateKind,
    pub heavy: Vec<usize>,
    pub epsilon: f64,
    cloud: Option<Arc<PointCloud>>,
    eval: Evaluator,
}

impl fmt::Debug for LyapunovCandidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LyapunovCandidate")
            .field("ell", &self.ell)
            .field("kind", &self.kind)
            .field("heavy", &self.heavy)
            .field("epsilon", &self.epsilon)
            .finish()
    }
}

fn check_heavy(ell: usize, heavy: &[usize]) -> Result<()> {
    if heavy.iter().any(|&j| j >= ell) {
        return Err(Error::InvalidArgument(format!("heavy queue index out of range for ell = {ell}")));
    }
    Ok(())
}

impl LyapunovCandidate {
    /// Wraps an arbitrary function; `f(0)` must be zero within 1e-9.
    pub fn user(
        ell: usize,
        name: &str,
        heavy: Vec<usize>,
        epsilon: f64,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        check_heavy(ell, &heavy)?;
        let v0 = f(&vec![0.0; ell]);
        if !(v0.abs() <= 1e-9) {
            return Err(Error::InvalidArgument(format!("candidate has V(0) = {v0}")));
        }
        Ok(Self { ell, kind: CandidateKind::UserSupplied { name: name.into() }, heavy, epsilon, cloud: None, eval: Arc::new(f) })
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }

    pub fn cloud(&self) -> Option<&PointCloud> {
        self.cloud.as_deref()
    }
}

/// Distance from `x` to `p + cone{e_j : j heavy}`.
fn closure_dist2(p: &[f64], x: &[f64], heavy: &[bool], cap: f64) -> f64 {
    let mut s = 0.0;
    for (j, (a, b)) in p.iter().zip(x).enumerate() {
        let d = if heavy[j] { (a - b).max(0.0) } else { a - b };
        s += d * d;
        if s >= cap {
            break;
        }
    }
    s
}

/// `V(x) = d(x, W̃)` with `W̃` the union of `clouds`. With `heavy_closure`
/// the cloud is closed under increments of the heavy coordinates, as the
/// true union of reachable sets is; the distance is then exact for that
/// closure.
pub fn build_distance_lyapunov(
    clouds: &[PointCloud],
    heavy: Vec<usize>,
    epsilon: f64,
    heavy_closure: bool,
) -> Result<LyapunovCandidate> {
    let ell = clouds.first().ok_or(Error::Empty("point clouds"))?.ell;
    check_heavy(ell, &heavy)?;
    let mut union = PointCloud::new(ell, Vec::new())?;
    for c in clouds {
        check_dim(ell, c.ell)?;
        union.extend(c.points().iter().cloned())?;
    }
    if union.is_empty() {
        return Err(Error::Empty("union of point clouds"));
    }
    if !union.points().iter().any(|p| p.iter().all(|x| *x == 0.0)) {
        return Err(Error::InvalidArgument("clouds must contain the origin".into()));
    }
    union.metadata = serde_json::json!({ "clouds": clouds.iter().map(|c| &c.metadata).collect::<Vec<_>>() });
    let cloud = Arc::new(union);
    let mask: Vec<bool> = (0..ell).map(|j| heavy_closure && heavy.contains(&j)).collect();
    let c = cloud.clone();
    let eval: Evaluator = Arc::new(move |x: &[f64]| {
        let mut best = f64::INFINITY;
        for p in c.points() {
            best = best.min(closure_dist2(p, x, &mask, best));
        }
        best.sqrt()
    });
    Ok(LyapunovCandidate {
        ell,
        kind: CandidateKind::DistanceToCloud { points: cloud.len(), heavy_closure },
        heavy,
        epsilon,
        cloud: Some(cloud),
        eval,
    })
}

/// All `n` with `n_j <= max_jumps` on heavy queues and zero elsewhere.
pub fn heavy_lattice(ell: usize, heavy: &[usize], max_jumps: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0usize; ell]];
    for &j in heavy {
        out = out
            .into_iter()
            .flat_map(|n| {
                (0..=max_jumps).map(move |k| {
                    let mut m = n.clone();
                    m[j] = k;
                    m
                })
            })
            .collect();
    }
    out.sort();
    out
}

/// Samples `W̃(n)` for each `n`. Each `n` is admissible for the tail vector
/// with `γ_j = 1/|n|₁` on heavy queues and `∞` on the rest.
pub fn sample_clouds(
    net: &Network,
    lambda_star: &[f64],
    epsilon: f64,
    lattice: &[Vec<usize>],
    samples: usize,
    seed: u64,
) -> Result<Vec<PointCloud>> {
    lattice
        .iter()
        .enumerate()
        .map(|(i, n)| {
            let total: usize = n.iter().sum();
            let gamma: Vec<f64> =
                n.iter().map(|&k| if k > 0 { 1.0 / total as f64 } else { f64::INFINITY }).collect();
            sample_reachable(net, lambda_star, &gamma, epsilon, n, samples, seed.wrapping_add(i as u64))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counterexample {
    pub x: Vec<f64>,
    /// Second point, where the property compares two states.
    pub y: Option<Vec<f64>>,
    pub values: Vec<f64>,
    pub margin: f64,
    /// For distance candidates: whether `V(x)` is within the cloud
    /// resolution, where sampling gaps rather than geometry may decide.
    pub near_cloud: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyResult {
    pub name: String,
    pub passed: bool,
    pub checked: usize,
    /// Samples that did not apply (e.g. `V(x) = 0` for the drift check).
    pub skipped: usize,
    /// Smallest margin seen; negative means a violation.
    pub worst_margin: f64,
    pub violations: usize,
    /// Violations within the cloud resolution, where the sampled cloud may
    /// be the cause; they still count as violations.
    pub flagged: usize,
    pub counterexamples: Vec<Counterexample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub samples: usize,
    pub seed: u64,
    /// Drift tolerance; `None` means `0.1·ε`.
    pub tol: Option<f64>,
    /// Upper corner of the sampling box; `None` uses
    /// `max(1, 1.5·cloud corner)` or 10 for user candidates.
    pub box_upper: Option<Vec<f64>>,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { samples: 10_000, seed: 0, tol: None, box_upper: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub kind: CandidateKind,
    pub epsilon: f64,
    pub tol: f64,
    pub queue: usize,
    pub samples: usize,
    pub seed: u64,
    pub resolution: f64,
    pub box_upper: Vec<f64>,
    /// Lipschitz-1, drift, zero set, heavy monotonicity.
    pub properties: Vec<PropertyResult>,
    pub overall: bool,
}

impl VerificationReport {
    pub fn property(&self, i: usize) -> &PropertyResult {
        &self.properties[i - 1]
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "verify_special kind={:?} epsilon={} tol={} queue={} samples={} seed={} resolution={} box={:?}\noverall={}\n",
            self.kind,
            self.epsilon,
            self.tol,
            self.queue + 1,
            self.samples,
            self.seed,
            self.resolution,
            self.box_upper,
            if self.overall { "PASS" } else { "FAIL" }
        );
        for (i, p) in self.properties.iter().enumerate() {
            s += &format!(
                "property {} ({}): {} checked={} skipped={} worst_margin={:.6e} violations={} flagged={}\n",
                i + 1,
                p.name,
                if p.passed { "PASS" } else { "FAIL" },
                p.checked,
                p.skipped,
                p.worst_margin,
                p.violations,
                p.flagged
            );
            for c in &p.counterexamples {
                s += &format!(
                    "  counterexample x={:?} y={:?} values={:?} margin={:.6e} near_cloud={}\n",
                    c.x, c.y, c.values, c.margin, c.near_cloud
                );
            }
        }
        s
    }
}

enum Outcome {
    Skip,
    Ok(f64),
    Bad(f64, Counterexample),
}

fn rng_for(seed: u64, property: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((property << 48) | i);
    rng
}

fn collect(name: &str, outcomes: Vec<Outcome>) -> PropertyResult {
    let mut r = PropertyResult {
        name: name.into(),
        passed: true,
        checked: 0,
        skipped: 0,
        worst_margin: f64::INFINITY,
        violations: 0,
        flagged: 0,
        counterexamples: Vec::new(),
    };
    for o in outcomes {
        match o {
            Outcome::Skip => r.skipped += 1,
            Outcome::Ok(m) => {
                r.checked += 1;
                r.worst_margin = r.worst_margin.min(m);
            }
            Outcome::Bad(m, c) => {
                r.checked += 1;
                r.worst_margin = r.worst_margin.min(m);
                r.violations += 1;
                if c.near_cloud {
                    r.flagged += 1;
                }
                if r.counterexamples.len() < MAX_COUNTEREXAMPLES {
                    r.counterexamples.push(c);
                }
            }
        }
    }
    r.passed = r.violations == 0;
    r
}

fn uniform_point(rng: &mut ChaCha8Rng, upper: &[f64]) -> Vec<f64> {
    upper.iter().map(|&u| rng.gen_range(0.0..=u)).collect()
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    rng.gen_range(lo.ln()..=hi.ln()).exp()
}

pub fn verify_special(
    candidate: &LyapunovCandidate,
    net: &Network,
    lambda_star: &[f64],
    epsilon: f64,
    m: usize,
    samples: usize,
    seed: u64,
) -> Result<VerificationReport> {
    let cfg = VerifyConfig { samples, seed, ..Default::default() };
    verify_special_with(candidate, net, lambda_star, epsilon, m, &cfg)
}

/// Samples each of the four defining properties `cfg.samples` times.
pub fn verify_special_with(
    candidate: &LyapunovCandidate,
    net: &Network,
    lambda_star: &[f64],
    epsilon: f64,
    m: usize,
    cfg: &VerifyConfig,
) -> Result<VerificationReport> {
    let ell = net.ell();
    check_dim(ell, candidate.ell)?;
    check_dim(ell, lambda_star.len())?;
    if m >= ell {
        return Err(Error::InvalidArgument(format!("queue index {m} out of range")));
    }
    if cfg.samples < 100 {
        return Err(Error::InvalidArgument("verification needs at least 100 samples".into()));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let tol = cfg.tol.unwrap_or(0.1 * epsilon);
    let resolution = candidate.cloud().map_or(0.0, |c| c.resolution(RESOLUTION_PROBE));
    let upper: Vec<f64> = match (&cfg.box_upper, candidate.cloud()) {
        (Some(u), _) => {
            check_dim(ell, u.len())?;
            u.clone()
        }
        (None, Some(c)) => c.upper_corner().iter().map(|x| (1.5 * x).max(1.0)).collect(),
        (None, None) => vec![10.0; ell],
    };
    let scale = upper.iter().copied().fold(0.0, f64::max);
    let v = |x: &[f64]| candidate.eval(x);
    let near = |val: f64| candidate.cloud().is_some() && val <= resolution;
    let n = cfg.samples as u64;

    // 1: |V(x) - V(y)| <= ‖x - y‖ (1 + 1e-6)
    let p1 = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_for(cfg.seed, 1, i);
            let x = uniform_point(&mut rng, &upper);
            let r = log_uniform(&mut rng, 1e-4, scale);
            let y: Vec<f64> = x.iter().map(|a| (a + rng.gen_range(-r..=r)).max(0.0)).collect();
            let d = x.iter().zip(&y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            if d == 0.0 {
                return Outcome::Skip;
            }
            let (vx, vy) = (v(&x), v(&y));
            let margin = 1.0 + 1e-6 - (vx - vy).abs() / d;
            if margin >= 0.0 {
                Outcome::Ok(margin)
            } else {
                Outcome::Bad(margin, Counterexample { x, y: Some(y), values: vec![vx, vy], margin, near_cloud: false })
            }
        })
        .collect();

    // 2: secant decay over min(0.1, V/ε) along the fluid path at λ*
    let p2: Vec<Outcome> = (0..n)
        .into_par_iter()
        .map(|i| -> Result<Outcome> {
            let mut rng = rng_for(cfg.seed, 2, i);
            let x = uniform_point(&mut rng, &upper);
            let vx = v(&x);
            if !(vx > 1e-9) {
                return Ok(Outcome::Skip);
            }
            let tau = (vx / epsilon).min(0.1);
            let tr = integrate_fluid(net, lambda_star, &x, tau)?;
            let y = tr.state_at(tau);
            let vy = v(&y);
            let rate = (vy - vx) / tau;
            let margin = -epsilon + tol - rate;
            Ok(if margin >= 0.0 {
                Outcome::Ok(margin)
            } else {
                Outcome::Bad(margin, Counterexample { x, y: Some(y), values: vec![vx, vy, rate], margin, near_cloud: near(vx) })
            })
        })
        .collect::<Result<_>>()?;

    // 3: V(0) = 0 and V(x) > 0 when x_m > 0; cloud points are probed too
    let mut probes: Vec<Vec<f64>> = Vec::new();
    if let Some(c) = candidate.cloud() {
        probes.extend(c.points().iter().filter(|p| p[m] > 0.0).take(cfg.samples / 2).cloned());
    }
    let extra = (cfg.samples - probes.len()) as u64;
    probes.extend((0..extra).map(|i| {
        let mut rng = rng_for(cfg.seed, 3, i);
        let mut x = uniform_point(&mut rng, &upper);
        x[m] = log_uniform(&mut rng, 1e-6, upper[m]);
        x
    }));
    let v0 = v(&vec![0.0; ell]);
    let mut p3_out: Vec<Outcome> = vec![if v0.abs() <= 1e-9 {
        Outcome::Ok(f64::INFINITY)
    } else {
        Outcome::Bad(-v0.abs(), Counterexample { x: vec![0.0; ell], y: None, values: vec![v0], margin: -v0.abs(), near_cloud: false })
    }];
    p3_out.extend(probes.into_par_iter().map(|x| {
        let vx = v(&x);
        if vx > 0.0 {
            Outcome::Ok(vx)
        } else {
            Outcome::Bad(vx, Counterexample { x, y: None, values: vec![vx], margin: vx, near_cloud: false })
        }
    }).collect::<Vec<_>>());

    // 4: V(x + αe_j) <= V(x) + 1e-9 for heavy j
    let p4 = if candidate.heavy.is_empty() {
        Vec::new()
    } else {
        (0..n)
            .into_par_iter()
            .map(|i| {
                let mut rng = rng_for(cfg.seed, 4, i);
                let x = uniform_point(&mut rng, &upper);
                let j = candidate.heavy[rng.gen_range(0..candidate.heavy.len())];
                let alpha = log_uniform(&mut rng, 1e-4, scale);
                let mut y = x.clone();
                y[j] += alpha;
                let (vx, vy) = (v(&x), v(&y));
                let margin = vx + 1e-9 - vy;
                if margin >= 0.0 {
                    Outcome::Ok(margin)
                } else {
                    Outcome::Bad(margin, Counterexample { x, y: Some(y), values: vec![vx, vy], margin, near_cloud: false })
                }
            })
            .collect()
    };

    let properties = vec![
        collect("lipschitz-1", p1),
        collect("drift <= -epsilon where V > 0", p2),
        collect("V(0) = 0 and V > 0 when q_m > 0", p3_out),
        collect("nonincreasing along heavy coordinates", p4),
    ];
    let overall = properties.iter().all(|p| p.passed);
    Ok(VerificationReport {
        kind: candidate.kind.clone(),
        epsilon,
        tol,
        queue: m,
        samples: cfg.samples,
        seed: cfg.seed,
        resolution,
        box_upper: upper,
        properties,
        overall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_set() -> Network {
        Network::new(3, vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]]).unwrap()
    }

    fn cloud(points: Vec<Vec<f64>>) -> PointCloud {
        PointCloud::new(3, points).unwrap()
    }

    #[test]
    fn distance_examples() {
        let c = build_distance_lyapunov(&[cloud(vec![vec![0.0; 3]])], vec![0, 1], 0.05, false).unwrap();
        assert_eq!(c.eval(&[3.0, 4.0, 0.0]), 5.0);
        assert_eq!(c.eval(&[0.0; 3]), 0.0);
        let more = build_distance_lyapunov(
            &[cloud(vec![vec![0.0; 3]]), cloud(vec![vec![2.0, 4.0, 0.0]])],
            vec![0, 1],
            0.05,
            false,
        )
        .unwrap();
        for x in [[3.0, 4.0, 0.0], [1.0, 1.0, 1.0], [0.0, 0.0, 2.0]] {
            assert!(more.eval(&x) <= c.eval(&x));
        }
        assert_eq!(more.eval(&[2.0, 4.0, 0.0]), 0.0);
    }

    #[test]
    fn heavy_closure_distance() {
        let c = build_distance_lyapunov(&[cloud(vec![vec![0.0; 3]])], vec![0], 0.05, true).unwrap();
        assert_eq!(c.eval(&[7.0, 3.0, 4.0]), 5.0);
        assert!(build_distance_lyapunov(&[], vec![], 0.05, true).is_err());
        assert!(build_distance_lyapunov(&[cloud(vec![vec![1.0; 3]])], vec![], 0.05, true).is_err());
    }

    #[test]
    fn lattice() {
        let l = heavy_lattice(3, &[0, 1], 2);
        assert_eq!(l.len(), 9);
        assert!(l.iter().all(|n| n[2] == 0));
        assert_eq!(heavy_lattice(3, &[], 5), vec![vec![0, 0, 0]]);
    }

    #[test]
    fn coordinate_candidate_fails_monotonicity() {
        let v = LyapunovCandidate::user(3, "x_1", vec![0, 1], 0.05, |x| x[0]).unwrap();
        let r = verify_special(&v, &pair_set(), &[0.5, 0.5, 0.25], 0.05, 0, 500, 1).unwrap();
        assert!(r.property(1).passed);
        assert!(r.property(3).passed);
        assert!(!r.property(4).passed);
        assert!(!r.overall);
        let c = &r.property(4).counterexamples[0];
        let (x, y) = (c.x.clone(), c.y.clone().unwrap());
        assert!(v.eval(&y) > v.eval(&x));
    }

    #[test]
    fn zero_candidate_fails_zero_set() {
        let v = LyapunovCandidate::user(3, "zero", vec![0, 1], 0.05, |_| 0.0).unwrap();
        let r = verify_special(&v, &pair_set(), &[0.5, 0.5, 0.25], 0.05, 2, 500, 1).unwrap();
        assert!(r.property(1).passed);
        assert!(r.property(2).passed);
        assert_eq!(r.property(2).checked, 0);
        assert!(!r.property(3).passed);
        assert!(r.property(4).passed);
    }

    #[test]
    fn rejects_nonzero_origin() {
        assert!(LyapunovCandidate::user(2, "one", vec![], 0.1, |_| 1.0).is_err());
    }

    #[test]
    fn tolerance_monotone() {
        let c = build_distance_lyapunov(&[cloud(vec![vec![0.0; 3]])], vec![], 0.05, false).unwrap();
        let net = pair_set();
        let lam = [0.5, 0.5, 0.25];
        let base = VerifyConfig { samples: 300, seed: 2, tol: Some(0.0), box_upper: None };
        let a = verify_special_with(&c, &net, &lam, 0.05, 2, &base).unwrap();
        let b = verify_special_with(&c, &net, &lam, 0.05, 2, &VerifyConfig { tol: Some(0.01), ..base }).unwrap();
        assert!(!a.property(2).passed || b.property(2).passed);
        assert!(b.property(2).violations <= a.property(2).violations);
    }
}
