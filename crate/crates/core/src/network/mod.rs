//! Single-hop switched networks and the Max-Weight schedule rule.
//!
//! A [`Network`] is a queue count `ell` together with a finite service set
//! that is closed under zeroing coordinates. The set is stored in
//! lexicographic order; every "deterministic pick" in the crate refers to
//! that order.

mod capacity;

use std::cmp::Ordering;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub use capacity::{CapacityClass, CapacityVerdict};

/// Default absolute tolerance for score ties in the stochastic simulator.
pub const SIM_TIE_TOL: f64 = 1e-9;

/// A nonnegative service-rate vector (units per slot, one entry per queue).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServiceVector(Vec<f64>);

impl ServiceVector {
    pub fn new(rates: Vec<f64>) -> Result<Self> {
        if let Some(r) = rates.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "service rates must be finite and nonnegative, got {r}"
            )));
        }
        Ok(Self(rates))
    }

    pub fn rates(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Score `muᵀq`.
    pub fn score(&self, q: &[f64]) -> f64 {
        self.0.iter().zip(q).map(|(m, x)| m * x).sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

impl From<ServiceVector> for Vec<f64> {
    fn from(v: ServiceVector) -> Self {
        v.0
    }
}

/// Lexicographic order on entries, the canonical order for service vectors.
pub fn lex_cmp(a: &[f64], b: &[f64]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            Ordering::Equal => continue,
            o => return o,
        }
    }
    a.len().cmp(&b.len())
}

/// Smallest superset of `vectors` closed under zeroing any subset of
/// coordinates, sorted lexicographically and deduplicated.
pub fn zero_closure(vectors: &[ServiceVector]) -> Result<Vec<ServiceVector>> {
    let first = vectors.first().ok_or(Error::Empty("service vectors"))?;
    let ell = first.len();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for v in vectors {
        check_dim(ell, v.len())?;
        let support: Vec<usize> = (0..ell).filter(|&j| v.0[j] != 0.0).collect();
        if support.len() > 24 {
            return Err(Error::InvalidArgument(
                "zero closure of a vector with more than 24 nonzero entries is too large".into(),
            ));
        }
        for mask in 0u32..(1u32 << support.len()) {
            let mut w = v.0.clone();
            for (bit, &j) in support.iter().enumerate() {
                if mask & (1 << bit) != 0 {
                    w[j] = 0.0;
                }
            }
            out.push(w);
        }
    }
    out.sort_by(|a, b| lex_cmp(a, b));
    out.dedup();
    Ok(out.into_iter().map(ServiceVector).collect())
}

/// On-disk network description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub ell: usize,
    pub service_vectors: Vec<Vec<f64>>,
}

/// A queue count and its zero-closed service set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Network {
    ell: usize,
    service_set: Vec<ServiceVector>,
    #[serde(skip)]
    closure_added: bool,
}

impl Network {
    /// Builds a network, applying [`zero_closure`] to the given vectors.
    pub fn new(ell: usize, vectors: Vec<Vec<f64>>) -> Result<Self> {
        if ell == 0 {
            return Err(Error::InvalidArgument("queue count must be positive".into()));
        }
        let given = vectors
            .into_iter()
            .map(|v| {
                check_dim(ell, v.len())?;
                ServiceVector::new(v)
            })
            .collect::<Result<Vec<_>>>()?;
        let mut distinct = given.clone();
        distinct.sort_by(|a, b| lex_cmp(&a.0, &b.0));
        distinct.dedup();
        let service_set = zero_closure(&given)?;
        let closure_added = service_set.len() > distinct.len();
        Ok(Self {
            ell,
            service_set,
            closure_added,
        })
    }

    pub fn from_file(file: &NetworkFile) -> Result<Self> {
        Self::new(file.ell, file.service_vectors.clone())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let file: NetworkFile = serde_json::from_str(&text)?;
        Self::from_file(&file)
    }

    pub fn to_file(&self) -> NetworkFile {
        NetworkFile {
            ell: self.ell,
            service_vectors: self.service_set.iter().map(|v| v.0.clone()).collect(),
        }
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn service_set(&self) -> &[ServiceVector] {
        &self.service_set
    }

    /// Whether building the network had to add zeroed vectors.
    pub fn closure_added(&self) -> bool {
        self.closure_added
    }

    pub fn max_service_norm(&self) -> f64 {
        self.service_set
            .iter()
            .map(ServiceVector::norm)
            .fold(0.0, f64::max)
    }

    /// Indices (into [`Network::service_set`]) of all vectors whose score is
    /// within `tol` of the maximum, in canonical order.
    pub fn mw_indices(&self, q: &[f64], tol: f64) -> Result<Vec<usize>> {
        check_dim(self.ell, q.len())?;
        let scores: Vec<f64> = self.service_set.iter().map(|v| v.score(q)).collect();
        let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok((0..scores.len())
            .filter(|&i| scores[i] >= best - tol)
            .collect())
    }

    /// All Max-Weight schedules for state `q`, up to an absolute tie tolerance.
    pub fn mw_schedules(&self, q: &[f64], tol: f64) -> Result<Vec<&ServiceVector>> {
        Ok(self
            .mw_indices(q, tol)?
            .into_iter()
            .map(|i| &self.service_set[i])
            .collect())
    }

    /// The lexicographically smallest exact maximizer.
    pub fn mw_pick(&self, q: &[f64]) -> Result<&ServiceVector> {
        self.mw_pick_tol(q, 0.0)
    }

    /// Like [`Network::mw_pick`] with an absolute tie tolerance.
    pub fn mw_pick_tol(&self, q: &[f64], tol: f64) -> Result<&ServiceVector> {
        check_dim(self.ell, q.len())?;
        let mut best = f64::NEG_INFINITY;
        for v in &self.service_set {
            best = best.max(v.score(q));
        }
        // service_set is sorted, so the first hit is the canonical pick
        Ok(self
            .service_set
            .iter()
            .find(|v| v.score(q) >= best - tol)
            .expect("service set is nonempty"))
    }

    /// Classifies `lambda` against the capacity region `conv(S)`.
    pub fn capacity_membership(&self, lambda: &[f64]) -> Result<CapacityVerdict> {
        capacity::classify(self, lambda, capacity::DEFAULT_TOL)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sv(v: &[f64]) -> ServiceVector {
        ServiceVector::new(v.to_vec()).unwrap()
    }

    fn rates(v: &[ServiceVector]) -> Vec<Vec<f64>> {
        v.iter().map(|x| x.rates().to_vec()).collect()
    }

    pub(crate) fn pair_set() -> Network {
        Network::new(
            3,
            vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]],
        )
        .unwrap()
    }

    #[test]
    fn closure_of_single_pair() {
        let c = zero_closure(&[sv(&[1.0, 1.0])]).unwrap();
        assert_eq!(
            rates(&c),
            vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0], vec![1.0, 1.0]]
        );
    }

    #[test]
    fn closure_fixed_point_at_zero() {
        let c = zero_closure(&[sv(&[0.0, 0.0, 0.0])]).unwrap();
        assert_eq!(rates(&c), vec![vec![0.0, 0.0, 0.0]]);
    }

    #[test]
    fn closure_of_pair_set_matches_enumeration() {
        let net = pair_set();
        // brute force: every 0/1 vector with at most two ones
        let mut expect = Vec::new();
        for mask in 0u32..8 {
            if mask.count_ones() <= 2 {
                expect.push((0..3).map(|j| ((mask >> (2 - j)) & 1) as f64).collect::<Vec<_>>());
            }
        }
        expect.sort_by(|a, b| lex_cmp(a, b));
        assert_eq!(rates(net.service_set()), expect);
        assert!(net.closure_added());
    }

    #[test]
    fn closure_rejects_bad_input() {
        assert!(matches!(zero_closure(&[]), Err(Error::Empty(_))));
        assert!(ServiceVector::new(vec![1.0, -0.5]).is_err());
        assert!(Network::new(2, vec![vec![1.0, -1.0]]).is_err());
        assert!(matches!(
            Network::new(2, vec![vec![1.0, 1.0, 1.0]]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn mw_schedules_examples() {
        let net = pair_set();
        let s = net.mw_schedules(&[2.0, 3.0, 1.0], 0.0).unwrap();
        assert_eq!(rates(&s.into_iter().cloned().collect::<Vec<_>>()), vec![vec![1.0, 1.0, 0.0]]);

        let all = net.mw_schedules(&[0.0; 3], 0.0).unwrap();
        assert_eq!(all.len(), net.service_set().len());

        let s = net.mw_schedules(&[5.0, 0.0, 0.0], 0.0).unwrap();
        assert_eq!(
            rates(&s.into_iter().cloned().collect::<Vec<_>>()),
            vec![vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 0.0]]
        );
        assert!(net.mw_schedules(&[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn mw_pick_examples() {
        let net = pair_set();
        assert_eq!(net.mw_pick(&[2.0, 3.0, 1.0]).unwrap().rates(), &[1.0, 1.0, 0.0]);
        assert_eq!(net.mw_pick(&[0.0, 0.0, 0.0]).unwrap().rates(), &[0.0, 0.0, 0.0]);
        assert_eq!(net.mw_pick(&[5.0, 0.0, 0.0]).unwrap().rates(), &[1.0, 0.0, 0.0]);
    }

    #[test]
    fn loader_applies_closure() {
        let file = NetworkFile {
            ell: 2,
            service_vectors: vec![vec![2.0, 1.0]],
        };
        let net = Network::from_file(&file).unwrap();
        assert!(net.closure_added());
        assert_eq!(net.service_set().len(), 4);
        let again = Network::from_file(&net.to_file()).unwrap();
        assert!(!again.closure_added());
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn network_strategy() -> impl Strategy<Value = Network> {
        (2usize..=4).prop_flat_map(|ell| {
            prop::collection::vec(prop::collection::vec(0u8..=3, ell), 1..4)
                .prop_map(move |vs| {
                    let vs = vs
                        .into_iter()
                        .map(|v| v.into_iter().map(f64::from).collect())
                        .collect();
                    Network::new(ell, vs).unwrap()
                })
        })
    }

    fn state_for(net: &Network) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(prop_oneof![Just(0.0), 0.0..10.0f64], net.ell())
    }

    proptest! {
        #[test]
        fn pick_is_a_maximizer(
            (net, q) in network_strategy().prop_flat_map(|n| { let s = state_for(&n); (Just(n), s) })
        ) {
            let pick = net.mw_pick(&q).unwrap();
            prop_assert!(net.mw_schedules(&q, 0.0).unwrap().contains(&pick));
        }

        #[test]
        fn argmax_is_scale_invariant(
            (net, q) in network_strategy().prop_flat_map(|n| { let s = state_for(&n); (Just(n), s) }),
            alpha in prop_oneof![Just(0.5), Just(2.0), Just(4.0), Just(0.25)],
        ) {
            // powers of two keep the scaled scores exact
            let scaled: Vec<f64> = q.iter().map(|x| alpha * x).collect();
            prop_assert_eq!(
                net.mw_indices(&q, 0.0).unwrap(),
                net.mw_indices(&scaled, 0.0).unwrap()
            );
        }

        #[test]
        fn closure_is_idempotent(net in network_strategy()) {
            let again = zero_closure(net.service_set()).unwrap();
            prop_assert_eq!(again.as_slice(), net.service_set());
        }

        #[test]
        fn zeroing_an_idle_coordinate_keeps_maximality(
            (net, q) in network_strategy().prop_flat_map(|n| { let s = state_for(&n); (Just(n), s) })
        ) {
            let maxi = net.mw_schedules(&q, 0.0).unwrap();
            for mu in maxi {
                for j in (0..q.len()).filter(|&j| q[j] == 0.0) {
                    let mut z = mu.rates().to_vec();
                    z[j] = 0.0;
                    let z = ServiceVector::new(z).unwrap();
                    prop_assert!(net.service_set().contains(&z));
                    prop_assert!(net.mw_schedules(&q, 0.0).unwrap().contains(&&z));
                }
            }
        }
    }
}
