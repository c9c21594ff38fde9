//! Capacity-region membership for `conv(S)`.
//!
//! The signed margin is the radius of the largest ball around `lambda` inside
//! the region (interior and boundary points) or minus the Euclidean distance
//! to the region (exterior points). Interior radii come from an explicit
//! facet list; exterior distances from the min-norm solver.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::Network;
use crate::error::{check_dim, Error, Result};
use crate::fluid::min_norm_point;

pub(crate) const DEFAULT_TOL: f64 = 1e-9;
const MAX_FACET_CANDIDATES: u128 = 5_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CapacityClass {
    Interior,
    Boundary,
    Exterior,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityVerdict {
    pub classification: CapacityClass,
    /// Signed distance to the boundary of `conv(S)`.
    pub margin: f64,
}

/// A supporting hyperplane `a·x <= b` with unit normal.
#[derive(Debug, Clone)]
pub(crate) struct Facet {
    pub normal: Vec<f64>,
    pub offset: f64,
}

pub(crate) fn classify(net: &Network, lambda: &[f64], tol: f64) -> Result<CapacityVerdict> {
    check_dim(net.ell(), lambda.len())?;
    if lambda.iter().any(|x| !(*x >= 0.0)) {
        return Err(Error::InvalidArgument("arrival rates must be nonnegative".into()));
    }
    let shifted: Vec<Vec<f64>> = net
        .service_set()
        .iter()
        .map(|s| lambda.iter().zip(s.rates()).map(|(l, m)| l - m).collect())
        .collect();
    let dist = min_norm_point(&shifted)?.norm();
    if dist > tol {
        return Ok(CapacityVerdict {
            classification: CapacityClass::Exterior,
            margin: -dist,
        });
    }
    let points: Vec<&[f64]> = net.service_set().iter().map(|s| s.rates()).collect();
    let facets = facets(&points, tol)?;
    let margin = if facets.is_empty() {
        // lower-dimensional region: no interior
        0.0
    } else {
        facets
            .iter()
            .map(|f| f.offset - dot(&f.normal, lambda))
            .fold(f64::INFINITY, f64::min)
    };
    let classification = if margin > tol {
        CapacityClass::Interior
    } else {
        CapacityClass::Boundary
    };
    Ok(CapacityVerdict {
        classification,
        margin: margin.max(0.0),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut r: u128 = 1;
    for i in 0..k {
        r = r * (n - i) as u128 / (i + 1) as u128;
    }
    r
}

/// Facets of a full-dimensional polytope by brute force over point subsets.
/// Returns an empty list when the hull is not full-dimensional.
pub(crate) fn facets(points: &[&[f64]], tol: f64) -> Result<Vec<Facet>> {
    let ell = points[0].len();
    if ell == 1 {
        let lo = points.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max);
        if hi - lo <= tol {
            return Ok(Vec::new());
        }
        return Ok(vec![
            Facet { normal: vec![1.0], offset: hi },
            Facet { normal: vec![-1.0], offset: -lo },
        ]);
    }
    if affine_rank(points) < ell {
        return Ok(Vec::new());
    }
    if binomial(points.len(), ell) > MAX_FACET_CANDIDATES {
        return Err(Error::InvalidArgument(format!(
            "facet enumeration over {} points in dimension {ell} is too large",
            points.len()
        )));
    }
    let mut out = Vec::new();
    let mut combo: Vec<usize> = (0..ell).collect();
    loop {
        if let Some(f) = supporting_plane(points, &combo, tol) {
            out.push(f);
        }
        // next combination in lexicographic order
        let n = points.len();
        let mut i = ell;
        while i > 0 && combo[i - 1] == n - ell + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        combo[i - 1] += 1;
        for k in i..ell {
            combo[k] = combo[k - 1] + 1;
        }
    }
    Ok(out)
}

fn affine_rank(points: &[&[f64]]) -> usize {
    let ell = points[0].len();
    let rows = points.len() - 1;
    if rows == 0 {
        return 0;
    }
    let d = DMatrix::from_fn(rows, ell, |i, j| points[i + 1][j] - points[0][j]);
    d.rank(1e-10)
}

fn supporting_plane(points: &[&[f64]], combo: &[usize], tol: f64) -> Option<Facet> {
    let ell = points[0].len();
    let base = points[combo[0]];
    let d = DMatrix::from_fn(ell - 1, ell, |i, j| points[combo[i + 1]][j] - base[j]);
    let gram = d.transpose() * &d;
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..ell).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    // the subset must span an (ell-1)-dimensional affine piece
    if eig.eigenvalues[order[1]] <= 1e-10 {
        return None;
    }
    let v = eig.eigenvectors.column(order[0]);
    let norm = v.norm();
    let mut normal: Vec<f64> = v.iter().map(|x| x / norm).collect();
    let mut offset = dot(&normal, base);
    let (mut above, mut below) = (false, false);
    for p in points {
        let s = dot(&normal, p) - offset;
        if s > tol {
            above = true;
        } else if s < -tol {
            below = true;
        }
    }
    match (above, below) {
        (true, true) => None,
        (true, false) => {
            normal.iter_mut().for_each(|x| *x = -*x);
            offset = -offset;
            Some(Facet { normal, offset })
        }
        _ => Some(Facet { normal, offset }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_set() -> Network {
        Network::new(
            3,
            vec![vec![1.0, 1.0, 0.0], vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]],
        )
        .unwrap()
    }

    /// Oracle for the pair set: the region is the cube [0,1]^3 cut by
    /// x1+x2+x3 <= 2, so interior margins are explicit.
    fn pair_set_margin(l: &[f64]) -> f64 {
        let mut m = f64::INFINITY;
        for &x in l {
            m = m.min(x).min(1.0 - x);
        }
        m.min((2.0 - l.iter().sum::<f64>()) / 3f64.sqrt())
    }

    #[test]
    fn three_queue_examples() {
        let net = pair_set();
        let v = net.capacity_membership(&[0.5, 0.5, 0.25]).unwrap();
        assert_eq!(v.classification, CapacityClass::Interior);
        assert!((v.margin - 0.25).abs() < 1e-9);

        let v = net.capacity_membership(&[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(v.classification, CapacityClass::Exterior);
        assert!((v.margin + 1.0 / 3f64.sqrt()).abs() < 1e-9);

        let v = net.capacity_membership(&[1.0, 1.0, 0.0]).unwrap();
        assert_eq!(v.classification, CapacityClass::Boundary);
    }

    #[test]
    fn interior_margins_match_explicit_region() {
        let net = pair_set();
        for l in [[0.3, 0.4, 0.5], [0.9, 0.5, 0.1], [0.6, 0.6, 0.6], [0.2, 0.2, 0.2]] {
            let v = net.capacity_membership(&l).unwrap();
            assert!((v.margin - pair_set_margin(&l)).abs() < 1e-9, "{l:?}");
        }
    }

    #[test]
    fn degenerate_region_has_no_interior() {
        let net = Network::new(2, vec![vec![1.0, 0.0]]).unwrap();
        let v = net.capacity_membership(&[0.5, 0.0]).unwrap();
        assert_eq!(v.classification, CapacityClass::Boundary);
        let v = net.capacity_membership(&[0.5, 0.1]).unwrap();
        assert_eq!(v.classification, CapacityClass::Exterior);
        assert!((v.margin + 0.1).abs() < 1e-9);
    }

    #[test]
    fn rejects_negative_rates() {
        assert!(pair_set().capacity_membership(&[-0.1, 0.0, 0.0]).is_err());
    }
}
