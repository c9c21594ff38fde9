//! Minimum-norm point of the convex hull of finitely many generators.
//!
//! The primary solver is Wolfe's active-set ("corral") method. A
//! face-enumeration solver covers small generator lists; it shares no code
//! with the active-set path beyond the affine-minimizer solve and serves as
//! the fallback when the active-set method fails its certificate.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Largest generator count accepted by [`min_norm_point_enumerate`].
pub const ENUMERATION_LIMIT: usize = 12;

/// Certificate tolerance for `p·(v - p) >= -tol` over all generators `v`.
pub const CERTIFICATE_TOL: f64 = 1e-9;

const WOLFE_GAP_TOL: f64 = 1e-10;
const WEIGHT_EPS: f64 = 1e-14;

/// A point of `conv(generators)` with its convex weights.
#[derive(Debug, Clone, PartialEq)]
pub struct MinNormPoint {
    pub point: Vec<f64>,
    pub weights: Vec<f64>,
}

impl MinNormPoint {
    pub fn norm(&self) -> f64 {
        norm(&self.point)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn validate(vectors: &[Vec<f64>]) -> Result<usize> {
    let dim = vectors.first().ok_or(Error::Empty("generators"))?.len();
    for v in vectors {
        check_dim(dim, v.len())?;
    }
    Ok(dim)
}

/// `min_v p·(v - p)`; nonnegative (up to rounding) iff `p` is the min-norm point.
pub fn certificate_gap(vectors: &[Vec<f64>], p: &[f64]) -> f64 {
    let pp = dot(p, p);
    vectors
        .iter()
        .map(|v| dot(p, v) - pp)
        .fold(f64::INFINITY, f64::min)
}

fn combine(vectors: &[Vec<f64>], idx: &[usize], w: &[f64], dim: usize) -> Vec<f64> {
    let mut x = vec![0.0; dim];
    for (&i, &wi) in idx.iter().zip(w) {
        for (xk, vk) in x.iter_mut().zip(&vectors[i]) {
            *xk += wi * vk;
        }
    }
    x
}

/// Weights of the min-norm point of the affine hull of `vectors[idx]`.
/// `None` when the subset is affinely dependent.
fn affine_minimizer(vectors: &[Vec<f64>], idx: &[usize]) -> Option<Vec<f64>> {
    let k = idx.len();
    if k == 1 {
        return Some(vec![1.0]);
    }
    let mut kkt = DMatrix::zeros(k + 1, k + 1);
    for a in 0..k {
        for b in 0..k {
            kkt[(a, b)] = dot(&vectors[idx[a]], &vectors[idx[b]]);
        }
        kkt[(a, k)] = 1.0;
        kkt[(k, a)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    // affine independence of the subset is equivalent to full rank of the
    // difference matrix
    let dim = vectors[idx[0]].len();
    let diffs = DMatrix::from_fn(k - 1, dim, |r, c| vectors[idx[r + 1]][c] - vectors[idx[0]][c]);
    if diffs.rank(1e-11) < k - 1 {
        return None;
    }
    let sol = kkt.lu().solve(&rhs)?;
    let w: Vec<f64> = sol.iter().take(k).copied().collect();
    if w.iter().any(|x| !x.is_finite()) {
        return None;
    }
    Some(w)
}

/// Minimum-norm point of `conv(vectors)`: Wolfe's method, falling back to
/// face enumeration when the certificate fails.
pub fn min_norm_point(vectors: &[Vec<f64>]) -> Result<MinNormPoint> {
    match min_norm_point_wolfe(vectors) {
        Ok(p) => Ok(p),
        Err(Error::Numerical(msg)) if vectors.len() <= ENUMERATION_LIMIT => {
            min_norm_point_enumerate(vectors).map_err(|e| {
                Error::Numerical(format!("wolfe failed ({msg}) and enumeration failed ({e})"))
            })
        }
        Err(e) => Err(e),
    }
}

/// Wolfe's active-set method.
pub fn min_norm_point_wolfe(vectors: &[Vec<f64>]) -> Result<MinNormPoint> {
    let dim = validate(vectors)?;
    let n = vectors.len();
    let start = (0..n)
        .min_by(|&a, &b| norm(&vectors[a]).total_cmp(&norm(&vectors[b])))
        .expect("nonempty");
    let mut corral = vec![start];
    let mut w = vec![1.0];
    let mut x = vectors[start].clone();
    let scale = vectors.iter().map(|v| dot(v, v)).fold(1.0, f64::max);

    let max_major = 50 * n + 100;
    for _ in 0..max_major {
        let xx = dot(&x, &x);
        let (j, best) = (0..n)
            .map(|i| (i, dot(&x, &vectors[i])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .expect("nonempty");
        if xx - best <= WOLFE_GAP_TOL * scale || corral.contains(&j) {
            break;
        }
        corral.push(j);
        w.push(0.0);
        loop {
            let v = affine_minimizer(vectors, &corral)
                .ok_or_else(|| Error::Numerical("affinely dependent corral".into()))?;
            if v.iter().all(|&vi| vi > WEIGHT_EPS) {
                w = v;
                break;
            }
            // step from w toward v until the first weight hits zero
            let mut theta = 1.0;
            let mut hit = None;
            for i in 0..corral.len() {
                if v[i] <= WEIGHT_EPS && w[i] - v[i] > 0.0 {
                    let t = w[i] / (w[i] - v[i]);
                    if t < theta || hit.is_none() {
                        theta = t.clamp(0.0, 1.0);
                        hit = Some(i);
                    }
                }
            }
            for i in 0..corral.len() {
                w[i] = theta * v[i] + (1.0 - theta) * w[i];
            }
            if let Some(h) = hit {
                w[h] = 0.0;
            }
            let mut k = 0;
            while k < corral.len() {
                if w[k] <= WEIGHT_EPS {
                    corral.remove(k);
                    w.remove(k);
                } else {
                    k += 1;
                }
            }
            if corral.is_empty() {
                return Err(Error::Numerical("corral emptied".into()));
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|x| *x /= s);
        }
        x = combine(vectors, &corral, &w, dim);
    }

    let mut weights = vec![0.0; n];
    for (&i, &wi) in corral.iter().zip(&w) {
        weights[i] += wi;
    }
    let gap = certificate_gap(vectors, &x);
    if gap < -CERTIFICATE_TOL * scale.max(1.0) {
        return Err(Error::Numerical(format!("certificate gap {gap:e}")));
    }
    Ok(MinNormPoint { point: x, weights })
}

/// Face enumeration: the optimum is the smallest affine minimizer, over all
/// affinely independent subsets, whose weights are all nonnegative.
pub fn min_norm_point_enumerate(vectors: &[Vec<f64>]) -> Result<MinNormPoint> {
    let dim = validate(vectors)?;
    let n = vectors.len();
    if n > ENUMERATION_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "face enumeration supports at most {ENUMERATION_LIMIT} generators, got {n}"
        )));
    }
    let mut best: Option<(f64, Vec<usize>, Vec<f64>)> = None;
    for mask in 1u32..(1u32 << n) {
        let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
        if idx.len() > dim + 1 {
            continue;
        }
        let Some(w) = affine_minimizer(vectors, &idx) else {
            continue;
        };
        if w.iter().any(|&x| x < -1e-12) {
            continue;
        }
        let p = combine(vectors, &idx, &w, dim);
        let nn = norm(&p);
        if best.as_ref().is_none_or(|(b, _, _)| nn < *b - 1e-15) {
            best = Some((nn, idx, w));
        }
    }
    let (_, idx, w) = best.ok_or_else(|| Error::Numerical("no feasible face".into()))?;
    let w: Vec<f64> = w.iter().map(|x| x.max(0.0)).collect();
    let s: f64 = w.iter().sum();
    let w: Vec<f64> = w.iter().map(|x| x / s).collect();
    let point = combine(vectors, &idx, &w, dim);
    let mut weights = vec![0.0; n];
    for (&i, &wi) in idx.iter().zip(&w) {
        weights[i] = wi;
    }
    Ok(MinNormPoint { point, weights })
}
