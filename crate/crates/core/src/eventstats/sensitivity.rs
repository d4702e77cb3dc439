use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use super::mixture::MomentPair;
use crate::linalg;
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-10;
const MAX_ITERATIONS: usize = 20_000;

fn check_pair(base: &MomentPair, event: &MomentPair) -> Result<usize> {
    let n = base.mean.len();
    if event.mean.len() != n || base.cov.shape() != (n, n) || event.cov.shape() != (n, n) {
        return Err(Error::arg("moment pairs have mismatched dimensions"));
    }
    Ok(n)
}

/// Projected Gaussian KL between the event-conditioned and base laws along `v`.
pub fn sensitivity_score(v: &DVector<f64>, base: &MomentPair, event: &MomentPair) -> Result<f64> {
    let n = check_pair(base, event)?;
    if v.len() != n || (v.norm() - 1.0).abs() > 1e-10 {
        return Err(Error::arg("direction must be a unit vector of the moment dimension"));
    }
    raw_score(v, base, event)
}

fn raw_score(v: &DVector<f64>, base: &MomentPair, event: &MomentPair) -> Result<f64> {
    let b = linalg::quad_form(&base.cov, v);
    let a = linalg::quad_form(&event.cov, v);
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::arg("zero projected variance along direction"));
    }
    let d = v.dot(&(&event.mean - &base.mean));
    let r = a / b;
    // r − 1 − ln r ≥ 0 analytically; guard against rounding below zero
    Ok(0.5 * ((r - 1.0 - r.ln()).max(0.0) + d * d / b))
}

/// Euclidean gradient of the (scale-invariant) score at `v`.
pub fn score_gradient(v: &DVector<f64>, base: &MomentPair, event: &MomentPair) -> DVector<f64> {
    let dmu = &event.mean - &base.mean;
    let r0v = &base.cov * v;
    let rev = &event.cov * v;
    let b = v.dot(&r0v);
    let a = v.dot(&rev);
    let d = v.dot(&dmu);
    &rev * (1.0 / b - 1.0 / a) + &r0v * (1.0 / b - (a + d * d) / (b * b)) + &dmu * (d / b)
}

/// Normalized `R₀⁻¹ Δμ`.
pub fn sensitive_direction_mean(base: &MomentPair, event: &MomentPair) -> Result<DVector<f64>> {
    check_pair(base, event)?;
    let dmu = &event.mean - &base.mean;
    if dmu.norm() == 0.0 {
        return Err(Error::DegenerateDirection("mean shift is zero".into()));
    }
    let chol = base.cov.clone().cholesky().ok_or_else(|| Error::arg("base covariance is not invertible"))?;
    let w = chol.solve(&dmu);
    let norm = w.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::DegenerateDirection("weighted mean shift vanished".into()));
    }
    Ok(linalg::canonical_sign(w / norm))
}

/// Generalized eigenpairs of `R_ℰ v = λ R₀ v`, sorted by `|ln λ|` descending.
pub fn sensitive_direction_cov(base: &MomentPair, event: &MomentPair) -> Result<Vec<(f64, DVector<f64>)>> {
    check_pair(base, event)?;
    let s = linalg::inv_sqrt_spd(&base.cov).ok_or_else(|| Error::arg("base covariance is not positive definite"))?;
    let m = linalg::symmetrize(&(&s * &event.cov * &s));
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, DVector<f64>)> = (0..eig.eigenvalues.len())
        .map(|i| {
            let v = &s * eig.eigenvectors.column(i);
            let n = v.norm();
            (eig.eigenvalues[i], linalg::canonical_sign(v / n))
        })
        .collect();
    let dev = |l: f64| if l > 0.0 { l.ln().abs() } else { f64::INFINITY };
    pairs.sort_by(|x, y| dev(y.0).total_cmp(&dev(x.0)));
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartOutcome {
    pub label: String,
    pub score: f64,
    pub converged: bool,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensitiveDirection {
    pub vector: DVector<f64>,
    pub score: f64,
    /// One entry per optimizer start, so near-ties between starts are visible.
    pub starts: Vec<StartOutcome>,
}

fn ascend(start: &DVector<f64>, base: &MomentPair, event: &MomentPair, tol: f64) -> Result<(DVector<f64>, f64, bool)> {
    let mut v = start.normalize();
    let mut j = raw_score(&v, base, event)?;
    let mut step = 1.0;
    for _ in 0..MAX_ITERATIONS {
        let g = score_gradient(&v, base, event);
        let g = &g - &v * g.dot(&v);
        let gn = g.norm();
        if gn < 1e-14 * (1.0 + j) {
            return Ok((v, j, true));
        }
        // step halving until the score improves
        let mut accepted = None;
        while step * gn > 1e-16 {
            let cand = (&v + &g * step).normalize();
            match raw_score(&cand, base, event) {
                Ok(jc) if jc > j => {
                    accepted = Some((cand, jc));
                    break;
                }
                _ => step *= 0.5,
            }
        }
        let Some((cand, jc)) = accepted else {
            return Ok((v, j, true));
        };
        let gain = jc - j;
        v = cand;
        j = jc;
        if gain < tol {
            return Ok((v, j, true));
        }
        step *= 2.0;
    }
    Ok((v, j, false))
}

/// Maximizes the score over the unit sphere from the mean-shift direction,
/// every generalized eigenvector, pairwise coordinate combinations and their
/// negations; returns the best start.
pub fn sensitive_direction_full(base: &MomentPair, event: &MomentPair, tol: f64) -> Result<SensitiveDirection> {
    let n = check_pair(base, event)?;
    if base.cov.clone().cholesky().is_none() || event.cov.clone().cholesky().is_none() {
        return Err(Error::arg("both covariances must be positive definite"));
    }
    let mut starts: Vec<(String, DVector<f64>)> = Vec::new();
    match sensitive_direction_mean(base, event) {
        Ok(v) => starts.push(("mean_shift".into(), v)),
        Err(Error::DegenerateDirection(_)) => {}
        Err(e) => return Err(e),
    }
    for (i, (_, v)) in sensitive_direction_cov(base, event)?.into_iter().enumerate() {
        starts.push((format!("cov_eigen_{i}"), v));
    }
    for i in 0..n {
        starts.push((format!("axis_{i}"), DVector::from_fn(n, |k, _| if k == i { 1.0 } else { 0.0 })));
        for k in i + 1..n {
            for s in [1.0, -1.0] {
                let v = DVector::from_fn(n, |m, _| {
                    if m == i {
                        1.0
                    } else if m == k {
                        s
                    } else {
                        0.0
                    }
                });
                starts.push((format!("axis_{i}_{k}{}", if s > 0.0 { "+" } else { "-" }), v.normalize()));
            }
        }
    }
    let negated: Vec<(String, DVector<f64>)> = starts.iter().map(|(l, v)| (format!("-{l}"), -v)).collect();
    starts.extend(negated);

    let mut outcomes = Vec::with_capacity(starts.len());
    let mut best: Option<(DVector<f64>, f64)> = None;
    let mut best_any: Option<(DVector<f64>, f64)> = None;
    for (label, s) in &starts {
        let Ok((v, j, converged)) = ascend(s, base, event, tol) else {
            continue;
        };
        if best_any.as_ref().is_none_or(|b| j > b.1) {
            best_any = Some((v.clone(), j));
        }
        if converged && best.as_ref().is_none_or(|b| j > b.1) {
            best = Some((v.clone(), j));
        }
        outcomes.push(StartOutcome { label: label.clone(), score: j, converged, vector: v.iter().copied().collect() });
    }
    match best {
        Some((v, score)) => Ok(SensitiveDirection { vector: linalg::canonical_sign(v), score, starts: outcomes }),
        None => {
            let (v, s) = best_any.unwrap_or((DVector::zeros(n), f64::NAN));
            Err(Error::Optimization {
                reason: "no optimizer start converged".into(),
                best: linalg::canonical_sign(v).iter().copied().collect(),
                best_score: s,
            })
        }
    }
}

/// Sign-invariant angle between two directions, in radians.
pub fn direction_angle(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    (a.dot(b).abs() / (a.norm() * b.norm())).min(1.0).acos()
}

/// Generalized eigenvector (of `R_ℰ`, `R₀`) with the highest score; the
/// covariance-only optimum when the means agree.
pub fn best_cov_direction(base: &MomentPair, event: &MomentPair) -> Result<(f64, DVector<f64>)> {
    let mut best: Option<(f64, DVector<f64>)> = None;
    for (_, v) in sensitive_direction_cov(base, event)? {
        let s = raw_score(&v, base, event)?;
        if best.as_ref().is_none_or(|b| s > b.0) {
            best = Some((s, v));
        }
    }
    Ok(best.expect("at least one eigenpair"))
}

pub fn as_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let n = rows.len();
    DMatrix::from_fn(n, rows.first().map_or(0, |r| r.len()), |i, j| rows[i][j])
}
