//! Event alignment, most-probable hidden paths and likelihood-weighted
//! representative paths.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assimilate::BeliefPath;
use crate::io;
use crate::linalg;
use crate::simulate::Trajectory;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    #[default]
    Peak,
    Onset,
}

/// One event to align: which ensemble member it came from and its anchor
/// candidates on that member's grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventRef {
    pub event_id: usize,
    pub member: usize,
    pub peak_index: usize,
    pub onset_index: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignedEventPath {
    pub event_id: usize,
    pub member: usize,
    pub anchor: Anchor,
    /// Index on the member's native grid corresponding to relative time 0.
    pub anchor_index: usize,
    pub rel_grid: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub obs: Vec<Vec<f64>>,
}

impl AlignedEventPath {
    pub fn len(&self) -> usize {
        self.rel_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rel_grid.is_empty()
    }

    /// Position of relative time 0 within the aligned grid.
    pub fn zero_index(&self) -> usize {
        self.rel_grid.iter().position(|&t| t == 0.0).unwrap_or(0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Alignment {
    pub paths: Vec<AlignedEventPath>,
    /// `(event_id, reason)` for events that could not be aligned.
    pub dropped: Vec<(usize, String)>,
}

/// Smoother means: the most probable hidden path under the Gaussian path
/// posterior.
pub fn map_path(smoother: &BeliefPath) -> Vec<DVector<f64>> {
    smoother.beliefs.iter().map(|b| b.mean.clone()).collect()
}

pub fn align_events(
    events: &[EventRef],
    smoothers: &[BeliefPath],
    trajs: &[Trajectory],
    window_pre: f64,
    window_post: f64,
    anchor: Anchor,
) -> Result<Alignment> {
    if smoothers.len() != trajs.len() {
        return Err(Error::arg("smoother and trajectory counts differ"));
    }
    if !(window_pre >= 0.0 && window_post >= 0.0) {
        return Err(Error::arg("alignment windows must be nonnegative"));
    }
    let results: Vec<std::result::Result<AlignedEventPath, (usize, String)>> = events
        .par_iter()
        .map(|ev| {
            let drop = |why: String| Err((ev.event_id, why));
            let (Some(sm), Some(tr)) = (smoothers.get(ev.member), trajs.get(ev.member)) else {
                return drop(format!("member {} does not exist", ev.member));
            };
            let dt = sm.dt;
            let pre = (window_pre / dt).round() as usize;
            let post = (window_post / dt).round() as usize;
            let a = match anchor {
                Anchor::Peak => ev.peak_index,
                Anchor::Onset => match ev.onset_index {
                    Some(i) => i,
                    None => return drop("no onset time available".into()),
                },
            };
            let n = sm.len().min(tr.len());
            if a < pre {
                return drop(format!("window starts {:.6} before the trajectory", (pre - a) as f64 * dt));
            }
            if a + post >= n {
                return drop(format!("window ends {:.6} after the trajectory", (a + post + 1 - n) as f64 * dt));
            }
            let range = a - pre..=a + post;
            Ok(AlignedEventPath {
                event_id: ev.event_id,
                member: ev.member,
                anchor,
                anchor_index: a,
                rel_grid: range.clone().map(|i| (i as f64 - a as f64) * dt).collect(),
                means: range.clone().map(|i| sm.beliefs[i].mean.clone()).collect(),
                covs: range.clone().map(|i| sm.beliefs[i].cov.clone()).collect(),
                obs: range.map(|i| tr.obs_at(i).to_vec()).collect(),
            })
        })
        .collect();
    let mut out = Alignment { paths: Vec::new(), dropped: Vec::new() };
    for r in results {
        match r {
            Ok(p) => out.paths.push(p),
            Err(d) => out.dropped.push(d),
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadraticScore {
    pub value: f64,
    /// At least one marginal covariance needed ridge regularization.
    pub regularized: bool,
}

/// `½ Σₙ (cₙ − μₙ)ᵀ Rₙ⁻¹ (cₙ − μₙ)` with time-marginal covariances.
pub fn quadratic_score(candidate: &[DVector<f64>], aligned: &AlignedEventPath) -> Result<QuadraticScore> {
    if candidate.len() != aligned.len() {
        return Err(Error::arg("candidate path does not match the aligned grid"));
    }
    let mut value = 0.0;
    let mut regularized = false;
    for ((c, m), r) in candidate.iter().zip(&aligned.means).zip(&aligned.covs) {
        let d = c - m;
        if d.iter().all(|&x| x == 0.0) {
            continue;
        }
        let (inv, reg) = linalg::spd_inverse(r).ok_or_else(|| Error::arg("marginal covariance is not invertible"))?;
        regularized |= reg;
        value += 0.5 * linalg::quad_form(&inv, &d);
    }
    Ok(QuadraticScore { value, regularized })
}

/// Scalar posterior uncertainty of an aligned path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PathUncertainty {
    #[default]
    LogDet,
    Trace,
}

/// `J = ½ Σₙ log det Rₙ` (or `½ Σₙ tr Rₙ`), divided by the number of grid points.
pub fn path_uncertainty(aligned: &AlignedEventPath, measure: PathUncertainty) -> f64 {
    let total: f64 = aligned
        .covs
        .iter()
        .map(|r| match measure {
            PathUncertainty::LogDet => linalg::logdet_spd(r),
            PathUncertainty::Trace => r.trace(),
        })
        .sum();
    0.5 * total / aligned.len().max(1) as f64
}

/// Max-shifted softmax of `−J`.
pub fn softmax_weights(j: &[f64]) -> Vec<f64> {
    let jmin = j.iter().copied().fold(f64::INFINITY, f64::min);
    let e: Vec<f64> = j.iter().map(|&x| (-(x - jmin)).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|x| x / z).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PathWeights {
    pub j: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn path_weights(aligned: &[AlignedEventPath], measure: PathUncertainty) -> Result<PathWeights> {
    if aligned.is_empty() {
        return Err(Error::arg("path weights need at least one event"));
    }
    let j: Vec<f64> = aligned.iter().map(|a| path_uncertainty(a, measure)).collect();
    let weights = softmax_weights(&j);
    Ok(PathWeights { j, weights })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepresentativePath {
    pub rel_grid: Vec<f64>,
    pub mean_path: Vec<DVector<f64>>,
    pub total_cov: Vec<DMatrix<f64>>,
    /// `Σₖ wₖ Rₙ⁽ᵏ⁾`, the within-event part of `total_cov`.
    pub within_cov: Vec<DMatrix<f64>>,
    pub weights: Vec<f64>,
    pub obs_mean: Vec<Vec<f64>>,
}

impl RepresentativePath {
    pub fn between_cov(&self, n: usize) -> DMatrix<f64> {
        &self.total_cov[n] - &self.within_cov[n]
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let ny = self.mean_path.first().map_or(0, |m| m.len());
        let nx = self.obs_mean.first().map_or(0, |o| o.len());
        let mut header = vec!["rel_t".to_string()];
        if nx == 1 {
            header.push("obs_mean".into());
        } else {
            header.extend((1..=nx).map(|i| format!("obs_mean_{i}")));
        }
        header.extend((1..=ny).map(|i| format!("ybar_{i}")));
        for i in 1..=ny {
            header.extend((1..=ny).map(|j| format!("sigbar_{i}{j}")));
        }
        let rows = (0..self.rel_grid.len()).map(|n| {
            let mut r = vec![self.rel_grid[n]];
            r.extend_from_slice(&self.obs_mean[n]);
            r.extend(self.mean_path[n].iter());
            r.extend(linalg::row_major(&self.total_cov[n]));
            r
        });
        io::write_table(path, &header, rows)
    }
}

pub fn representative_path(aligned: &[AlignedEventPath], weights: &[f64]) -> Result<RepresentativePath> {
    let Some(first) = aligned.first() else {
        return Err(Error::arg("representative path needs at least one event"));
    };
    if weights.len() != aligned.len()
        || weights.iter().any(|w| !(*w >= 0.0))
        || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-12
    {
        return Err(Error::arg("weights must be nonnegative, one per event, and sum to 1"));
    }
    let len = first.len();
    if aligned.iter().any(|a| a.len() != len) {
        return Err(Error::arg("aligned paths have different lengths"));
    }
    let k = aligned.len() as f64;
    let mut mean_path = Vec::with_capacity(len);
    let mut total_cov = Vec::with_capacity(len);
    let mut within_cov = Vec::with_capacity(len);
    let mut obs_mean = Vec::with_capacity(len);
    for n in 0..len {
        let ny = first.means[n].len();
        let mut ybar = DVector::zeros(ny);
        let mut within = DMatrix::zeros(ny, ny);
        for (a, &w) in aligned.iter().zip(weights) {
            ybar += &a.means[n] * w;
            within += &a.covs[n] * w;
        }
        let mut total = within.clone();
        for (a, &w) in aligned.iter().zip(weights) {
            let d = &a.means[n] - &ybar;
            total += &d * d.transpose() * w;
        }
        let nx = first.obs[n].len();
        let obs: Vec<f64> = (0..nx).map(|j| aligned.iter().map(|a| a.obs[n][j]).sum::<f64>() / k).collect();
        mean_path.push(ybar);
        total_cov.push(linalg::symmetrize(&total));
        within_cov.push(within);
        obs_mean.push(obs);
    }
    Ok(RepresentativePath {
        rel_grid: first.rel_grid.clone(),
        mean_path,
        total_cov,
        within_cov,
        weights: weights.to_vec(),
        obs_mean,
    })
}

pub fn write_weight_table(path: &Path, aligned: &[AlignedEventPath], w: &PathWeights) -> Result<()> {
    let header: Vec<String> = ["event_id", "member", "J", "weight"].iter().map(|s| s.to_string()).collect();
    let rows = aligned
        .iter()
        .zip(w.j.iter().zip(&w.weights))
        .map(|(a, (j, wt))| vec![a.event_id.to_string(), a.member.to_string(), io::fmt_f64(*j), io::fmt_f64(*wt)]);
    io::write_records(path, &header, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assimilate::{BeliefKind, GaussianBelief};

    fn scalar_path(means: &[f64], vars: &[f64]) -> AlignedEventPath {
        AlignedEventPath {
            event_id: 0,
            member: 0,
            anchor: Anchor::Peak,
            anchor_index: 0,
            rel_grid: (0..means.len()).map(|i| i as f64).collect(),
            means: means.iter().map(|&m| DVector::from_element(1, m)).collect(),
            covs: vars.iter().map(|&v| DMatrix::from_element(1, 1, v)).collect(),
            obs: means.iter().map(|&m| vec![m]).collect(),
        }
    }

    #[test]
    fn score_examples() {
        let p = scalar_path(&[0.0], &[4.0]);
        assert_eq!(quadratic_score(&p.means, &p).unwrap().value, 0.0);
        let s = quadratic_score(&[DVector::from_element(1, 2.0)], &p).unwrap();
        assert!((s.value - 0.5).abs() < 1e-15);
        let p2 = scalar_path(&[0.0, 3.0], &[4.0, 1.0]);
        let s2 = quadratic_score(&[DVector::from_element(1, 2.0), DVector::from_element(1, 3.0)], &p2).unwrap();
        assert_eq!(s.value, s2.value);
        assert!(quadratic_score(&[], &p).is_err());
    }

    #[test]
    fn weight_examples() {
        let w = softmax_weights(&[0.0, 3f64.ln()]);
        assert!((w[0] - 0.75).abs() < 1e-15 && (w[1] - 0.25).abs() < 1e-15);
        assert_eq!(softmax_weights(&[1.7]), vec![1.0]);
        let same = path_weights(
            &[scalar_path(&[0.0, 1.0], &[2.0, 2.0]), scalar_path(&[5.0, 1.0], &[2.0, 2.0])],
            PathUncertainty::LogDet,
        )
        .unwrap();
        assert!((same.weights[0] - 0.5).abs() < 1e-15);
        let shifted = softmax_weights(&[1000.0, 1000.0 + 3f64.ln()]);
        assert!((shifted[0] - 0.75).abs() < 1e-12);
    }

    #[test]
    fn representative_examples() {
        let a = scalar_path(&[1.0], &[1.0]);
        let b = scalar_path(&[-1.0], &[1.0]);
        let r = representative_path(&[a.clone(), b], &[0.5, 0.5]).unwrap();
        assert_eq!(r.mean_path[0][0], 0.0);
        assert!((r.total_cov[0][(0, 0)] - 2.0).abs() < 1e-15);
        let one = representative_path(std::slice::from_ref(&a), &[1.0]).unwrap();
        assert_eq!(one.mean_path, a.means);
        assert_eq!(one.total_cov, a.covs);
        let c = scalar_path(&[1.0], &[3.0]);
        let same = representative_path(&[a, c], &[0.25, 0.75]).unwrap();
        assert!((same.total_cov[0][(0, 0)] - 2.5).abs() < 1e-15);
        assert_eq!(same.between_cov(0)[(0, 0)], 0.0);
    }

    #[test]
    fn alignment_windows() {
        let dt = 0.005;
        let n = 2001;
        let beliefs = vec![GaussianBelief::scalar(0.0, 1.0); n];
        let sm = BeliefPath { dt, t0: 0.0, kind: BeliefKind::Smoother, beliefs };
        let tr = Trajectory::new(dt, 0.0, 1, (0..n).map(|i| i as f64).collect(), 0).unwrap();
        let evs = [
            EventRef { event_id: 0, member: 0, peak_index: 1000, onset_index: None },
            EventRef { event_id: 1, member: 0, peak_index: n - 1 - 100, onset_index: None },
            EventRef { event_id: 2, member: 0, peak_index: 600, onset_index: None },
        ];
        let al = align_events(&evs, &[sm], &[tr], 1.5, 1.5, Anchor::Peak).unwrap();
        assert_eq!(al.paths.len(), 2);
        assert_eq!(al.paths[0].len(), 601);
        assert_eq!(al.paths[0].zero_index(), 300);
        assert_eq!(al.paths[0].rel_grid[300], 0.0);
        assert_eq!(al.paths[0].obs[300], vec![1000.0]);
        assert_eq!(al.paths[1].obs[300], vec![600.0]);
        assert_eq!(al.dropped.len(), 1);
        assert_eq!(al.dropped[0].0, 1);
        let onset = align_events(&evs[..1], &[], &[], 1.5, 1.5, Anchor::Onset).unwrap();
        assert_eq!(onset.dropped.len(), 1);
    }
}
