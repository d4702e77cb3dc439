use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assimilate::{BeliefPath, GaussianBelief};
use crate::linalg;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixture {
    pub components: Vec<(f64, GaussianBelief)>,
}

impl GaussianMixture {
    pub fn new(components: Vec<(f64, GaussianBelief)>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::arg("a mixture needs at least one component"));
        }
        let dim = components[0].1.dim();
        if components.iter().any(|(w, b)| !(*w >= 0.0) || b.dim() != dim) {
            return Err(Error::arg("mixture weights must be nonnegative and dimensions equal"));
        }
        let total: f64 = components.iter().map(|c| c.0).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::arg(format!("mixture weights sum to {total}")));
        }
        Ok(Self { components })
    }

    pub fn equal(beliefs: Vec<GaussianBelief>) -> Result<Self> {
        let w = 1.0 / beliefs.len().max(1) as f64;
        Self::new(beliefs.into_iter().map(|b| (w, b)).collect())
    }

    pub fn dim(&self) -> usize {
        self.components[0].1.dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    /// Density of hidden component `j` at each grid point.
    pub fn marginal_density(&self, j: usize, grid: &[f64]) -> Vec<f64> {
        let parts: Vec<(f64, f64, f64)> =
            self.components.iter().map(|(w, b)| (*w, b.mean[j], b.cov[(j, j)].max(linalg::EIGEN_FLOOR))).collect();
        grid.iter()
            .map(|&x| {
                parts
                    .iter()
                    .map(|&(w, m, v)| w * (-(x - m).powi(2) / (2.0 * v)).exp() / (std::f64::consts::TAU * v).sqrt())
                    .sum()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MomentLabel {
    Unconditional,
    EventConditioned,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentPair {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub label: MomentLabel,
}

impl MomentPair {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>, label: MomentLabel) -> Self {
        Self { mean, cov, label }
    }

    pub fn belief(&self) -> GaussianBelief {
        GaussianBelief { mean: self.mean.clone(), cov: self.cov.clone() }
    }
}

/// Equal-weight mixture of the beliefs at `(path, index)` pairs.
pub fn build_mixture(paths: &[BeliefPath], selection: &[(usize, usize)]) -> Result<GaussianMixture> {
    if selection.is_empty() {
        return Err(Error::arg("mixture selection is empty"));
    }
    let beliefs = selection
        .iter()
        .map(|&(p, i)| {
            let path = paths.get(p).ok_or_else(|| Error::arg(format!("path {p} out of range")))?;
            path.beliefs.get(i).cloned().ok_or_else(|| Error::arg(format!("index {i} out of range for path {p}")))
        })
        .collect::<Result<Vec<_>>>()?;
    GaussianMixture::equal(beliefs)
}

/// Every `stride`-th index of every path, starting at `start`.
pub fn select_strided(paths: &[BeliefPath], start: usize, stride: usize) -> Vec<(usize, usize)> {
    let stride = stride.max(1);
    paths.iter().enumerate().flat_map(|(p, path)| (start..path.len()).step_by(stride).map(move |i| (p, i))).collect()
}

/// Law of total mean and covariance.
pub fn mixture_moments(m: &GaussianMixture, label: MomentLabel) -> MomentPair {
    let n = m.dim();
    let mut mean = DVector::zeros(n);
    for (w, b) in &m.components {
        mean += &b.mean * *w;
    }
    let mut cov = DMatrix::zeros(n, n);
    for (w, b) in &m.components {
        let d = &b.mean - &mean;
        cov += (&b.cov + &d * d.transpose()) * *w;
    }
    MomentPair { mean, cov: linalg::symmetrize(&cov), label }
}

/// Integrated autocorrelation time of a scalar series, summing the sample
/// autocorrelation up to its first non-positive lag.
pub fn decorrelation_time(series: &[f64], dt: f64) -> f64 {
    let n = series.len();
    if n < 3 {
        return dt;
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let c: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let var = c.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var == 0.0 {
        return dt;
    }
    let mut tau = 0.5;
    let max_lag = n / 2;
    for lag in 1..max_lag {
        let r = c[..n - lag].iter().zip(&c[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * var);
        if r <= 0.0 {
            break;
        }
        tau += r;
    }
    2.0 * tau * dt
}

/// Minimum stride between unconditional-mixture samples, in grid steps.
pub const MIN_STRIDE: usize = 20;

/// Sampling stride of one decorrelation time, never below [`MIN_STRIDE`].
pub fn decorrelation_stride(series: &[f64], dt: f64) -> usize {
    ((decorrelation_time(series, dt) / dt).round() as usize).max(MIN_STRIDE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assimilate::BeliefKind;

    fn path(beliefs: Vec<GaussianBelief>) -> BeliefPath {
        BeliefPath { dt: 0.1, t0: 0.0, kind: BeliefKind::Smoother, beliefs }
    }

    #[test]
    fn construction_examples() {
        let a = GaussianBelief::scalar(1.0, 1.0);
        let b = GaussianBelief::scalar(-1.0, 1.0);
        let p = vec![path(vec![a.clone(), b.clone()])];
        let one = build_mixture(&p, &[(0, 0)]).unwrap();
        assert_eq!(one.components, vec![(1.0, a.clone())]);
        let two = build_mixture(&p, &[(0, 0), (0, 1)]).unwrap();
        assert_eq!(two.components.iter().map(|c| c.0).collect::<Vec<_>>(), vec![0.5, 0.5]);
        assert!(build_mixture(&p, &[]).is_err());
        let mm = mixture_moments(&two, MomentLabel::Unconditional);
        assert!(mm.mean[0].abs() < 1e-15 && (mm.cov[(0, 0)] - 2.0).abs() < 1e-15);
        let m1 = mixture_moments(&one, MomentLabel::Unconditional);
        assert_eq!((m1.mean[0], m1.cov[(0, 0)]), (1.0, 1.0));
        let same = GaussianMixture::equal(vec![a.clone(), a.clone(), a.clone()]).unwrap();
        let ms = mixture_moments(&same, MomentLabel::Unconditional);
        assert!((ms.mean[0] - 1.0).abs() < 1e-15 && (ms.cov[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn subset_moments_commute_with_selection() {
        let beliefs: Vec<GaussianBelief> =
            (0..10).map(|i| GaussianBelief::scalar(i as f64 * 0.3 - 1.0, 0.5 + 0.1 * i as f64)).collect();
        let p = vec![path(beliefs.clone())];
        let sel = [(0, 2), (0, 5), (0, 7)];
        let via = mixture_moments(&build_mixture(&p, &sel).unwrap(), MomentLabel::EventConditioned);
        let direct = mixture_moments(
            &GaussianMixture::equal(sel.iter().map(|&(_, i)| beliefs[i].clone()).collect()).unwrap(),
            MomentLabel::EventConditioned,
        );
        assert_eq!(via, direct);
    }

    #[test]
    fn weights_checked() {
        let a = GaussianBelief::scalar(0.0, 1.0);
        assert!(GaussianMixture::new(vec![(0.5, a.clone()), (0.6, a)]).is_err());
    }

    #[test]
    fn decorrelation_of_white_noise_is_short() {
        let s: Vec<f64> = (0..5000).map(|i| crate::rng::normal_at(1, 1, i, 0)).collect();
        assert_eq!(decorrelation_stride(&s, 0.01), MIN_STRIDE);
        let ar: Vec<f64> = {
            let mut v = vec![0.0; 20000];
            for i in 1..v.len() {
                v[i] = 0.9 * v[i - 1] + crate::rng::normal_at(2, 1, i as u64, 0);
            }
            v
        };
        // AR(1) integrated time (1 + φ)/(1 − φ) = 19 steps
        let t = decorrelation_time(&ar, 1.0);
        assert!(t > 12.0 && t < 30.0, "{t}");
    }
}
