//! Relative entropy between beliefs and the trajectory-wise diagnostics built
//! on it: filter-vs-smoother divergence, onset detection and influence ranges.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assimilate::{BackwardOperators, BeliefPath, GaussianBelief};
use crate::linalg::{self, logdet_spd, spd_inverse, PSD_TOLERANCE};
use crate::models::CgnsModel;
use crate::simulate::Trajectory;
use crate::{Error, Result};

/// The two addends of the Gaussian relative entropy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KlParts {
    /// `½ (μ_q − μ_p)ᵀ R_q⁻¹ (μ_q − μ_p)`
    pub signal: f64,
    /// `½ (tr(R_q⁻¹ R_p) − n + ln det R_q − ln det R_p)`
    pub dispersion: f64,
}

impl KlParts {
    pub fn total(&self) -> f64 {
        self.signal + self.dispersion
    }
}

/// `KL(p ‖ q)` split into signal and dispersion parts.
pub fn kl_gaussian_parts(p: &GaussianBelief, q: &GaussianBelief) -> Result<KlParts> {
    let n = p.dim();
    if q.dim() != n || p.cov.shape() != (n, n) || q.cov.shape() != (n, n) {
        return Err(Error::arg(format!("belief dimensions differ: {} vs {}", n, q.dim())));
    }
    if n == 1 {
        let (vp, vq) = (p.cov[(0, 0)], q.cov[(0, 0)]);
        if vp < -PSD_TOLERANCE || vq < -PSD_TOLERANCE || !vp.is_finite() || !vq.is_finite() {
            return Err(Error::arg("variance is negative or non-finite"));
        }
        let (qi, _) = spd_inverse(&q.cov).ok_or_else(|| Error::arg("reference covariance is singular"))?;
        let qi = qi[(0, 0)];
        let d = q.mean[0] - p.mean[0];
        let signal = 0.5 * d * d * qi;
        let dispersion = 0.5 * (qi * vp - 1.0 + logdet_spd(&q.cov) - logdet_spd(&p.cov));
        return Ok(KlParts { signal, dispersion: dispersion.max(0.0) });
    }
    for b in [p, q] {
        if linalg::min_eigenvalue(&b.cov) < -PSD_TOLERANCE {
            return Err(Error::arg("covariance is not positive semi-definite"));
        }
    }
    let (qi, _) = spd_inverse(&q.cov).ok_or_else(|| Error::arg("reference covariance is singular"))?;
    let d = &q.mean - &p.mean;
    let signal = 0.5 * linalg::quad_form(&qi, &d);
    let dispersion = 0.5 * ((&qi * &p.cov).trace() - n as f64 + logdet_spd(&q.cov) - logdet_spd(&p.cov));
    Ok(KlParts { signal: signal.max(0.0), dispersion: dispersion.max(0.0) })
}

pub fn kl_gaussian(p: &GaussianBelief, q: &GaussianBelief) -> Result<f64> {
    kl_gaussian_parts(p, q).map(|k| k.total())
}

fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2).zip(y.windows(2)).map(|(xs, ys)| 0.5 * (xs[1] - xs[0]) * (ys[0] + ys[1])).sum()
}

/// Floor applied to the reference density inside the logarithm.
pub const DENSITY_FLOOR: f64 = 1e-300;

/// `∫ p ln(p / q)` by the trapezoid rule on a common increasing grid.
pub fn kl_numeric_1d(grid: &[f64], p: &[f64], q: &[f64]) -> Result<f64> {
    if grid.len() < 2 || p.len() != grid.len() || q.len() != grid.len() {
        return Err(Error::arg("densities must be sampled on the same grid of at least two points"));
    }
    if grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::arg("grid must be strictly increasing"));
    }
    for (name, d) in [("p", p), ("q", q)] {
        if d.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::arg(format!("density {name} has negative or non-finite values")));
        }
        let mass = trapezoid(grid, d);
        if (mass - 1.0).abs() > 1e-3 {
            return Err(Error::arg(format!("density {name} integrates to {mass}, not 1")));
        }
    }
    let f: Vec<f64> = p
        .iter()
        .zip(q)
        .map(|(&pi, &qi)| if pi == 0.0 { 0.0 } else { pi * (pi / qi.max(DENSITY_FLOOR)).ln() })
        .collect();
    Ok(trapezoid(grid, &f).max(0.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlSeries {
    pub dt: f64,
    pub t0: f64,
    pub values: Vec<f64>,
    pub p_kind: String,
    pub q_kind: String,
}

impl KlSeries {
    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header = ["t".to_string(), "kl".to_string()];
        crate::io::write_table(path, &header, self.values.iter().enumerate().map(|(i, &v)| vec![self.time(i), v]))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (header, rows) = crate::io::read_table(path)?;
        if header != ["t", "kl"] || rows.len() < 2 {
            return Err(Error::Parse { path: path.into(), reason: "expected columns t, kl".into() });
        }
        Ok(Self {
            dt: rows[1][0] - rows[0][0],
            t0: rows[0][0],
            values: rows.iter().map(|r| r[1]).collect(),
            p_kind: "smoother".into(),
            q_kind: "filter".into(),
        })
    }
}

/// Pointwise `KL(smoother ‖ filter)`.
pub fn kl_series_filter_smoother(smoother: &BeliefPath, filter: &BeliefPath) -> Result<KlSeries> {
    if !smoother.same_grid(filter) {
        return Err(Error::arg("smoother and filter paths are on different grids"));
    }
    let values =
        smoother.beliefs.par_iter().zip(&filter.beliefs).map(|(s, f)| kl_gaussian(s, f)).collect::<Result<Vec<_>>>()?;
    Ok(KlSeries { dt: filter.dt, t0: filter.t0, values, p_kind: "smoother".into(), q_kind: "filter".into() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Onset {
    pub t_on: f64,
    pub index: usize,
    /// False when no grid point in the window reached the threshold, in which
    /// case `t_on` is the event time itself.
    pub precursor_detected: bool,
}

/// Earliest time in `[t_star − t_pre, t_star]` at which the series reaches
/// `kappa`.
pub fn onset_time(series: &KlSeries, kappa: f64, t_pre: f64, t_star: f64) -> Result<Onset> {
    if !(kappa >= 0.0 && kappa.is_finite()) || !(t_pre > 0.0 && t_pre.is_finite()) {
        return Err(Error::arg(format!("need kappa ≥ 0 and T_pre > 0, got {kappa}, {t_pre}")));
    }
    let n = series.len();
    if n == 0 {
        return Err(Error::arg("empty series"));
    }
    let eps = 1e-9 * series.dt;
    let start = t_star - t_pre;
    let t_end = series.time(n - 1);
    if start < series.t0 - eps || t_star > t_end + eps {
        return Err(Error::arg(format!(
            "window [{start}, {t_star}] is outside the series domain [{}, {t_end}]",
            series.t0
        )));
    }
    let first = (((start - series.t0) / series.dt) - 1e-9).ceil().max(0.0) as usize;
    let last = (((t_star - series.t0) / series.dt) + 1e-9).floor().min((n - 1) as f64) as usize;
    let star_index = last;
    for i in first..=last {
        if series.values[i] >= kappa {
            return Ok(Onset { t_on: series.time(i), index: i, precursor_detected: true });
        }
    }
    Ok(Onset { t_on: t_star, index: star_index, precursor_detected: false })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceProfile {
    pub t: f64,
    pub t_index: usize,
    pub kl_at_zero: f64,
    pub lag_grid: Vec<f64>,
    pub kl_by_lag: Vec<f64>,
    /// `τ^(η)` evaluated at `η = kl_by_lag[j]`.
    pub tau_eta: Vec<f64>,
    pub integrated_range: f64,
}

impl InfluenceProfile {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let header = ["lag".to_string(), "kl".to_string(), "tau_eta".to_string()];
        let rows = (0..self.lag_grid.len()).map(|j| vec![self.lag_grid[j], self.kl_by_lag[j], self.tau_eta[j]]);
        crate::io::write_table(path, &header, rows)
    }
}

/// `τ^(η) = inf{τ > 0 : KL(τ) ≤ η}` on the discrete lag grid. Returns the
/// last lag when no positive lag reaches the tolerance.
pub fn tau_at(lags: &[f64], kls: &[f64], eta: f64) -> f64 {
    for j in 1..lags.len() {
        if kls[j] <= eta {
            return lags[j];
        }
    }
    *lags.last().unwrap_or(&0.0)
}

/// `(1/D) ∫₀^D τ^(η) dη` with `D = kls[0]`. `τ^(η)` is piecewise constant
/// between consecutive distinct KL values, so summing over that staircase is
/// exact for the computed profile.
pub fn integrated_range(lags: &[f64], kls: &[f64]) -> f64 {
    let d = kls.first().copied().unwrap_or(0.0);
    if !(d > 0.0) || lags.len() < 2 {
        return 0.0;
    }
    let mut grid: Vec<f64> = kls.iter().copied().filter(|&v| v < d).chain([0.0]).collect();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let mut acc = 0.0;
    for (i, &lo) in grid.iter().enumerate() {
        let hi = grid.get(i + 1).copied().unwrap_or(d).min(d);
        if hi > lo {
            acc += tau_at(lags, kls, lo) * (hi - lo);
        }
    }
    acc / d
}

fn build_profile(t: f64, t_index: usize, lags: Vec<f64>, kls: Vec<f64>) -> InfluenceProfile {
    let tau_eta = kls.iter().map(|&e| tau_at(&lags, &kls, e)).collect();
    let integrated = integrated_range(&lags, &kls);
    InfluenceProfile {
        t,
        t_index,
        kl_at_zero: kls[0],
        lag_grid: lags,
        kl_by_lag: kls,
        tau_eta,
        integrated_range: integrated,
    }
}

/// Profile from precomputed backward operators. `max_lag` (in time units)
/// truncates the lag grid; `None` runs to the end of the trajectory.
pub fn influence_profile_with(
    ops: &BackwardOperators,
    filter: &BeliefPath,
    smoother: &BeliefPath,
    t_index: usize,
    lag_stride: usize,
    max_lag: Option<f64>,
) -> Result<InfluenceProfile> {
    let n = filter.len();
    if t_index >= n || smoother.len() != n {
        return Err(Error::arg(format!("t_index {t_index} outside a path of {n} beliefs")));
    }
    if lag_stride == 0 {
        return Err(Error::arg("lag_stride must be positive"));
    }
    let t = filter.time(t_index);
    let kl0 = kl_gaussian(&smoother.beliefs[t_index], &filter.beliefs[t_index])?;
    if t_index + 1 == n {
        return Ok(InfluenceProfile {
            t,
            t_index,
            kl_at_zero: kl0,
            lag_grid: vec![0.0],
            kl_by_lag: vec![kl0],
            tau_eta: vec![0.0],
            integrated_range: 0.0,
        });
    }
    let mut end = n - 1;
    if let Some(m) = max_lag {
        let k = (m / filter.dt + 1e-9).floor().max(1.0) as usize;
        end = end.min(t_index + k);
    }
    let target = &smoother.beliefs[t_index];
    let mut lags = Vec::new();
    let mut kls = Vec::new();
    for (k, b) in ops.lag_scan(filter, t_index, end, lag_stride) {
        lags.push(k as f64 * filter.dt);
        kls.push(kl_gaussian(target, &b)?);
    }
    Ok(build_profile(t, t_index, lags, kls))
}

pub fn influence_profile(
    model: &dyn CgnsModel,
    traj: &Trajectory,
    filter: &BeliefPath,
    smoother: &BeliefPath,
    t_index: usize,
    lag_stride: usize,
) -> Result<InfluenceProfile> {
    let ops = BackwardOperators::new(model, traj, filter)?;
    influence_profile_with(&ops, filter, smoother, t_index, lag_stride, None)
}

/// Profiles at several times, computed in parallel.
pub fn influence_profiles(
    ops: &BackwardOperators,
    filter: &BeliefPath,
    smoother: &BeliefPath,
    t_indices: &[usize],
    lag_stride: usize,
    max_lag: Option<f64>,
) -> Result<Vec<InfluenceProfile>> {
    t_indices.par_iter().map(|&i| influence_profile_with(ops, filter, smoother, i, lag_stride, max_lag)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assimilate::{filter as run_filter, smooth};
    use crate::models::{demote, LinearGaussianModel};
    use crate::simulate::integrate;
    use nalgebra::{DMatrix, DVector};

    fn gauss(x: f64, m: f64, v: f64) -> f64 {
        (-(x - m).powi(2) / (2.0 * v)).exp() / (std::f64::consts::TAU * v).sqrt()
    }

    #[test]
    fn closed_form_examples() {
        let a = GaussianBelief::scalar(0.3, 1.7);
        assert_eq!(kl_gaussian(&a, &a).unwrap(), 0.0);
        let k = kl_gaussian(&GaussianBelief::scalar(1.0, 1.0), &GaussianBelief::scalar(0.0, 1.0)).unwrap();
        assert!((k - 0.5).abs() < 1e-15);
        let k = kl_gaussian(&GaussianBelief::scalar(0.0, 2.0), &GaussianBelief::scalar(0.0, 1.0)).unwrap();
        assert!((k - 0.5 * (1.0 + 0.5f64.ln())).abs() < 1e-12);
        assert!((k - 0.15343).abs() < 1e-5);
    }

    #[test]
    fn parts_sum_and_multivariate() {
        let p = GaussianBelief::new(
            DVector::from_vec(vec![0.2, -1.0]),
            DMatrix::from_row_slice(2, 2, &[1.5, 0.3, 0.3, 0.7]),
        )
        .unwrap();
        let q = GaussianBelief::new(
            DVector::from_vec(vec![-0.4, 0.5]),
            DMatrix::from_row_slice(2, 2, &[0.9, -0.2, -0.2, 1.1]),
        )
        .unwrap();
        let parts = kl_gaussian_parts(&p, &q).unwrap();
        assert_eq!(parts.total(), parts.signal + parts.dispersion);
        // independent evaluation with explicit inverse and determinants
        let qi = q.cov.clone().try_inverse().unwrap();
        let d = &q.mean - &p.mean;
        let want = 0.5
            * (d.dot(&(&qi * &d)) + (&qi * &p.cov).trace() - 2.0 + q.cov.determinant().ln() - p.cov.determinant().ln());
        assert!((parts.total() - want).abs() < 1e-12);
        assert_eq!(kl_gaussian(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let p = GaussianBelief::scalar(0.0, 1.0);
        let q2 = GaussianBelief { mean: DVector::zeros(2), cov: DMatrix::identity(2, 2) };
        assert!(matches!(kl_gaussian(&p, &q2), Err(Error::Argument(_))));
        let bad = GaussianBelief { mean: DVector::zeros(1), cov: DMatrix::from_element(1, 1, -1.0) };
        assert!(kl_gaussian(&bad, &p).is_err());
    }

    #[test]
    fn numeric_kl_examples() {
        let grid: Vec<f64> = (0..4001).map(|i| -12.0 + i as f64 * 0.006).collect();
        let p: Vec<f64> = grid.iter().map(|&x| gauss(x, 1.0, 1.0)).collect();
        let q: Vec<f64> = grid.iter().map(|&x| gauss(x, 0.0, 1.0)).collect();
        assert!(kl_numeric_1d(&grid, &q, &q).unwrap() < 5e-4);
        assert!((kl_numeric_1d(&grid, &p, &q).unwrap() - 0.5).abs() < 1e-3);
        let h: Vec<f64> = grid.iter().map(|&x| gauss(x, 0.0, 0.5)).collect();
        let want = kl_gaussian(&GaussianBelief::scalar(0.0, 0.5), &GaussianBelief::scalar(0.0, 1.0)).unwrap();
        assert!((kl_numeric_1d(&grid, &h, &q).unwrap() - want).abs() < 1e-3);
        assert!(kl_numeric_1d(&grid[1..], &p, &q).is_err());
        let half: Vec<f64> = p.iter().map(|v| v * 0.5).collect();
        assert!(kl_numeric_1d(&grid, &half, &q).is_err());
    }

    fn series(values: Vec<f64>) -> KlSeries {
        KlSeries { dt: 1.0, t0: 0.0, values, p_kind: "s".into(), q_kind: "f".into() }
    }

    #[test]
    fn onset_examples() {
        let s = series(vec![0.0, 0.0, 1.0, 1.0]);
        let o = onset_time(&s, 0.5, 3.0, 3.0).unwrap();
        assert_eq!((o.t_on, o.precursor_detected), (2.0, true));
        let o = onset_time(&s, 5.0, 3.0, 3.0).unwrap();
        assert_eq!((o.t_on, o.precursor_detected), (3.0, false));
        let o = onset_time(&s, 0.0, 2.0, 3.0).unwrap();
        assert_eq!(o.t_on, 1.0);
        assert!(onset_time(&s, 0.5, 4.0, 3.0).is_err());
        assert!(onset_time(&s, 0.5, 1.0, 3.5).is_err());
    }

    #[test]
    fn exponential_profile_integrates_to_inverse_rate() {
        let lambda = 2.0;
        let h = 1e-3;
        let lags: Vec<f64> = (0..=20_000).map(|i| i as f64 * h).collect();
        let kls: Vec<f64> = lags.iter().map(|&t| (-lambda * t).exp()).collect();
        let tr = integrated_range(&lags, &kls);
        assert!((tr - 1.0 / lambda).abs() < 2.0 * h, "{tr}");
        // τ^(η) = −ln η / λ, rounded up to the grid
        let t = tau_at(&lags, &kls, 0.25);
        assert!((t - 0.25f64.ln().abs() / lambda).abs() <= h + 1e-12);
        assert_eq!(integrated_range(&[0.0, 1.0], &[0.0, 0.0]), 0.0);
    }

    #[test]
    fn profile_endpoints_and_monotone_tau() {
        let m = LinearGaussianModel::scalar(0.0, 1.0, 0.5, 0.0, -1.0, 1.0);
        let traj = integrate(&demote(&m), &[0.0], &[0.0], 0.005, 2000, 3).unwrap();
        let f = run_filter(&m, &traj).unwrap();
        let s = smooth(&m, &traj, &f).unwrap();
        let ks = kl_series_filter_smoother(&s, &f).unwrap();
        assert_eq!(*ks.values.last().unwrap(), 0.0);
        let p = influence_profile(&m, &traj, &f, &s, 800, 10).unwrap();
        assert!((p.kl_by_lag[0] - ks.values[800]).abs() < 1e-10);
        assert!(*p.kl_by_lag.last().unwrap() < 1e-10);
        assert!((p.lag_grid.last().unwrap() - (traj.len() - 1 - 800) as f64 * traj.dt).abs() < 1e-9);
        // τ^(η) is nonincreasing in η
        let mut order: Vec<usize> = (0..p.kl_by_lag.len()).collect();
        order.sort_by(|&a, &b| p.kl_by_lag[a].total_cmp(&p.kl_by_lag[b]));
        for w in order.windows(2) {
            assert!(p.tau_eta[w[1]] <= p.tau_eta[w[0]] + 1e-12);
        }
        assert!(p.integrated_range >= 0.0 && p.integrated_range <= *p.lag_grid.last().unwrap());
        let last = influence_profile(&m, &traj, &f, &s, traj.len() - 1, 10).unwrap();
        assert_eq!(last.integrated_range, 0.0);
    }

    #[test]
    fn noiseless_hidden_gives_zero_series() {
        let m = LinearGaussianModel::scalar(0.0, 1.0, 1.0, 0.0, -1.0, 0.0);
        let traj = integrate(&demote(&m), &[0.0], &[1.0], 0.01, 500, 1).unwrap();
        let f = crate::assimilate::filter_from(&m, &traj, &GaussianBelief::scalar(1.0, 0.0)).unwrap();
        let s = smooth(&m, &traj, &f).unwrap();
        let ks = kl_series_filter_smoother(&s, &f).unwrap();
        assert!(ks.values.iter().all(|&v| v < 1e-10), "{:?}", ks.values.iter().cloned().fold(0.0, f64::max));
    }
}
