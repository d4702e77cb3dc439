//! Exact conditional-Gaussian filtering and smoothing along an observed path.
//!
//! The filter is an explicit Euler discretization of the continuous-time
//! Kalman-Bucy/Riccati system, driven by the realized increments
//! `X_{n+1} − X_n`. The smoother integrates the backward equations with a
//! semi-implicit step: with `Q = b2 b2ᵀ` and `M_n = I + dt (a1 + Q R_f⁻¹)`,
//!
//! `μ_s,n = M_n⁻¹ (μ_s,n+1 − dt a0 + dt Q R_f⁻¹ μ_f,n)`
//! `R_s,n = M_n⁻¹ (R_s,n+1 + dt Q) M_n⁻ᵀ`
//!
//! which is first-order consistent, keeps `R_s` positive semi-definite, and
//! inverts the filter's deterministic step exactly when `b2 = 0`.
//!
//! Every backward step is affine in the belief it starts from, so finite-lag
//! smoothers for all terminal times can be read off one forward scan of the
//! accumulated propagator (see [`BackwardOperators::lag_scan`]).

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::linalg::{self, clamp_psd, spd_inverse, EIGEN_FLOOR, PSD_TOLERANCE};
use crate::models::{CgnsCoefficients, CgnsModel};
use crate::simulate::Trajectory;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBelief {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianBelief {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if cov.shape() != (n, n) {
            return Err(Error::arg(format!("covariance shape {:?} does not match mean length {n}", cov.shape())));
        }
        if mean.iter().chain(cov.iter()).any(|v| !v.is_finite()) {
            return Err(Error::arg("belief has non-finite entries"));
        }
        if (&cov - cov.transpose()).amax() > 1e-9 * (1.0 + cov.amax()) {
            return Err(Error::arg("covariance is not symmetric"));
        }
        if linalg::min_eigenvalue(&cov) < -PSD_TOLERANCE {
            return Err(Error::arg("covariance is not positive semi-definite"));
        }
        Ok(Self { mean, cov })
    }

    pub fn scalar(mean: f64, var: f64) -> Self {
        Self { mean: DVector::from_element(1, mean), cov: DMatrix::from_element(1, 1, var) }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BeliefKind {
    Filter,
    Smoother,
    FiniteLag { lag: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeliefPath {
    pub dt: f64,
    pub t0: f64,
    pub kind: BeliefKind,
    pub beliefs: Vec<GaussianBelief>,
}

impl BeliefPath {
    pub fn len(&self) -> usize {
        self.beliefs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.beliefs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.beliefs.first().map_or(0, GaussianBelief::dim)
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt
    }

    pub fn mean_series(&self, j: usize) -> Vec<f64> {
        self.beliefs.iter().map(|b| b.mean[j]).collect()
    }

    pub fn var_series(&self, j: usize) -> Vec<f64> {
        self.beliefs.iter().map(|b| b.cov[(j, j)]).collect()
    }

    pub fn same_grid(&self, other: &BeliefPath) -> bool {
        self.len() == other.len()
            && self.dim() == other.dim()
            && (self.dt - other.dt).abs() <= 1e-12 * self.dt
            && (self.t0 - other.t0).abs() <= 1e-9 * (1.0 + self.t0.abs())
    }

    /// CSV with columns `t, mu_1..mu_n, R_11, R_12, ..., R_nn`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let n = self.dim();
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("mu_{i}")));
        for i in 1..=n {
            header.extend((1..=n).map(|j| format!("R_{i}{j}")));
        }
        let rows = self.beliefs.iter().enumerate().map(|(k, b)| {
            let mut r = vec![self.time(k)];
            r.extend(b.mean.iter());
            r.extend(linalg::row_major(&b.cov));
            r
        });
        crate::io::write_table(path, &header, rows)?;
        let meta = BeliefMeta { dt: self.dt, t0: self.t0, dim: n, len: self.len(), kind: self.kind };
        crate::io::write_json(&crate::simulate::sidecar_path(path), &meta)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let meta: BeliefMeta = crate::io::read_json(&crate::simulate::sidecar_path(path))?;
        let (header, rows) = crate::io::read_table(path)?;
        let n = meta.dim;
        if header.len() != 1 + n + n * n || rows.len() != meta.len {
            return Err(Error::Parse { path: path.into(), reason: "belief table does not match its sidecar".into() });
        }
        let beliefs = rows
            .iter()
            .map(|r| GaussianBelief {
                mean: DVector::from_column_slice(&r[1..1 + n]),
                cov: linalg::from_row_major(n, &r[1 + n..]),
            })
            .collect();
        Ok(Self { dt: meta.dt, t0: meta.t0, kind: meta.kind, beliefs })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct BeliefMeta {
    dt: f64,
    t0: f64,
    dim: usize,
    len: usize,
    #[serde(flatten)]
    kind: BeliefKind,
}

fn check_dims(model: &dyn CgnsModel, traj: &Trajectory) -> Result<()> {
    if traj.dim_obs != model.dim_obs() {
        return Err(Error::arg(format!(
            "trajectory has {} observed components, model expects {}",
            traj.dim_obs,
            model.dim_obs()
        )));
    }
    Ok(())
}

/// Stationary solution of `a1 R + R a1ᵀ + Q = 0`, when `a1` is stable.
fn lyapunov(a1: &DMatrix<f64>, q: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = a1.nrows();
    let id = DMatrix::<f64>::identity(n, n);
    let op = id.kronecker(a1) + a1.kronecker(&id);
    let vec_q = DVector::from_column_slice(q.as_slice());
    let sol = op.lu().solve(&(-vec_q))?;
    let r = DMatrix::from_column_slice(n, n, sol.as_slice());
    (linalg::min_eigenvalue(&r) > 0.0 && r.iter().all(|v| v.is_finite())).then_some(r)
}

/// Mean: the hidden truth at `t0` when recorded, else the fixed point of the
/// hidden drift at the first observation. Covariance: the identity scaled by
/// the average stationary variance of the hidden drift at the first
/// observation (the identity when that drift is not stable).
pub fn default_initial_belief(model: &dyn CgnsModel, traj: &Trajectory) -> GaussianBelief {
    let ny = model.dim_hidden();
    let x0 = traj.obs_at(0);
    let t0 = traj.t0;
    let c = model.coefficients(x0, t0);
    let mean = match traj.hidden_at(0) {
        Some(y) if y.len() == ny => DVector::from_column_slice(y),
        _ => c.hidden_coupling.clone().lu().solve(&(-&c.hidden_base)).unwrap_or_else(|| DVector::zeros(ny)),
    };
    let q = &c.hidden_noise * c.hidden_noise.transpose();
    let scale = lyapunov(&c.hidden_coupling, &q).map_or(1.0, |r| r.trace() / ny as f64);
    GaussianBelief { mean, cov: DMatrix::identity(ny, ny) * scale }
}

pub fn filter(model: &dyn CgnsModel, traj: &Trajectory) -> Result<BeliefPath> {
    let init = default_initial_belief(model, traj);
    filter_from(model, traj, &init)
}

/// Forward filter from an explicit initial belief.
pub fn filter_from(model: &dyn CgnsModel, traj: &Trajectory, init: &GaussianBelief) -> Result<BeliefPath> {
    check_dims(model, traj)?;
    let ny = model.dim_hidden();
    if init.dim() != ny {
        return Err(Error::arg(format!("initial belief has dimension {}, model expects {ny}", init.dim())));
    }
    let dt = traj.dt;
    let n = traj.len();
    let mut beliefs = Vec::with_capacity(n);
    let mut mu = init.mean.clone();
    let mut r = clamp_psd(&init.cov, EIGEN_FLOOR);
    beliefs.push(GaussianBelief { mean: mu.clone(), cov: r.clone() });

    for k in 0..n - 1 {
        let x = traj.obs_at(k);
        let t = traj.time(k);
        let c = model.coefficients(x, t);
        let bb = &c.obs_noise * c.obs_noise.transpose();
        let (bb_inv, _) = spd_inverse(&bb).ok_or_else(|| Error::Assimilation {
            step: k,
            reason: "observation noise covariance is singular".into(),
        })?;
        let dx = DVector::from_iterator(x.len(), traj.obs_at(k + 1).iter().zip(x).map(|(a, b)| a - b));
        let gain = &r * c.obs_coupling.transpose() * &bb_inv;
        let innovation = dx - (&c.obs_base + &c.obs_coupling * &mu) * dt;
        let q = &c.hidden_noise * c.hidden_noise.transpose();

        let dmu = (&c.hidden_base + &c.hidden_coupling * &mu) * dt + &gain * innovation;
        let dr = (&c.hidden_coupling * &r + &r * c.hidden_coupling.transpose() + q - &gain * &c.obs_coupling * &r) * dt;
        mu += dmu;
        r = clamp_psd(&(r + dr), EIGEN_FLOOR);
        if mu.iter().chain(r.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Assimilation { step: k + 1, reason: "filter state became non-finite".into() });
        }
        beliefs.push(GaussianBelief { mean: mu.clone(), cov: r.clone() });
    }
    Ok(BeliefPath { dt, t0: traj.t0, kind: BeliefKind::Filter, beliefs })
}

/// Hidden-noise rate the eigenvalue floor added to the filter covariance over
/// one step. Zero unless the unclamped Riccati update fell below the floor;
/// including it keeps the smoother consistent with the filter that was
/// actually run (a filter pinned at the floor by `b2 = 0` is reproduced
/// instead of being re-expanded backward from the floor).
fn floor_injection(c: &CgnsCoefficients, f: &GaussianBelief, next: &GaussianBelief, dt: f64) -> DMatrix<f64> {
    let ny = f.dim();
    let bb = &c.obs_noise * c.obs_noise.transpose();
    let Some((bb_inv, _)) = spd_inverse(&bb) else {
        return DMatrix::zeros(ny, ny);
    };
    let r = &f.cov;
    let q = &c.hidden_noise * c.hidden_noise.transpose();
    let gain = r * c.obs_coupling.transpose() * bb_inv;
    let dr = (&c.hidden_coupling * r + r * c.hidden_coupling.transpose() + q - gain * &c.obs_coupling * r) * dt;
    let predicted = linalg::symmetrize(&(r + dr));
    if linalg::min_eigenvalue(&predicted) >= EIGEN_FLOOR {
        return DMatrix::zeros(ny, ny);
    }
    clamp_psd(&(&next.cov - predicted), 0.0) / dt
}

/// Per-step affine maps of the backward smoother:
/// `μ_n = L_n (μ_{n+1} + h_n)`, `R_n = L_n (R_{n+1} + P_n) L_nᵀ`
/// with `L_n = M_n⁻¹`, `h_n = dt (Q R_f⁻¹ μ_f − a0)`, `P_n = dt Q`.
#[derive(Debug, Clone)]
pub struct BackwardOperators {
    l: Vec<DMatrix<f64>>,
    h: Vec<DVector<f64>>,
    p: Vec<DMatrix<f64>>,
}

impl BackwardOperators {
    pub fn new(model: &dyn CgnsModel, traj: &Trajectory, filter_path: &BeliefPath) -> Result<Self> {
        check_dims(model, traj)?;
        if filter_path.len() != traj.len() {
            return Err(Error::arg(format!(
                "filter path has {} beliefs for a trajectory of {} samples",
                filter_path.len(),
                traj.len()
            )));
        }
        if filter_path.dim() != model.dim_hidden() {
            return Err(Error::arg("filter path dimension does not match the model"));
        }
        let dt = traj.dt;
        let ny = model.dim_hidden();
        let id = DMatrix::<f64>::identity(ny, ny);
        let steps = traj.len() - 1;
        let (mut l, mut h, mut p) = (Vec::with_capacity(steps), Vec::with_capacity(steps), Vec::with_capacity(steps));
        for k in 0..steps {
            let x = traj.obs_at(k);
            let t = traj.time(k);
            let c = model.coefficients(x, t);
            let a0 = c.hidden_base.clone();
            let a1 = c.hidden_coupling.clone();
            let f = &filter_path.beliefs[k];
            let q =
                &c.hidden_noise * c.hidden_noise.transpose() + floor_injection(&c, f, &filter_path.beliefs[k + 1], dt);
            let (rf_inv, _) = spd_inverse(&f.cov).ok_or_else(|| Error::Assimilation {
                step: k,
                reason: "filter covariance could not be inverted".into(),
            })?;
            let q_rinv = &q * rf_inv;
            let m = &id + (&a1 + &q_rinv) * dt;
            let li = m
                .try_inverse()
                .ok_or_else(|| Error::Assimilation { step: k, reason: "backward step matrix is singular".into() })?;
            h.push((&q_rinv * &f.mean - a0) * dt);
            p.push(q * dt);
            l.push(li);
        }
        Ok(Self { l, h, p })
    }

    pub fn steps(&self) -> usize {
        self.l.len()
    }

    /// One backward step from the belief at `k + 1` to the belief at `k`.
    pub fn step_back(&self, k: usize, next: &GaussianBelief) -> GaussianBelief {
        let l = &self.l[k];
        let mean = l * (&next.mean + &self.h[k]);
        let cov = clamp_psd(&(l * (&next.cov + &self.p[k]) * l.transpose()), EIGEN_FLOOR);
        GaussianBelief { mean, cov }
    }

    /// Runs the backward recursion from `terminal` at index `end` down to
    /// `start`, returning the beliefs at `start..=end`.
    pub fn sweep(&self, start: usize, end: usize, terminal: &GaussianBelief) -> Vec<GaussianBelief> {
        let mut out = vec![terminal.clone(); end - start + 1];
        for k in (start..end).rev() {
            out[k - start] = self.step_back(k, &out[k - start + 1]);
        }
        out
    }

    /// Finite-lag smoothed beliefs at `t_index` for terminal indices
    /// `t_index, t_index + stride, …` up to `end` (always included).
    pub fn lag_scan(
        &self,
        filter_path: &BeliefPath,
        t_index: usize,
        end: usize,
        stride: usize,
    ) -> Vec<(usize, GaussianBelief)> {
        let ny = filter_path.dim();
        let mut phi = DMatrix::<f64>::identity(ny, ny);
        let mut c = DVector::<f64>::zeros(ny);
        let mut d = DMatrix::<f64>::zeros(ny, ny);
        let mut out = Vec::with_capacity((end - t_index) / stride.max(1) + 2);
        let emit = |s: usize, phi: &DMatrix<f64>, c: &DVector<f64>, d: &DMatrix<f64>| {
            let f = &filter_path.beliefs[s];
            let mean = phi * &f.mean + c;
            let cov = clamp_psd(&(phi * &f.cov * phi.transpose() + d), EIGEN_FLOOR);
            (s - t_index, GaussianBelief { mean, cov })
        };
        out.push(emit(t_index, &phi, &c, &d));
        for s in t_index..end {
            phi = &phi * &self.l[s];
            c += &phi * &self.h[s];
            d += &phi * &self.p[s] * phi.transpose();
            let next = s + 1;
            if (next - t_index).is_multiple_of(stride.max(1)) || next == end {
                out.push(emit(next, &phi, &c, &d));
            }
        }
        out
    }
}

pub fn smooth(model: &dyn CgnsModel, traj: &Trajectory, filter_path: &BeliefPath) -> Result<BeliefPath> {
    let ops = BackwardOperators::new(model, traj, filter_path)?;
    Ok(smooth_with(&ops, filter_path))
}

pub fn smooth_with(ops: &BackwardOperators, filter_path: &BeliefPath) -> BeliefPath {
    let end = filter_path.len() - 1;
    let beliefs = ops.sweep(0, end, &filter_path.beliefs[end]);
    BeliefPath { dt: filter_path.dt, t0: filter_path.t0, kind: BeliefKind::Smoother, beliefs }
}

/// Converts a lag in time units to grid steps, rejecting lags that do not land
/// on the grid.
pub fn lag_steps(lag: f64, dt: f64) -> Result<usize> {
    if !(lag >= 0.0 && lag.is_finite()) {
        return Err(Error::arg(format!("lag must be nonnegative, got {lag}")));
    }
    let s = lag / dt;
    let r = s.round();
    if (s - r).abs() > 1e-6 {
        return Err(Error::arg(format!("lag {lag} is not a multiple of dt = {dt}")));
    }
    Ok(r as usize)
}

/// Smoother at `t_index` conditioned on observations up to `t + lag`.
pub fn finite_lag_smooth(
    model: &dyn CgnsModel,
    traj: &Trajectory,
    filter_path: &BeliefPath,
    t_index: usize,
    lag: f64,
) -> Result<GaussianBelief> {
    let k = lag_steps(lag, traj.dt)?;
    let end = t_index + k;
    if t_index >= traj.len() || end >= traj.len() {
        return Err(Error::arg(format!("window [{t_index}, {end}] exceeds the trajectory of {} samples", traj.len())));
    }
    if k == 0 {
        return Ok(filter_path.beliefs[t_index].clone());
    }
    let ops = BackwardOperators::new(model, traj, filter_path)?;
    Ok(ops.sweep(t_index, end, &filter_path.beliefs[end]).swap_remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{demote, LinearGaussianModel};
    use crate::simulate::integrate;

    fn linear(a1_obs: f64, b2: f64) -> LinearGaussianModel {
        LinearGaussianModel::scalar(0.0, a1_obs, 1.0, 0.0, -1.0, b2)
    }

    fn run(m: &LinearGaussianModel, n: usize, seed: u64) -> (Trajectory, BeliefPath) {
        let traj = integrate(&demote(m), &[0.0], &[0.5], 0.001, n, seed).unwrap();
        let f = filter(m, &traj).unwrap();
        (traj, f)
    }

    #[test]
    fn riccati_limit() {
        let (_, f) = run(&linear(1.0, 1.0), 20_000, 1);
        let r = f.beliefs.last().unwrap().cov[(0, 0)];
        // discrete fixed point of the Euler map is the algebraic root
        assert!((r - (2f64.sqrt() - 1.0)).abs() < 1e-6, "{r}");
    }

    #[test]
    fn lyapunov_limit_without_information() {
        let (_, f) = run(&linear(0.0, 1.0), 20_000, 2);
        let r = f.beliefs.last().unwrap().cov[(0, 0)];
        assert!((r - 0.5).abs() < 1e-6, "{r}");
    }

    #[test]
    fn noiseless_hidden_state_is_known() {
        let m = linear(1.0, 0.0);
        let traj = integrate(&demote(&m), &[0.0], &[0.5], 0.001, 2000, 3).unwrap();
        let f = filter_from(&m, &traj, &GaussianBelief::scalar(0.5, 0.0)).unwrap();
        for (k, b) in f.beliefs.iter().enumerate() {
            assert!(b.cov[(0, 0)] <= 1e-12 + 1e-18);
            let y = traj.hidden_at(k).unwrap()[0];
            assert!((b.mean[0] - y).abs() < 1e-9);
        }
        let s = smooth(&m, &traj, &f).unwrap();
        for (a, b) in s.beliefs.iter().zip(&f.beliefs) {
            assert!((a.mean[0] - b.mean[0]).abs() < 1e-9);
            assert!((a.cov[(0, 0)] - b.cov[(0, 0)]).abs() < 1e-15);
        }
    }

    #[test]
    fn smoother_terminal_and_trace() {
        let m = linear(1.0, 1.0);
        let (traj, f) = run(&m, 5000, 4);
        let s = smooth(&m, &traj, &f).unwrap();
        assert_eq!(s.beliefs.last(), f.beliefs.last());
        for (a, b) in s.beliefs.iter().zip(&f.beliefs) {
            assert!(a.cov.trace() <= b.cov.trace() + 1e-9);
        }
    }

    // Discrete Kalman filter and RTS smoother on the Euler-discretized system,
    // with the observation increment treated as a measurement of Y_n.
    fn rts(traj: &Trajectory, m0: f64, p0: f64) -> (Vec<f64>, Vec<f64>) {
        let dt = traj.dt;
        let a = 1.0 - dt;
        let qd = dt;
        let rd = dt; // var of ΔX given Y is B1² dt, mapped through H = dt
        let n = traj.len();
        let (mut mf, mut pf, mut mp, mut pp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let (mut m, mut p) = (m0, p0);
        for k in 0..n {
            mf[k] = m;
            pf[k] = p;
            if k + 1 == n {
                break;
            }
            let z = traj.obs_at(k + 1)[0] - traj.obs_at(k)[0];
            // update with ΔX_k = dt Y_k + noise, then predict
            let s = dt * dt * p + rd;
            let kg = p * dt / s;
            let mu = m + kg * (z - dt * m);
            let pu = (1.0 - kg * dt) * p;
            m = a * mu;
            p = a * a * pu + qd;
            mp[k + 1] = m;
            pp[k + 1] = p;
            // store updated belief used by RTS
            mf[k] = mu;
            pf[k] = pu;
        }
        let (mut ms, mut ps) = (mf.clone(), pf.clone());
        for k in (0..n - 1).rev() {
            let g = pf[k] * a / pp[k + 1];
            ms[k] = mf[k] + g * (ms[k + 1] - mp[k + 1]);
            ps[k] = pf[k] + g * g * (ps[k + 1] - pp[k + 1]);
        }
        (ms, ps)
    }

    #[test]
    fn smoother_matches_rts_to_first_order() {
        let m = linear(1.0, 1.0);
        let (traj, f) = run(&m, 5000, 5);
        let s = smooth(&m, &traj, &f).unwrap();
        let (ms, ps) = rts(&traj, f.beliefs[0].mean[0], f.beliefs[0].cov[(0, 0)]);
        let n = traj.len();
        let mut dmax: f64 = 0.0;
        let mut mmax: f64 = 0.0;
        for k in 500..n - 500 {
            dmax = dmax.max((s.beliefs[k].cov[(0, 0)] - ps[k]).abs());
            mmax = mmax.max((s.beliefs[k].mean[0] - ms[k]).abs());
        }
        assert!(dmax < 5e-3, "variance gap {dmax}");
        assert!(mmax < 5e-2, "mean gap {mmax}");
    }

    #[test]
    fn finite_lag_limits() {
        let m = linear(1.0, 1.0);
        let (traj, f) = run(&m, 3000, 6);
        let s = smooth(&m, &traj, &f).unwrap();
        let t = 1000;
        assert_eq!(finite_lag_smooth(&m, &traj, &f, t, 0.0).unwrap(), f.beliefs[t]);
        let full = finite_lag_smooth(&m, &traj, &f, t, (traj.len() - 1 - t) as f64 * traj.dt).unwrap();
        assert!((full.mean[0] - s.beliefs[t].mean[0]).abs() < 1e-12);
        assert!((full.cov[(0, 0)] - s.beliefs[t].cov[(0, 0)]).abs() < 1e-12);
        let mid = finite_lag_smooth(&m, &traj, &f, t, 0.3).unwrap();
        let v = mid.cov[(0, 0)];
        assert!(v <= f.beliefs[t].cov[(0, 0)] + 1e-12 && v >= s.beliefs[t].cov[(0, 0)] - 1e-12);
        assert!(finite_lag_smooth(&m, &traj, &f, t, 10.0).is_err());
    }

    #[test]
    fn lag_scan_matches_direct_passes() {
        let m = LinearGaussianModel::new(
            DVector::from_vec(vec![0.1]),
            DMatrix::from_row_slice(1, 2, &[1.0, 0.5]),
            DMatrix::from_element(1, 1, 0.7),
            DVector::from_vec(vec![0.2, -0.1]),
            DMatrix::from_row_slice(2, 2, &[-1.0, 0.3, 0.0, -0.5]),
            DMatrix::from_row_slice(2, 2, &[0.8, 0.0, 0.1, 0.6]),
        )
        .unwrap();
        let traj = integrate(&demote(&m), &[0.0], &[0.0, 0.0], 0.005, 2000, 8).unwrap();
        let f = filter(&m, &traj).unwrap();
        let ops = BackwardOperators::new(&m, &traj, &f).unwrap();
        let t = 700;
        let scan = ops.lag_scan(&f, t, traj.len() - 1, 37);
        assert_eq!(scan.last().unwrap().0, traj.len() - 1 - t);
        for (k, b) in scan.iter().step_by(5) {
            let direct = ops.sweep(t, t + k, &f.beliefs[t + k]).swap_remove(0);
            assert!((&direct.mean - &b.mean).amax() < 1e-10);
            assert!((&direct.cov - &b.cov).amax() < 1e-10);
        }
    }

    #[test]
    fn csv_roundtrip() {
        let m = linear(1.0, 1.0);
        let (_, f) = run(&m, 100, 9);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("filter.csv");
        f.write_csv(&p).unwrap();
        assert_eq!(BeliefPath::read_csv(&p).unwrap(), f);
    }

    #[test]
    fn rejects_mismatched_inputs() {
        let m = linear(1.0, 1.0);
        let (traj, f) = run(&m, 100, 10);
        let (traj2, _) = run(&m, 50, 10);
        assert!(matches!(smooth(&m, &traj2, &f), Err(Error::Argument(_))));
        let _ = traj;
        assert!(GaussianBelief::new(DVector::zeros(1), DMatrix::from_element(1, 1, -1.0)).is_err());
    }
}
