//! Euler–Maruyama integration of [`GeneralModel`]s.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::models::GeneralModel;
use crate::rng::NormalStream;
use crate::{Error, Result};

/// Any state component beyond this magnitude is treated as numerical blow-up.
pub const BLOWUP_THRESHOLD: f64 = 1e8;

/// Observed states (and optionally the hidden truth) on a uniform grid
/// `t_n = t0 + n dt`. States are stored row-major, one row per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub t0: f64,
    pub dim_obs: usize,
    pub dim_hidden: usize,
    pub obs: Vec<f64>,
    pub hidden_truth: Option<Vec<f64>>,
    pub seed: u64,
}

impl Trajectory {
    pub fn new(dt: f64, t0: f64, dim_obs: usize, obs: Vec<f64>, seed: u64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::arg(format!("dt must be positive, got {dt}")));
        }
        if dim_obs == 0 || !obs.len().is_multiple_of(dim_obs) || obs.len() / dim_obs < 2 {
            return Err(Error::arg("a trajectory needs at least two observed states"));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("observations must be finite"));
        }
        Ok(Self { dt, t0, dim_obs, dim_hidden: 0, obs, hidden_truth: None, seed })
    }

    pub fn with_hidden(mut self, dim_hidden: usize, hidden: Vec<f64>) -> Result<Self> {
        if dim_hidden == 0 || hidden.len() != dim_hidden * self.len() {
            return Err(Error::arg("hidden truth length does not match the observed states"));
        }
        self.dim_hidden = dim_hidden;
        self.hidden_truth = Some(hidden);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.obs.len() / self.dim_obs
    }

    pub fn is_empty(&self) -> bool {
        self.obs.is_empty()
    }

    pub fn time(&self, n: usize) -> f64 {
        self.t0 + n as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.len()).map(|n| self.time(n)).collect()
    }

    pub fn duration(&self) -> f64 {
        (self.len() - 1) as f64 * self.dt
    }

    pub fn obs_at(&self, n: usize) -> &[f64] {
        &self.obs[n * self.dim_obs..(n + 1) * self.dim_obs]
    }

    pub fn hidden_at(&self, n: usize) -> Option<&[f64]> {
        let d = self.dim_hidden;
        self.hidden_truth.as_ref().map(|h| &h[n * d..(n + 1) * d])
    }

    /// Time series of observed component `j`.
    pub fn obs_series(&self, j: usize) -> Vec<f64> {
        self.obs.chunks(self.dim_obs).map(|r| r[j]).collect()
    }

    pub fn hidden_series(&self, j: usize) -> Option<Vec<f64>> {
        let d = self.dim_hidden;
        self.hidden_truth.as_ref().map(|h| h.chunks(d).map(|r| r[j]).collect())
    }

    /// Grid index closest to time `t`, clamped to the grid.
    pub fn index_of(&self, t: f64) -> usize {
        let i = ((t - self.t0) / self.dt).round();
        i.clamp(0.0, (self.len() - 1) as f64) as usize
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut header = vec!["t".to_string()];
        header.extend((1..=self.dim_obs).map(|i| format!("x_{i}")));
        header.extend((1..=self.dim_hidden).map(|i| format!("y_{i}")));
        let rows = (0..self.len()).map(|n| {
            let mut r = vec![self.time(n)];
            r.extend_from_slice(self.obs_at(n));
            if let Some(h) = self.hidden_at(n) {
                r.extend_from_slice(h);
            }
            r
        });
        crate::io::write_table(path, &header, rows)
    }

    /// Reads a trajectory written by [`Trajectory::write_csv`]. Grid metadata
    /// comes from the sidecar when present and from the time column otherwise.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let (header, rows) = crate::io::read_table(path)?;
        let nx = header.iter().filter(|h| h.starts_with("x_")).count();
        let ny = header.iter().filter(|h| h.starts_with("y_")).count();
        if header.first().map(String::as_str) != Some("t") || nx == 0 || 1 + nx + ny != header.len() {
            return Err(Error::Parse { path: path.into(), reason: "unexpected trajectory header".into() });
        }
        if rows.len() < 2 {
            return Err(Error::Parse { path: path.into(), reason: "fewer than two rows".into() });
        }
        let meta = TrajectoryMeta::read(&sidecar_path(path)).ok();
        let t0 = rows[0][0];
        let dt = meta.as_ref().map_or(rows[1][0] - rows[0][0], |m| m.dt);
        let seed = meta.as_ref().map_or(0, |m| m.seed);
        let obs = rows.iter().flat_map(|r| r[1..1 + nx].to_vec()).collect();
        let traj = Trajectory::new(dt, t0, nx, obs, seed)?;
        if ny > 0 {
            traj.with_hidden(ny, rows.iter().flat_map(|r| r[1 + nx..].to_vec()).collect())
        } else {
            Ok(traj)
        }
    }

    pub fn meta(&self, model_hash: &str) -> TrajectoryMeta {
        TrajectoryMeta {
            dt: self.dt,
            t0: self.t0,
            seed: self.seed,
            n_samples: self.len(),
            dim_obs: self.dim_obs,
            dim_hidden: self.dim_hidden,
            model_hash: model_hash.to_string(),
        }
    }
}

/// Sidecar metadata stored next to a trajectory CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub dt: f64,
    pub t0: f64,
    pub seed: u64,
    pub n_samples: usize,
    pub dim_obs: usize,
    pub dim_hidden: usize,
    pub model_hash: String,
}

impl TrajectoryMeta {
    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }
}

/// `traj.csv` → `traj.json`.
pub fn sidecar_path(csv: &Path) -> std::path::PathBuf {
    csv.with_extension("json")
}

/// Integrates `n_steps` Euler–Maruyama steps from `(x0, y0)`. The increment
/// at step `n` is drawn from the counter stream `(seed, n)`, observed
/// components first.
pub fn integrate(
    model: &dyn GeneralModel,
    x0: &[f64],
    y0: &[f64],
    dt: f64,
    n_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    integrate_from(model, x0, y0, 0.0, dt, n_steps, seed)
}

pub fn integrate_from(
    model: &dyn GeneralModel,
    x0: &[f64],
    y0: &[f64],
    t0: f64,
    dt: f64,
    n_steps: usize,
    seed: u64,
) -> Result<Trajectory> {
    let (nx, ny) = (model.dim_obs(), model.dim_hidden());
    if x0.len() != nx || y0.len() != ny {
        return Err(Error::arg(format!(
            "initial state has dimensions ({}, {}), model expects ({nx}, {ny})",
            x0.len(),
            y0.len()
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::arg(format!("dt must be positive, got {dt}")));
    }
    if n_steps == 0 {
        return Err(Error::arg("n_steps must be positive"));
    }
    if x0.iter().chain(y0).any(|v| !v.is_finite()) {
        return Err(Error::arg("initial state must be finite"));
    }

    let sq = dt.sqrt();
    let mut stream = NormalStream::new(seed, nx + ny);
    let mut z = vec![0.0; nx + ny];
    let mut obs = Vec::with_capacity((n_steps + 1) * nx);
    let mut hid = Vec::with_capacity((n_steps + 1) * ny);
    obs.extend_from_slice(x0);
    hid.extend_from_slice(y0);
    let mut x = x0.to_vec();
    let mut y = y0.to_vec();

    for n in 0..n_steps {
        let t = t0 + n as f64 * dt;
        stream.fill_step(n as u64, &mut z);
        let f = model.drift_obs(&x, &y, t);
        let g = model.drift_hidden(&x, &y, t);
        let bx = model.diffuse_obs(&x, &y, t, &z[..nx]);
        let by = model.diffuse_hidden(&x, &y, t, &z[nx..]);
        for i in 0..nx {
            x[i] += f[i] * dt + bx[i] * sq;
        }
        for i in 0..ny {
            y[i] += g[i] * dt + by[i] * sq;
        }
        if x.iter().chain(&y).any(|v| !v.is_finite() || v.abs() > BLOWUP_THRESHOLD) {
            return Err(Error::SimulationDiverged { step: n + 1, member: None });
        }
        obs.extend_from_slice(&x);
        hid.extend_from_slice(&y);
    }

    Trajectory::new(dt, t0, nx, obs, seed)?.with_hidden(ny, hid)
}

/// `K` independent trajectories; member `i` (zero-based) uses seed
/// `base_seed + i + 1` and the initial state `init(i, seed)`.
pub fn generate_ensemble<F>(
    model: &dyn GeneralModel,
    init: F,
    dt: f64,
    n_steps: usize,
    n_members: usize,
    base_seed: u64,
) -> Result<Vec<Trajectory>>
where
    F: Fn(usize, u64) -> (Vec<f64>, Vec<f64>) + Sync,
{
    if n_members == 0 {
        return Err(Error::arg("ensemble needs at least one member"));
    }
    (0..n_members)
        .into_par_iter()
        .map(|i| {
            let seed = base_seed.wrapping_add(i as u64 + 1);
            let (x0, y0) = init(i, seed);
            integrate(model, &x0, &y0, dt, n_steps, seed).map_err(|e| match e {
                Error::SimulationDiverged { step, .. } => Error::SimulationDiverged { step, member: Some(i) },
                other => other,
            })
        })
        .collect()
}

/// Number of leading samples removed by [`burn_in`].
pub fn burn_in_samples(dt: f64, t_discard: f64) -> usize {
    if t_discard <= 0.0 {
        0
    } else {
        (t_discard / dt - 1e-9).ceil() as usize
    }
}

/// Drops the first `⌈t_discard / dt⌉` samples and shifts `t0` accordingly.
pub fn burn_in(traj: &Trajectory, t_discard: f64) -> Result<Trajectory> {
    if !(t_discard >= 0.0 && t_discard.is_finite()) {
        return Err(Error::arg(format!("t_discard must be nonnegative, got {t_discard}")));
    }
    let k = burn_in_samples(traj.dt, t_discard);
    if k + 2 > traj.len() {
        return Err(Error::arg(format!(
            "discarding {t_discard} time units leaves fewer than two of {} samples",
            traj.len()
        )));
    }
    let mut out = traj.clone();
    out.obs = traj.obs[k * traj.dim_obs..].to_vec();
    if let Some(h) = &traj.hidden_truth {
        out.hidden_truth = Some(h[k * traj.dim_hidden..].to_vec());
    }
    out.t0 = traj.time(k);
    Ok(out)
}
