//! Spectrally truncated barotropic flow over topography.
//!
//! Observed state is the zonal mean flow `V`; hidden state is
//! `(Re φ_k, Im φ_k)` for each `k` in the stored half-set `𝒦′`. Modes on
//! `−𝒦′` are recovered through `φ_{−k} = φ_k*`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{require_finite, GeneralModel};
use crate::{Error, Result};

pub type Wavevector = [i32; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopographyEntry {
    pub k: Wavevector,
    /// `[re, im]`
    pub h: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopographicParams {
    pub gamma_nd: f64,
    /// Defaults to `5 √gamma_nd` when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    pub nu: f64,
    #[serde(rename = "nu_V")]
    pub nu_v: f64,
    pub sigma_psi: f64,
    #[serde(rename = "sigma_V")]
    pub sigma_v: f64,
    pub mode_set: Vec<Wavevector>,
    #[serde(default)]
    pub topography: Vec<TopographyEntry>,
}

impl TopographicParams {
    pub fn standard() -> Self {
        let g = 0.18;
        let mode_set = vec![[0, 2], [1, 2], [0, 1], [1, 1], [2, 1], [1, 0], [2, 0], [1, -1], [2, -1], [1, -2]];
        let topo = [([2, 1], -0.75), ([1, 0], 0.15), ([2, 0], 1.55), ([1, -1], 0.90), ([2, -1], 1.65)];
        Self {
            gamma_nd: g,
            beta: None,
            nu: 0.02,
            nu_v: 0.01,
            sigma_psi: 0.03,
            sigma_v: 0.015,
            mode_set,
            topography: topo.iter().map(|&(k, s)| TopographyEntry { k, h: [s * g, 0.0] }).collect(),
        }
    }

    pub fn beta(&self) -> f64 {
        self.beta.unwrap_or_else(|| 5.0 * self.gamma_nd.sqrt())
    }

    pub fn validate(&self) -> Result<()> {
        require_finite("gamma_nd", self.gamma_nd)?;
        if self.beta.is_none() && self.gamma_nd < 0.0 {
            return Err(Error::config("gamma_nd must be nonnegative when beta is derived from it"));
        }
        for (n, v) in [("beta", self.beta()), ("nu", self.nu), ("nu_V", self.nu_v)] {
            require_finite(n, v)?;
        }
        for (n, v) in [("sigma_psi", self.sigma_psi), ("sigma_V", self.sigma_v)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::config(format!("{n} must be nonnegative, got {v}")));
            }
        }
        if self.mode_set.is_empty() {
            return Err(Error::config("mode_set is empty"));
        }
        let mut seen = HashMap::new();
        for &k in &self.mode_set {
            if k == [0, 0] {
                return Err(Error::config("mode_set contains the zero wavevector"));
            }
            if seen.insert(k, ()).is_some() {
                return Err(Error::config(format!("mode_set repeats {k:?}")));
            }
        }
        for &k in &self.mode_set {
            if seen.contains_key(&[-k[0], -k[1]]) {
                return Err(Error::config(format!("mode_set contains both {k:?} and its negation")));
            }
        }
        let mut topo_seen = HashMap::new();
        for e in &self.topography {
            if !seen.contains_key(&e.k) {
                return Err(Error::config(format!("topography wavevector {:?} is not in mode_set", e.k)));
            }
            if topo_seen.insert(e.k, ()).is_some() {
                return Err(Error::config(format!("topography repeats {:?}", e.k)));
            }
            require_finite("topography", e.h[0])?;
            require_finite("topography", e.h[1])?;
        }
        Ok(())
    }
}

/// `C(k, m) = −(k⊥ − m⊥)·m` with `k⊥ = (−k_y, k_x)`.
pub fn interaction_coefficient(k: Wavevector, m: Wavevector) -> f64 {
    let kp = [-k[1], k[0]];
    let mp = [-m[1], m[0]];
    -(((kp[0] - mp[0]) * m[0] + (kp[1] - mp[1]) * m[1]) as f64)
}

fn norm2(k: Wavevector) -> f64 {
    (k[0] * k[0] + k[1] * k[1]) as f64
}

#[derive(Debug, Clone, Copy)]
struct Triad {
    /// index into the full mode list
    m: usize,
    k_minus_m: usize,
    weight: f64,
    m_norm2: f64,
}

#[derive(Debug, Clone)]
pub struct TopographicModel {
    pub params: TopographicParams,
    beta: f64,
    /// `𝒦′` followed by `−𝒦′`.
    full: Vec<Wavevector>,
    h: Vec<Complex64>,
    triads: Vec<Vec<Triad>>,
    index: HashMap<Wavevector, usize>,
}

pub fn build_topographic_model(params: TopographicParams) -> Result<TopographicModel> {
    params.validate()?;
    let half = params.mode_set.len();
    let mut full = params.mode_set.clone();
    full.extend(params.mode_set.iter().map(|k| [-k[0], -k[1]]));
    let index: HashMap<_, _> = full.iter().enumerate().map(|(i, &k)| (k, i)).collect();

    let mut h = vec![Complex64::new(0.0, 0.0); half];
    for e in &params.topography {
        h[index[&e.k]] = Complex64::new(e.h[0], e.h[1]);
    }

    let triads = params
        .mode_set
        .iter()
        .map(|&k| {
            full.iter()
                .enumerate()
                .filter_map(|(mi, &m)| {
                    let km = [k[0] - m[0], k[1] - m[1]];
                    let kmi = *index.get(&km)?;
                    let c = interaction_coefficient(k, m);
                    (c != 0.0).then(|| Triad { m: mi, k_minus_m: kmi, weight: c / norm2(k), m_norm2: norm2(m) })
                })
                .collect()
        })
        .collect();

    Ok(TopographicModel { beta: params.beta(), params, full, h, triads, index })
}

impl TopographicModel {
    pub fn n_modes(&self) -> usize {
        self.params.mode_set.len()
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn mode_set(&self) -> &[Wavevector] {
        &self.params.mode_set
    }

    /// Position of `k` in `𝒦′`; its real part sits at hidden index `2i`,
    /// the imaginary part at `2i + 1`.
    pub fn mode_index(&self, k: Wavevector) -> Option<usize> {
        self.index.get(&k).copied().filter(|&i| i < self.n_modes())
    }

    pub fn topography(&self, k: Wavevector) -> Complex64 {
        match self.index.get(&k) {
            Some(&i) => self.full_value(&self.h, i),
            None => Complex64::new(0.0, 0.0),
        }
    }

    /// Complex amplitudes on `𝒦′` from the packed hidden state.
    pub fn modes(&self, y: &[f64]) -> Vec<Complex64> {
        (0..self.n_modes()).map(|i| Complex64::new(y[2 * i], y[2 * i + 1])).collect()
    }

    pub fn mode(&self, y: &[f64], k: Wavevector) -> Option<Complex64> {
        let &i = self.index.get(&k)?;
        let n = self.n_modes();
        let z = Complex64::new(y[2 * (i % n)], y[2 * (i % n) + 1]);
        Some(if i < n { z } else { z.conj() })
    }

    /// `|φ_k|²` for a stored or implied mode.
    pub fn modal_energy(&self, y: &[f64], k: Wavevector) -> f64 {
        self.mode(y, k).map_or(0.0, |z| z.norm_sqr())
    }

    /// `Σ_{𝒦′} |φ_k|²`.
    pub fn total_energy(&self, y: &[f64]) -> f64 {
        y[..2 * self.n_modes()].iter().map(|v| v * v).sum()
    }

    /// `ψ(x, y) = −V y + Σ_{k∈𝒦} φ_k e^{i k·r}`, returned as a complex number
    /// whose imaginary part vanishes up to round-off.
    pub fn streamfunction(&self, v: f64, state: &[f64], px: f64, py: f64) -> Complex64 {
        let phi = self.modes(state);
        let mut acc = Complex64::new(-v * py, 0.0);
        for (i, &k) in self.full.iter().enumerate() {
            let z = self.full_value(&phi, i);
            acc += z * Complex64::from_polar(1.0, k[0] as f64 * px + k[1] as f64 * py);
        }
        acc
    }

    /// The V drift as a literal sum over all of `𝒦`.
    pub fn mean_flow_drift_full(&self, v: f64, y: &[f64]) -> f64 {
        let phi = self.modes(y);
        let mut s = 0.0;
        for (i, &k) in self.full.iter().enumerate() {
            s += k[0] as f64 * (self.full_value(&self.h, i) * self.full_value(&phi, i).conj()).im;
        }
        s - self.params.nu_v * v
    }

    fn full_value(&self, half: &[Complex64], i: usize) -> Complex64 {
        let n = self.n_modes();
        if i < n {
            half[i]
        } else {
            half[i - n].conj()
        }
    }

    fn mode_drifts(&self, v: f64, phi: &[Complex64]) -> Vec<Complex64> {
        let nu = self.params.nu;
        (0..self.n_modes())
            .map(|i| {
                let k = self.full[i];
                let k2 = norm2(k);
                let kx = k[0] as f64;
                let mut d = Complex64::new(0.0, 0.0);
                for t in &self.triads[i] {
                    let pm = self.full_value(phi, t.m);
                    let hm = self.full_value(&self.h, t.m);
                    d += t.weight * self.full_value(phi, t.k_minus_m) * (-t.m_norm2 * pm + hm);
                }
                let ik = Complex64::new(0.0, kx);
                d + ik * (self.beta / k2 - v) * phi[i] + ik * self.h[i] / k2 * v - nu * phi[i]
            })
            .collect()
    }
}

impl GeneralModel for TopographicModel {
    fn dim_obs(&self) -> usize {
        1
    }
    fn dim_hidden(&self) -> usize {
        2 * self.n_modes()
    }
    fn drift_obs(&self, x: &[f64], y: &[f64], _t: f64) -> DVector<f64> {
        let phi = self.modes(y);
        let s: f64 =
            self.params.mode_set.iter().enumerate().map(|(i, k)| k[0] as f64 * (self.h[i] * phi[i].conj()).im).sum();
        DVector::from_element(1, 2.0 * s - self.params.nu_v * x[0])
    }
    fn drift_hidden(&self, x: &[f64], y: &[f64], _t: f64) -> DVector<f64> {
        let d = self.mode_drifts(x[0], &self.modes(y));
        DVector::from_iterator(d.len() * 2, d.iter().flat_map(|z| [z.re, z.im]))
    }
    fn noise_obs(&self, _x: &[f64], _y: &[f64], _t: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.params.sigma_v)
    }
    fn noise_hidden(&self, _x: &[f64], _y: &[f64], _t: f64) -> DMatrix<f64> {
        let n = self.dim_hidden();
        DMatrix::from_diagonal_element(n, n, self.params.sigma_psi / std::f64::consts::SQRT_2)
    }
    fn diffuse_hidden(&self, _x: &[f64], _y: &[f64], _t: f64, eta: &[f64]) -> DVector<f64> {
        let s = self.params.sigma_psi / std::f64::consts::SQRT_2;
        DVector::from_iterator(eta.len(), eta.iter().map(|e| s * e))
    }
}
