use nalgebra::{DMatrix, DVector};

use super::CgnsModel;
use crate::{Error, Result};

/// Conditionally Gaussian model with constant coefficients, i.e. a linear
/// Gaussian system observed through a Kalman-Bucy channel.
#[derive(Debug, Clone)]
pub struct LinearGaussianModel {
    pub obs_base: DVector<f64>,
    pub obs_coupling: DMatrix<f64>,
    pub obs_noise: DMatrix<f64>,
    pub hidden_base: DVector<f64>,
    pub hidden_coupling: DMatrix<f64>,
    pub hidden_noise: DMatrix<f64>,
}

impl LinearGaussianModel {
    pub fn new(
        obs_base: DVector<f64>,
        obs_coupling: DMatrix<f64>,
        obs_noise: DMatrix<f64>,
        hidden_base: DVector<f64>,
        hidden_coupling: DMatrix<f64>,
        hidden_noise: DMatrix<f64>,
    ) -> Result<Self> {
        let nx = obs_base.len();
        let ny = hidden_base.len();
        if nx == 0 || ny == 0 {
            return Err(Error::config("dimensions must be positive"));
        }
        let shapes = [
            ("A1", obs_coupling.shape(), (nx, ny)),
            ("B1", obs_noise.shape(), (nx, nx)),
            ("a1", hidden_coupling.shape(), (ny, ny)),
            ("b2", hidden_noise.shape(), (ny, ny)),
        ];
        for (name, got, want) in shapes {
            if got != want {
                return Err(Error::config(format!("{name} has shape {got:?}, expected {want:?}")));
            }
        }
        let all = [
            obs_base.as_slice(),
            obs_coupling.as_slice(),
            obs_noise.as_slice(),
            hidden_base.as_slice(),
            hidden_coupling.as_slice(),
            hidden_noise.as_slice(),
        ];
        if all.iter().flat_map(|s| s.iter()).any(|v| !v.is_finite()) {
            return Err(Error::config("coefficients must be finite"));
        }
        Ok(Self { obs_base, obs_coupling, obs_noise, hidden_base, hidden_coupling, hidden_noise })
    }

    /// Scalar model `dX = (A0 + A1 Y) dt + B1 dW1`, `dY = (a0 + a1 Y) dt + b2 dW2`.
    pub fn scalar(a0_obs: f64, a1_obs: f64, b1: f64, a0: f64, a1: f64, b2: f64) -> Self {
        let s = |v| DMatrix::from_element(1, 1, v);
        Self::new(DVector::from_element(1, a0_obs), s(a1_obs), s(b1), DVector::from_element(1, a0), s(a1), s(b2))
            .expect("scalar coefficients are well-shaped")
    }
}

impl CgnsModel for LinearGaussianModel {
    fn dim_obs(&self) -> usize {
        self.obs_base.len()
    }
    fn dim_hidden(&self) -> usize {
        self.hidden_base.len()
    }
    fn obs_base(&self, _x: &[f64], _t: f64) -> DVector<f64> {
        self.obs_base.clone()
    }
    fn obs_coupling(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        self.obs_coupling.clone()
    }
    fn obs_noise(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        self.obs_noise.clone()
    }
    fn hidden_base(&self, _x: &[f64], _t: f64) -> DVector<f64> {
        self.hidden_base.clone()
    }
    fn hidden_coupling(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        self.hidden_coupling.clone()
    }
    fn hidden_noise(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        self.hidden_noise.clone()
    }
}
