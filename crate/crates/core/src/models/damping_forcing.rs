use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{require_finite, require_positive, CgnsModel};
use crate::Result;

/// Parameters of the one-observed/two-hidden model with stochastic damping γ
/// and stochastic forcing b:
///
/// `du = (−d_u u + c γ u + F_u + b) dt + σ_u dW_u`
/// `dγ = (−d_γ γ − c u² + F_γ) dt + σ_γ dW_γ`
/// `db = −d_b b dt + σ_b dW_b`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampingForcingParams {
    pub d_u: f64,
    pub d_gamma: f64,
    pub d_b: f64,
    pub c: f64,
    #[serde(rename = "F_u")]
    pub f_u: f64,
    #[serde(rename = "F_gamma")]
    pub f_gamma: f64,
    pub sigma_u: f64,
    pub sigma_gamma: f64,
    pub sigma_b: f64,
}

impl DampingForcingParams {
    pub fn standard() -> Self {
        Self {
            d_u: 0.8,
            d_gamma: 0.8,
            d_b: 1.0,
            c: 1.2,
            f_u: 1.0,
            f_gamma: 1.0,
            sigma_u: 0.5,
            sigma_gamma: 2.0,
            sigma_b: 2.5,
        }
    }

    pub fn anti_damping_threshold(&self) -> f64 {
        self.d_u / self.c
    }

    pub fn nonlinear_energy_rate(&self, u: f64, gamma: f64) -> f64 {
        super::nonlinear_energy_rate(self.c, u, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        for (n, v) in [
            ("d_u", self.d_u),
            ("d_gamma", self.d_gamma),
            ("d_b", self.d_b),
            ("F_u", self.f_u),
            ("F_gamma", self.f_gamma),
        ] {
            require_finite(n, v)?;
        }
        require_positive("c", self.c)?;
        require_positive("sigma_u", self.sigma_u)?;
        require_positive("sigma_gamma", self.sigma_gamma)?;
        require_positive("sigma_b", self.sigma_b)
    }
}

#[derive(Debug, Clone)]
pub struct DampingForcingModel {
    pub params: DampingForcingParams,
}

pub fn build_damping_forcing_model(params: DampingForcingParams) -> Result<DampingForcingModel> {
    params.validate()?;
    Ok(DampingForcingModel { params })
}

impl CgnsModel for DampingForcingModel {
    fn dim_obs(&self) -> usize {
        1
    }
    fn dim_hidden(&self) -> usize {
        2
    }
    fn obs_base(&self, x: &[f64], _t: f64) -> DVector<f64> {
        DVector::from_element(1, -self.params.d_u * x[0] + self.params.f_u)
    }
    fn obs_coupling(&self, x: &[f64], _t: f64) -> DMatrix<f64> {
        // hidden state is (γ, b)
        DMatrix::from_row_slice(1, 2, &[self.params.c * x[0], 1.0])
    }
    fn obs_noise(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, self.params.sigma_u)
    }
    fn hidden_base(&self, x: &[f64], _t: f64) -> DVector<f64> {
        DVector::from_vec(vec![-self.params.c * x[0] * x[0] + self.params.f_gamma, 0.0])
    }
    fn hidden_coupling(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[-self.params.d_gamma, 0.0, 0.0, -self.params.d_b])
    }
    fn hidden_noise(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[self.params.sigma_gamma, 0.0, 0.0, self.params.sigma_b])
    }
}
