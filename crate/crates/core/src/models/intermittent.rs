use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{require_finite, require_positive, scalar, CgnsModel};
use crate::Result;

/// Parameters of the one-observed/one-hidden intermittent model
///
/// `du = (−d_u u + c γ u + F_u) dt + σ_u dW_u`
/// `dγ = (−d_γ γ − c u² + F_γ) dt + σ_γ dW_γ`
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntermittentParams {
    pub d_u: f64,
    pub d_gamma: f64,
    pub c: f64,
    #[serde(rename = "F_u")]
    pub f_u: f64,
    #[serde(rename = "F_gamma")]
    pub f_gamma: f64,
    pub sigma_u: f64,
    pub sigma_gamma: f64,
}

impl IntermittentParams {
    /// Reference parameter set.
    pub fn standard() -> Self {
        Self { d_u: 0.8, d_gamma: 0.8, c: 1.2, f_u: 1.0, f_gamma: 1.0, sigma_u: 0.5, sigma_gamma: 2.0 }
    }

    /// Level of γ above which the net linear coefficient on u turns positive.
    pub fn anti_damping_threshold(&self) -> f64 {
        self.d_u / self.c
    }

    pub fn nonlinear_energy_rate(&self, u: f64, gamma: f64) -> f64 {
        super::nonlinear_energy_rate(self.c, u, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        for (n, v) in [("d_u", self.d_u), ("d_gamma", self.d_gamma), ("F_u", self.f_u), ("F_gamma", self.f_gamma)] {
            require_finite(n, v)?;
        }
        require_positive("c", self.c)?;
        require_positive("sigma_u", self.sigma_u)?;
        require_positive("sigma_gamma", self.sigma_gamma)
    }
}

#[derive(Debug, Clone)]
pub struct IntermittentModel {
    pub params: IntermittentParams,
}

pub fn build_intermittent_model(params: IntermittentParams) -> Result<IntermittentModel> {
    params.validate()?;
    Ok(IntermittentModel { params })
}

impl CgnsModel for IntermittentModel {
    fn dim_obs(&self) -> usize {
        1
    }
    fn dim_hidden(&self) -> usize {
        1
    }
    fn obs_base(&self, x: &[f64], _t: f64) -> DVector<f64> {
        DVector::from_element(1, -self.params.d_u * x[0] + self.params.f_u)
    }
    fn obs_coupling(&self, x: &[f64], _t: f64) -> DMatrix<f64> {
        scalar(self.params.c * x[0])
    }
    fn obs_noise(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        scalar(self.params.sigma_u)
    }
    fn hidden_base(&self, x: &[f64], _t: f64) -> DVector<f64> {
        DVector::from_element(1, -self.params.c * x[0] * x[0] + self.params.f_gamma)
    }
    fn hidden_coupling(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        scalar(-self.params.d_gamma)
    }
    fn hidden_noise(&self, _x: &[f64], _t: f64) -> DMatrix<f64> {
        scalar(self.params.sigma_gamma)
    }
}
