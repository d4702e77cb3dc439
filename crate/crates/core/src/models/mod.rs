//! Model abstractions for coupled observed/hidden stochastic systems.
//!
//! [`GeneralModel`] is an arbitrary pair of SDEs
//! `dX = F(X,Y,t) dt + B1(X,Y,t) dW1`, `dY = G(X,Y,t) dt + b2(X,Y,t) dW2`.
//! [`CgnsModel`] is the conditionally Gaussian subclass in which the hidden
//! state enters the drifts affinely with coefficients that depend only on the
//! observed state, which is what makes exact filtering possible.

mod damping_forcing;
mod intermittent;
mod linear;
mod topographic;

pub use damping_forcing::{build_damping_forcing_model, DampingForcingModel, DampingForcingParams};
pub use intermittent::{build_intermittent_model, IntermittentModel, IntermittentParams};
pub use linear::LinearGaussianModel;
pub use topographic::{
    build_topographic_model, interaction_coefficient, TopographicModel, TopographicParams, TopographyEntry, Wavevector,
};

use nalgebra::{DMatrix, DVector};

/// A coupled observed/hidden SDE pair. Implementations must be pure.
pub trait GeneralModel: Send + Sync {
    fn dim_obs(&self) -> usize;
    fn dim_hidden(&self) -> usize;
    fn drift_obs(&self, x: &[f64], y: &[f64], t: f64) -> DVector<f64>;
    fn drift_hidden(&self, x: &[f64], y: &[f64], t: f64) -> DVector<f64>;
    fn noise_obs(&self, x: &[f64], y: &[f64], t: f64) -> DMatrix<f64>;
    fn noise_hidden(&self, x: &[f64], y: &[f64], t: f64) -> DMatrix<f64>;

    /// `B1 · xi`. Override when the noise matrix has exploitable structure.
    fn diffuse_obs(&self, x: &[f64], y: &[f64], t: f64, xi: &[f64]) -> DVector<f64> {
        self.noise_obs(x, y, t) * DVector::from_column_slice(xi)
    }

    /// `b2 · eta`. Override when the noise matrix has exploitable structure.
    fn diffuse_hidden(&self, x: &[f64], y: &[f64], t: f64, eta: &[f64]) -> DVector<f64> {
        self.noise_hidden(x, y, t) * DVector::from_column_slice(eta)
    }
}

/// All six coefficient evaluations of a conditionally Gaussian model at one
/// observed state.
#[derive(Debug, Clone)]
pub struct CgnsCoefficients {
    /// `A0(x,t)`, length n_X.
    pub obs_base: DVector<f64>,
    /// `A1(x,t)`, n_X × n_Y.
    pub obs_coupling: DMatrix<f64>,
    /// `B1(x,t)`, n_X × n_X.
    pub obs_noise: DMatrix<f64>,
    /// `a0(x,t)`, length n_Y.
    pub hidden_base: DVector<f64>,
    /// `a1(x,t)`, n_Y × n_Y.
    pub hidden_coupling: DMatrix<f64>,
    /// `b2(x,t)`, n_Y × n_Y.
    pub hidden_noise: DMatrix<f64>,
}

/// Conditionally Gaussian nonlinear system:
///
/// `dX = (A0(X,t) + A1(X,t) Y) dt + B1(X,t) dW1`
/// `dY = (a0(X,t) + a1(X,t) Y) dt + b2(X,t) dW2`
pub trait CgnsModel: Send + Sync {
    fn dim_obs(&self) -> usize;
    fn dim_hidden(&self) -> usize;
    fn obs_base(&self, x: &[f64], t: f64) -> DVector<f64>;
    fn obs_coupling(&self, x: &[f64], t: f64) -> DMatrix<f64>;
    fn obs_noise(&self, x: &[f64], t: f64) -> DMatrix<f64>;
    fn hidden_base(&self, x: &[f64], t: f64) -> DVector<f64>;
    fn hidden_coupling(&self, x: &[f64], t: f64) -> DMatrix<f64>;
    fn hidden_noise(&self, x: &[f64], t: f64) -> DMatrix<f64>;

    fn coefficients(&self, x: &[f64], t: f64) -> CgnsCoefficients {
        CgnsCoefficients {
            obs_base: self.obs_base(x, t),
            obs_coupling: self.obs_coupling(x, t),
            obs_noise: self.obs_noise(x, t),
            hidden_base: self.hidden_base(x, t),
            hidden_coupling: self.hidden_coupling(x, t),
            hidden_noise: self.hidden_noise(x, t),
        }
    }
}

/// A conditionally Gaussian model viewed as a general one (affine hidden
/// dependence made explicit).
#[derive(Clone, Copy)]
pub struct AsGeneral<'a>(pub &'a dyn CgnsModel);

pub fn demote(model: &dyn CgnsModel) -> AsGeneral<'_> {
    AsGeneral(model)
}

impl GeneralModel for AsGeneral<'_> {
    fn dim_obs(&self) -> usize {
        self.0.dim_obs()
    }
    fn dim_hidden(&self) -> usize {
        self.0.dim_hidden()
    }
    fn drift_obs(&self, x: &[f64], y: &[f64], t: f64) -> DVector<f64> {
        self.0.obs_base(x, t) + self.0.obs_coupling(x, t) * DVector::from_column_slice(y)
    }
    fn drift_hidden(&self, x: &[f64], y: &[f64], t: f64) -> DVector<f64> {
        self.0.hidden_base(x, t) + self.0.hidden_coupling(x, t) * DVector::from_column_slice(y)
    }
    fn noise_obs(&self, x: &[f64], _y: &[f64], t: f64) -> DMatrix<f64> {
        self.0.obs_noise(x, t)
    }
    fn noise_hidden(&self, x: &[f64], _y: &[f64], t: f64) -> DMatrix<f64> {
        self.0.hidden_noise(x, t)
    }
}

/// `d/dt ½(u² + γ²)` restricted to the quadratic coupling terms `cγu` and
/// `−cu²`. Identically zero: the nonlinearity only exchanges energy.
pub fn nonlinear_energy_rate(c: f64, u: f64, gamma: f64) -> f64 {
    let growth = c * gamma * u;
    let feedback = -c * u * u;
    u * growth + gamma * feedback
}

pub(crate) fn require_finite(name: &str, v: f64) -> crate::Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(crate::Error::config(format!("{name} must be finite, got {v}")))
    }
}

pub(crate) fn require_positive(name: &str, v: f64) -> crate::Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(crate::Error::config(format!("{name} must be positive, got {v}")))
    }
}

pub(crate) fn scalar(v: f64) -> DMatrix<f64> {
    DMatrix::from_element(1, 1, v)
}
