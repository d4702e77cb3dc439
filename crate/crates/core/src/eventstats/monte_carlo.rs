use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::assimilate::{BeliefPath, GaussianBelief};
use crate::simulate::Trajectory;
use crate::{Error, Result};

/// Test functionals with a closed-form expectation under a Gaussian belief.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Functional {
    /// `y_j^degree`, degree at most 2.
    Polynomial { component: usize, degree: u32 },
    /// `yᵀ A y + bᵀ y + c`.
    Quadratic { a: Vec<Vec<f64>>, b: Vec<f64>, c: f64 },
    /// `x_j^power · inner(y)`, where `x` is the observed state at the same time.
    ObsWeighted { obs_component: usize, obs_power: i32, inner: Box<Functional> },
}

impl Functional {
    pub fn validate(&self, dim: usize, dim_obs: Option<usize>) -> Result<()> {
        match self {
            Functional::Polynomial { component, degree } => {
                if *degree > 2 {
                    return Err(Error::arg(format!("polynomial degree {degree} has no supported closed form")));
                }
                if *component >= dim {
                    return Err(Error::arg(format!("component {component} out of range for dimension {dim}")));
                }
            }
            Functional::Quadratic { a, b, .. } => {
                if a.len() != dim || a.iter().any(|r| r.len() != dim) || b.len() != dim {
                    return Err(Error::arg("quadratic functional shape does not match the hidden dimension"));
                }
            }
            Functional::ObsWeighted { obs_component, inner, .. } => {
                match dim_obs {
                    None => return Err(Error::arg("observation-weighted functional needs trajectories")),
                    Some(d) if *obs_component >= d => {
                        return Err(Error::arg(format!("observed component {obs_component} out of range")))
                    }
                    _ => {}
                }
                if matches!(**inner, Functional::ObsWeighted { .. }) {
                    return Err(Error::arg("nested observation weights are not supported"));
                }
                inner.validate(dim, dim_obs)?;
            }
        }
        Ok(())
    }

    /// Expectation under `belief`, with `x` the observed state (if any).
    pub fn expectation(&self, belief: &GaussianBelief, x: Option<&[f64]>) -> f64 {
        match self {
            Functional::Polynomial { component: j, degree } => match degree {
                0 => 1.0,
                1 => belief.mean[*j],
                _ => belief.mean[*j].powi(2) + belief.cov[(*j, *j)],
            },
            Functional::Quadratic { a, b, c } => {
                let n = belief.dim();
                let a = DMatrix::from_fn(n, n, |i, k| a[i][k]);
                let b = DVector::from_column_slice(b);
                (&a * &belief.cov).trace() + belief.mean.dot(&(&a * &belief.mean)) + b.dot(&belief.mean) + c
            }
            Functional::ObsWeighted { obs_component, obs_power, inner } => {
                let xv = x.map(|x| x[*obs_component]).unwrap_or(f64::NAN);
                xv.powi(*obs_power) * inner.expectation(belief, x)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub members: usize,
}

/// Ensemble average of per-member Gaussian expectations at `t_index`.
/// `trajs` may be empty unless the functional weights by observed values.
pub fn monte_carlo_estimate(
    paths: &[BeliefPath],
    trajs: &[Trajectory],
    functional: &Functional,
    t_index: usize,
) -> Result<McEstimate> {
    if paths.is_empty() {
        return Err(Error::arg("Monte Carlo estimate needs at least one member"));
    }
    if !trajs.is_empty() && trajs.len() != paths.len() {
        return Err(Error::arg("trajectory and belief-path counts differ"));
    }
    let dim_obs = trajs.first().map(|t| t.dim_obs);
    functional.validate(paths[0].dim(), dim_obs)?;
    let values = paths
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let b = p.beliefs.get(t_index).ok_or_else(|| Error::arg(format!("t_index {t_index} out of range")))?;
            let x = trajs.get(k).map(|t| t.obs_at(t_index));
            Ok(functional.expectation(b, x))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(summarize(&values))
}

/// Sample mean and `sd/√K` (sample sd with K − 1 denominator).
pub fn summarize(values: &[f64]) -> McEstimate {
    let k = values.len();
    let mean = values.iter().sum::<f64>() / k as f64;
    let std_error = if k > 1 {
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
        (var / k as f64).sqrt()
    } else {
        0.0
    };
    McEstimate { estimate: mean, std_error, members: k }
}

/// Moments of a (correlated) scalar time series. Standard errors use the
/// effective sample size `n · dt / τ_int`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesStatistics {
    pub n: usize,
    pub n_effective: f64,
    pub mean: f64,
    pub variance: f64,
    pub skewness: f64,
    /// Plain (non-excess) kurtosis; 3 for a Gaussian.
    pub kurtosis: f64,
    pub mean_se: f64,
    pub skewness_se: f64,
    pub kurtosis_se: f64,
}

pub fn series_statistics(series: &[f64], dt: f64) -> Result<SeriesStatistics> {
    let n = series.len();
    if n < 4 {
        return Err(Error::arg("series statistics need at least four samples"));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let m = |p: i32| series.iter().map(|v| (v - mean).powi(p)).sum::<f64>() / n as f64;
    let variance = m(2);
    let (skewness, kurtosis) =
        if variance > 0.0 { (m(3) / variance.powf(1.5), m(4) / (variance * variance)) } else { (0.0, 0.0) };
    let tau = super::mixture::decorrelation_time(series, dt);
    let n_effective = (n as f64 * dt / tau).clamp(1.0, n as f64);
    Ok(SeriesStatistics {
        n,
        n_effective,
        mean,
        variance,
        skewness,
        kurtosis,
        mean_se: (variance / n_effective).sqrt(),
        skewness_se: (6.0 / n_effective).sqrt(),
        kurtosis_se: (24.0 / n_effective).sqrt(),
    })
}
