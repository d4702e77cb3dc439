use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::eventstats::{ThresholdSpec, DEFAULT_MIN_SEPARATION};
use crate::models::{
    build_damping_forcing_model, build_intermittent_model, build_topographic_model, CgnsModel, DampingForcingParams,
    IntermittentParams, LinearGaussianModel, TopographicModel, TopographicParams,
};
use crate::pathways::{Anchor, PathUncertainty};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Example {
    Intermittent,
    DampingForcing,
    Topographic,
    Linear,
}

impl Example {
    pub fn name(self) -> &'static str {
        match self {
            Example::Intermittent => "intermittent",
            Example::DampingForcing => "damping_forcing",
            Example::Topographic => "topographic",
            Example::Linear => "linear",
        }
    }

    pub fn is_cgns(self) -> bool {
        self != Example::Topographic
    }

    pub fn has_features(self) -> bool {
        matches!(self, Example::DampingForcing | Example::Topographic)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: ModelBlock,
    pub simulate: SimulateBlock,
    pub events: EventsBlock,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<DiagnosticsBlock>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster: Option<ClusterBlock>,
    #[serde(default)]
    pub output: OutputBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub example: Example,
    /// Overrides applied on top of the example's reference parameters.
    #[serde(default)]
    pub params: Map<String, Value>,
}

impl ModelBlock {
    /// The example's reference parameters with `model.params` applied.
    pub fn resolved_params(&self) -> Result<Value> {
        let base = match self.example {
            Example::Intermittent => serde_json::to_value(IntermittentParams::standard())?,
            Example::DampingForcing => serde_json::to_value(DampingForcingParams::standard())?,
            Example::Topographic => serde_json::to_value(TopographicParams::standard())?,
            Example::Linear => serde_json::to_value(LinearParams::default())?,
        };
        let Value::Object(mut map) = base else { unreachable!("parameter structs serialize to objects") };
        for (k, v) in &self.params {
            if !map.contains_key(k) && !(self.example == Example::Topographic && k == "beta") {
                return Err(Error::config(format!("unknown parameter `{k}` for model {}", self.example.name())));
            }
            map.insert(k.clone(), v.clone());
        }
        Ok(Value::Object(map))
    }

    pub fn build(&self) -> Result<BuiltModel> {
        let p = self.resolved_params()?;
        let bad = |e: serde_json::Error| Error::config(format!("model parameters: {e}"));
        Ok(match self.example {
            Example::Intermittent => {
                BuiltModel::Cgns(Box::new(build_intermittent_model(serde_json::from_value(p).map_err(bad)?)?))
            }
            Example::DampingForcing => {
                BuiltModel::Cgns(Box::new(build_damping_forcing_model(serde_json::from_value(p).map_err(bad)?)?))
            }
            Example::Linear => {
                let lp: LinearParams = serde_json::from_value(p).map_err(bad)?;
                BuiltModel::Cgns(Box::new(lp.build()?))
            }
            Example::Topographic => {
                BuiltModel::Topographic(build_topographic_model(serde_json::from_value(p).map_err(bad)?)?)
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateBlock {
    pub dt: f64,
    pub n_steps: usize,
    /// Leading time discarded from every member.
    #[serde(default)]
    pub burn_in: f64,
    pub seed: u64,
    #[serde(default = "one")]
    pub ensemble: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventMode {
    Percentile,
    Tails,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    #[default]
    Smoother,
    Filter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventsBlock {
    pub mode: EventMode,
    /// Percentile (0–100) in percentile mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub percentile: Option<f64>,
    /// Tail probability in tails mode.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fraction: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub two_sided: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_separation: Option<f64>,
    /// Beliefs used for the event-conditioned law.
    #[serde(default)]
    pub conditioning: Conditioning,
    /// Conditioning offset relative to the peak, in time units.
    #[serde(default)]
    pub offset: f64,
}

impl EventsBlock {
    pub fn threshold(&self) -> ThresholdSpec {
        match self.mode {
            EventMode::Percentile => ThresholdSpec::Percentile {
                percentile: self.percentile.unwrap_or(90.0),
                two_sided: self.two_sided.unwrap_or(false),
            },
            EventMode::Tails => ThresholdSpec::Tails {
                fraction: self.fraction.unwrap_or(0.05),
                two_sided: self.two_sided.unwrap_or(true),
            },
        }
    }

    pub fn min_separation(&self, example: Example) -> f64 {
        self.min_separation.unwrap_or(match example {
            Example::Topographic => 5.0,
            _ => DEFAULT_MIN_SEPARATION,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsBlock {
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    #[serde(default = "default_t_pre")]
    pub t_pre: f64,
    /// Lag spacing of influence profiles, in grid steps.
    #[serde(default = "default_lag_stride")]
    pub lag_stride: usize,
    /// Longest lag of influence profiles, in time units.
    #[serde(default = "default_max_lag")]
    pub max_lag: f64,
    /// Spacing of the influence-range series, in grid steps.
    #[serde(default = "default_influence_stride")]
    pub influence_stride: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_pre: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_post: Option<f64>,
    #[serde(default)]
    pub anchor: Anchor,
    #[serde(default)]
    pub uncertainty: PathUncertainty,
}

fn default_kappa() -> f64 {
    0.8
}
fn default_t_pre() -> f64 {
    1.5
}
fn default_lag_stride() -> usize {
    20
}
fn default_max_lag() -> f64 {
    5.0
}
fn default_influence_stride() -> usize {
    200
}

impl DiagnosticsBlock {
    pub fn windows(&self, example: Example) -> (f64, f64) {
        let d = if example == Example::Topographic { 1.0 } else { 1.5 };
        (self.window_pre.unwrap_or(d), self.window_post.unwrap_or(d))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HiddenSourceKind {
    #[default]
    Truth,
    Smoother,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterBlock {
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub hidden_source: HiddenSourceKind,
}

fn default_k() -> usize {
    3
}
fn default_restarts() -> usize {
    crate::clusterkit::kmeans::DEFAULT_RESTARTS
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputBlock {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    /// `csv` enables the per-figure data tables; JSON artifacts are always written.
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

impl Default for OutputBlock {
    fn default() -> Self {
        Self { directory: None, formats: default_formats() }
    }
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("{name} must be positive and finite, got {v}")))
    }
}

impl PipelineConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::config(format!("config file {} not found", path.display())),
            _ => Error::io(path, e),
        })?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.simulate;
        positive("simulate.dt", s.dt)?;
        if s.n_steps < 2 {
            return Err(Error::config("simulate.n_steps must be at least 2"));
        }
        if !(s.burn_in >= 0.0 && s.burn_in.is_finite()) {
            return Err(Error::config("simulate.burn_in must be nonnegative"));
        }
        if s.burn_in >= s.dt * s.n_steps as f64 {
            return Err(Error::config("simulate.burn_in consumes the whole run"));
        }
        if s.ensemble == 0 {
            return Err(Error::config("simulate.ensemble must be at least 1"));
        }
        let e = &self.events;
        match e.threshold() {
            ThresholdSpec::Percentile { percentile, .. } if !(0.0..=100.0).contains(&percentile) => {
                return Err(Error::config("events.percentile must lie in [0, 100]"))
            }
            ThresholdSpec::Tails { fraction, .. } if !(fraction > 0.0 && fraction < 0.5) => {
                return Err(Error::config("events.fraction must lie in (0, 0.5)"))
            }
            _ => {}
        }
        if e.mode == EventMode::Percentile && e.fraction.is_some()
            || e.mode == EventMode::Tails && e.percentile.is_some()
        {
            return Err(Error::config("events: `percentile` belongs to percentile mode, `fraction` to tails mode"));
        }
        if !(e.min_separation(self.model.example) >= 0.0) || !e.offset.is_finite() {
            return Err(Error::config("events.min_separation must be nonnegative and offset finite"));
        }
        if let Some(d) = &self.diagnostics {
            if !self.model.example.is_cgns() {
                return Err(Error::UnsupportedStage {
                    stage: "diagnose".into(),
                    model: self.model.example.name().into(),
                });
            }
            if !(d.kappa >= 0.0) {
                return Err(Error::config("diagnostics.kappa must be nonnegative"));
            }
            positive("diagnostics.t_pre", d.t_pre)?;
            positive("diagnostics.max_lag", d.max_lag)?;
            if d.lag_stride == 0 || d.influence_stride == 0 {
                return Err(Error::config("diagnostics strides must be at least 1"));
            }
            let (a, b) = d.windows(self.model.example);
            if !(a >= 0.0 && b >= 0.0) {
                return Err(Error::config("diagnostics windows must be nonnegative"));
            }
        }
        if let Some(c) = &self.cluster {
            if !self.model.example.has_features() {
                return Err(Error::UnsupportedStage {
                    stage: "cluster".into(),
                    model: self.model.example.name().into(),
                });
            }
            if c.k == 0 || c.restarts == 0 {
                return Err(Error::config("cluster.k and cluster.restarts must be at least 1"));
            }
            if c.hidden_source == HiddenSourceKind::Smoother && !self.model.example.is_cgns() {
                return Err(Error::config("smoother hidden source needs a conditionally Gaussian model"));
            }
        }
        // building the model validates the parameter overrides
        self.build_model()?;
        Ok(())
    }

    /// The example's reference parameters with `model.params` applied.
    pub fn resolved_params(&self) -> Result<Value> {
        self.model.resolved_params()
    }

    pub fn build_model(&self) -> Result<BuiltModel> {
        self.model.build()
    }

    pub fn damping_forcing_params(&self) -> Result<DampingForcingParams> {
        serde_json::from_value(self.resolved_params()?).map_err(|e| Error::config(e.to_string()))
    }

    /// SHA-256 of the canonical JSON serialization.
    pub fn sha256(&self) -> String {
        hex_digest(&serde_json::to_vec(self).expect("config serializes"))
    }

    pub fn model_hash(&self) -> Result<String> {
        let v = serde_json::json!({ "example": self.model.example, "params": self.resolved_params()? });
        Ok(hex_digest(&serde_json::to_vec(&v)?))
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[allow(clippy::large_enum_variant)]
pub enum BuiltModel {
    Cgns(Box<dyn CgnsModel>),
    Topographic(TopographicModel),
}

impl BuiltModel {
    pub fn dims(&self) -> (usize, usize) {
        match self {
            BuiltModel::Cgns(m) => (m.dim_obs(), m.dim_hidden()),
            BuiltModel::Topographic(m) => (1, 2 * m.n_modes()),
        }
    }
}

/// Constant coefficients of a linear Gaussian model; the default is the
/// scalar Riccati example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearParams {
    #[serde(rename = "A0")]
    pub a0_obs: Vec<f64>,
    #[serde(rename = "A1")]
    pub a1_obs: Vec<Vec<f64>>,
    #[serde(rename = "B1")]
    pub b1: Vec<Vec<f64>>,
    pub a0: Vec<f64>,
    pub a1: Vec<Vec<f64>>,
    pub b2: Vec<Vec<f64>>,
}

impl Default for LinearParams {
    fn default() -> Self {
        Self {
            a0_obs: vec![0.0],
            a1_obs: vec![vec![1.0]],
            b1: vec![vec![1.0]],
            a0: vec![0.0],
            a1: vec![vec![-1.0]],
            b2: vec![vec![1.0]],
        }
    }
}

impl LinearParams {
    pub fn build(&self) -> Result<LinearGaussianModel> {
        let mat = |name: &str, rows: &[Vec<f64>]| -> Result<DMatrix<f64>> {
            let c = rows.first().map_or(0, |r| r.len());
            if rows.iter().any(|r| r.len() != c) {
                return Err(Error::config(format!("{name} rows have unequal length")));
            }
            Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
        };
        LinearGaussianModel::new(
            DVector::from_vec(self.a0_obs.clone()),
            mat("A1", &self.a1_obs)?,
            mat("B1", &self.b1)?,
            DVector::from_vec(self.a0.clone()),
            mat("a1", &self.a1)?,
            mat("b2", &self.b2)?,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MIN: &str = r#"{
        "model": {"example": "intermittent"},
        "simulate": {"dt": 0.005, "n_steps": 1000, "seed": 1},
        "events": {"mode": "percentile"}
    }"#;

    #[test]
    fn minimal_config_parses() {
        let c = PipelineConfig::parse(MIN).unwrap();
        assert_eq!(c.events.threshold(), ThresholdSpec::Percentile { percentile: 90.0, two_sided: false });
        assert_eq!(c.model_hash().unwrap().len(), 64);
        assert_eq!(c.sha256(), PipelineConfig::parse(MIN).unwrap().sha256());
    }

    #[test]
    fn unknown_keys_rejected() {
        let bad = MIN.replace("\"seed\": 1", "\"seed\": 1, \"sede\": 2");
        assert_eq!(PipelineConfig::parse(&bad).unwrap_err().exit_code(), 2);
        let bad =
            MIN.replace("{\"example\": \"intermittent\"}", "{\"example\": \"intermittent\", \"params\": {\"d_x\": 1}}");
        assert!(matches!(PipelineConfig::parse(&bad), Err(Error::Config(_))));
        let ok = MIN
            .replace("{\"example\": \"intermittent\"}", "{\"example\": \"intermittent\", \"params\": {\"d_u\": 0.9}}");
        assert!(PipelineConfig::parse(&ok).is_ok());
    }

    #[test]
    fn unsupported_stage_guard() {
        let topo = MIN
            .replace("intermittent", "topographic")
            .replace("\"mode\": \"percentile\"}", "\"mode\": \"tails\"}, \"diagnostics\": {}");
        match PipelineConfig::parse(&topo) {
            Err(Error::UnsupportedStage { stage, model }) => {
                assert_eq!((stage.as_str(), model.as_str()), ("diagnose", "topographic"))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn linear_default_is_riccati_example() {
        let c = PipelineConfig::parse(&MIN.replace("intermittent", "linear")).unwrap();
        assert_eq!(c.build_model().unwrap().dims(), (1, 1));
    }
}
