//! Extreme events, conditional mixtures, Monte Carlo functionals and
//! sensitive directions.

pub mod events;
pub mod mixture;
pub mod monte_carlo;
pub mod sensitivity;

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub use events::{detect_events, detect_events_with, EventRecord, ThresholdSpec};
pub use mixture::{build_mixture, mixture_moments, GaussianMixture, MomentLabel, MomentPair};
pub use monte_carlo::{monte_carlo_estimate, series_statistics, Functional, McEstimate, SeriesStatistics};
pub use sensitivity::{
    sensitive_direction_cov, sensitive_direction_full, sensitive_direction_mean, sensitivity_score, SensitiveDirection,
};

use crate::io;
use crate::Result;

/// Default minimum separation between retained peaks, in time units.
pub const DEFAULT_MIN_SEPARATION: f64 = 2.0;

/// JSON form of a [`MomentPair`], with the covariance as nested rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentRecord {
    pub label: MomentLabel,
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl From<&MomentPair> for MomentRecord {
    fn from(m: &MomentPair) -> Self {
        Self {
            label: m.label,
            mean: m.mean.iter().copied().collect(),
            cov: m.cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
        }
    }
}

impl From<&MomentRecord> for MomentPair {
    fn from(r: &MomentRecord) -> Self {
        MomentPair::new(DVector::from_vec(r.mean.clone()), sensitivity::as_matrix(&r.cov), r.label)
    }
}

pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// One row of the event table; `t_on` and `influence_T` are NaN until the
/// diagnostics fill them in.
#[derive(Debug, Clone, PartialEq)]
pub struct EventRow {
    pub event: EventRecord,
    pub t_on: f64,
    pub influence_t: f64,
}

pub const EVENT_TABLE_HEADER: [&str; 7] =
    ["event_id", "peak_time", "amplitude", "sign", "threshold", "t_on", "influence_T"];

pub fn write_event_table(path: &Path, rows: &[EventRow]) -> Result<()> {
    let header: Vec<String> = EVENT_TABLE_HEADER.iter().map(|s| s.to_string()).collect();
    let records: Vec<Vec<String>> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| {
            vec![
                i.to_string(),
                io::fmt_f64(r.event.peak_time),
                io::fmt_f64(r.event.amplitude),
                r.event.sign.to_string(),
                io::fmt_f64(r.event.threshold_used),
                io::fmt_f64(r.t_on),
                io::fmt_f64(r.influence_t),
            ]
        })
        .collect();
    io::write_records(path, &header, records)
}
