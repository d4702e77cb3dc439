use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// How the extreme-event threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ThresholdSpec {
    /// Keep separated peaks whose magnitude reaches the given percentile
    /// (0–100) of all separated peak magnitudes.
    Percentile {
        percentile: f64,
        #[serde(default)]
        two_sided: bool,
    },
    /// Keep peaks beyond the upper (and lower) `fraction` quantiles of the
    /// sample distribution of the series itself.
    Tails {
        fraction: f64,
        #[serde(default = "default_true")]
        two_sided: bool,
    },
}

fn default_true() -> bool {
    true
}

impl ThresholdSpec {
    fn validate(&self) -> Result<()> {
        match *self {
            ThresholdSpec::Percentile { percentile, .. } if !(0.0..=100.0).contains(&percentile) => {
                Err(Error::arg(format!("percentile must lie in [0, 100], got {percentile}")))
            }
            ThresholdSpec::Tails { fraction, .. } if !(fraction > 0.0 && fraction < 0.5) => {
                Err(Error::arg(format!("tail fraction must lie in (0, 0.5), got {fraction}")))
            }
            _ => Ok(()),
        }
    }

    fn two_sided(&self) -> bool {
        match *self {
            ThresholdSpec::Percentile { two_sided, .. } | ThresholdSpec::Tails { two_sided, .. } => two_sided,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub peak_index: usize,
    pub peak_time: f64,
    /// Signed value of the series at the peak.
    pub amplitude: f64,
    pub sign: i8,
    /// Signed threshold the peak was compared against: `sign · amplitude ≥
    /// sign · threshold_used`.
    pub threshold_used: f64,
    /// Inclusive index ranges.
    pub window_pre: (usize, usize),
    pub window_post: (usize, usize),
}

/// Default half-width of the analysis windows attached to each event.
pub const DEFAULT_WINDOW: f64 = 1.5;

/// Linear-interpolation quantile (`numpy.quantile` default), `q ∈ [0, 1]`.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Indices of local maxima (strictly above the left neighbour, at least the
/// right one, so a plateau contributes its first point).
pub fn local_maxima(s: &[f64]) -> Vec<usize> {
    (1..s.len().saturating_sub(1)).filter(|&i| s[i] > s[i - 1] && s[i] >= s[i + 1]).collect()
}

pub fn local_minima(s: &[f64]) -> Vec<usize> {
    (1..s.len().saturating_sub(1)).filter(|&i| s[i] < s[i - 1] && s[i] <= s[i + 1]).collect()
}

/// Greedy non-maximum suppression: visit candidates by decreasing magnitude
/// and keep one only if no kept peak lies closer than `min_gap` samples.
pub fn enforce_separation(candidates: &[usize], magnitude: impl Fn(usize) -> f64, min_gap: f64) -> Vec<usize> {
    let mut order = candidates.to_vec();
    order.sort_by(|&a, &b| magnitude(b).total_cmp(&magnitude(a)).then(a.cmp(&b)));
    let mut kept = BTreeSet::new();
    for i in order {
        let too_close = |j: usize| ((i as f64 - j as f64).abs()) < min_gap;
        let left = kept.range(..i).next_back().copied();
        let right = kept.range(i..).next().copied();
        if left.is_some_and(too_close) || right.is_some_and(too_close) {
            continue;
        }
        kept.insert(i);
    }
    kept.into_iter().collect()
}

/// Detection on a series sampled from time 0, with default analysis windows.
pub fn detect_events(series: &[f64], spec: &ThresholdSpec, min_separation: f64, dt: f64) -> Result<Vec<EventRecord>> {
    detect_events_with(series, spec, min_separation, dt, 0.0, (DEFAULT_WINDOW, DEFAULT_WINDOW))
}

pub fn detect_events_with(
    series: &[f64],
    spec: &ThresholdSpec,
    min_separation: f64,
    dt: f64,
    t0: f64,
    windows: (f64, f64),
) -> Result<Vec<EventRecord>> {
    if series.len() < 3 {
        return Err(Error::arg("event detection needs at least three samples"));
    }
    if !(dt > 0.0) || !(min_separation >= 0.0) {
        return Err(Error::arg("dt must be positive and min_separation nonnegative"));
    }
    spec.validate()?;
    let gap = min_separation / dt - 1e-9;
    let two_sided = spec.two_sided();

    // (index, sign, threshold)
    let mut picked: Vec<(usize, i8, f64)> = Vec::new();
    match *spec {
        ThresholdSpec::Percentile { percentile, .. } => {
            let mut classes = vec![(1i8, local_maxima(series))];
            if two_sided {
                classes.push((-1, local_minima(series)));
            }
            for (sign, cands) in classes {
                let mag = |i: usize| sign as f64 * series[i];
                let kept = enforce_separation(&cands, mag, gap);
                if kept.is_empty() {
                    continue;
                }
                let mags: Vec<f64> = kept.iter().map(|&i| mag(i)).collect();
                let thr = quantile(&mags, percentile / 100.0);
                picked.extend(kept.into_iter().filter(|&i| mag(i) >= thr).map(|i| (i, sign, sign as f64 * thr)));
            }
        }
        ThresholdSpec::Tails { fraction, .. } => {
            let mut sorted = series.to_vec();
            sorted.sort_by(f64::total_cmp);
            let upper = quantile_sorted(&sorted, 1.0 - fraction);
            let lower = quantile_sorted(&sorted, fraction);
            let maxima: Vec<usize> = local_maxima(series).into_iter().filter(|&i| series[i] >= upper).collect();
            picked.extend(enforce_separation(&maxima, |i| series[i], gap).into_iter().map(|i| (i, 1, upper)));
            if two_sided {
                let minima: Vec<usize> = local_minima(series).into_iter().filter(|&i| series[i] <= lower).collect();
                picked.extend(enforce_separation(&minima, |i| -series[i], gap).into_iter().map(|i| (i, -1, lower)));
            }
        }
    }
    picked.sort_by_key(|p| p.0);

    let n = series.len();
    let pre = (windows.0 / dt + 1e-9).floor() as usize;
    let post = (windows.1 / dt + 1e-9).floor() as usize;
    Ok(picked
        .into_iter()
        .map(|(i, sign, thr)| EventRecord {
            peak_index: i,
            peak_time: t0 + i as f64 * dt,
            amplitude: series[i],
            sign,
            threshold_used: thr,
            window_pre: (i.saturating_sub(pre), i),
            window_post: (i, (i + post).min(n - 1)),
        })
        .collect())
}
