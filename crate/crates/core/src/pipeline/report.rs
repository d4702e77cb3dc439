//! Merges stage artifacts into one JSON summary plus per-figure tables.
//! Nothing here recomputes a diagnostic: every number is read from disk.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::config::Format;
use super::stages::{AlignmentReport, ClusterSummary, Context, Directions, Moments, Statistics, StoredEvent};
use crate::io;
use crate::Result;

pub const REPORT_SCHEMA: &str = include_str!("../../schema/report.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEvent {
    pub event_id: usize,
    pub member: usize,
    pub peak_time: f64,
    pub amplitude: f64,
    pub sign: i8,
    pub threshold: f64,
    pub t_on: Option<f64>,
    pub lead_time: Option<f64>,
    pub precursor_detected: Option<bool>,
    pub influence_t: Option<f64>,
    pub cluster: Option<usize>,
    pub pc: Option<[f64; 2]>,
    pub path_j: Option<f64>,
    pub weight: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub model: Value,
    pub members: usize,
    pub seed: u64,
    pub n_events: usize,
    pub events: Vec<ReportEvent>,
    pub statistics: Statistics,
    pub moments: Option<Moments>,
    pub directions: Option<Directions>,
    pub alignment: Option<AlignmentReport>,
    pub clusters: Option<ClusterSummary>,
    pub figures: Vec<String>,
}

fn optional<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if path.exists() {
        io::read_json(path).map(Some)
    } else {
        Ok(None)
    }
}

fn parse_usize(s: &str) -> Option<usize> {
    s.trim().parse().ok()
}

fn parse_f64(s: &str) -> Option<f64> {
    s.trim().parse().ok()
}

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

pub fn report(ctx: &Context) -> Result<Report> {
    let l = &ctx.layout;
    let model: Value = io::read_json(&l.model())?;
    let stored: Vec<StoredEvent> = ctx.stored_events()?;
    let statistics: Statistics = io::read_json(&l.statistics())?;

    let mut labels: BTreeMap<usize, (usize, [f64; 2])> = BTreeMap::new();
    if l.clusters().exists() {
        let (_, rows) = io::read_records(&l.clusters())?;
        for r in rows {
            if let (Some(id), Some(lab), Some(a), Some(b)) =
                (parse_usize(&r[0]), parse_usize(&r[1]), parse_f64(&r[2]), parse_f64(&r[3]))
            {
                labels.insert(id, (lab, [a, b]));
            }
        }
    }
    let mut weights: BTreeMap<usize, (f64, f64)> = BTreeMap::new();
    if l.weights().exists() {
        let (_, rows) = io::read_records(&l.weights())?;
        for r in rows {
            if let (Some(id), Some(j), Some(w)) = (parse_usize(&r[0]), parse_f64(&r[2]), parse_f64(&r[3])) {
                weights.insert(id, (j, w));
            }
        }
    }

    let events: Vec<ReportEvent> = stored
        .iter()
        .map(|e| ReportEvent {
            event_id: e.event_id,
            member: e.member,
            peak_time: e.record.peak_time,
            amplitude: e.record.amplitude,
            sign: e.record.sign,
            threshold: e.record.threshold_used,
            t_on: e.t_on,
            lead_time: e.t_on.map(|t| e.record.peak_time - t),
            precursor_detected: e.precursor_detected,
            influence_t: e.influence_t,
            cluster: labels.get(&e.event_id).map(|x| x.0),
            pc: labels.get(&e.event_id).map(|x| x.1),
            path_j: weights.get(&e.event_id).map(|x| x.0),
            weight: weights.get(&e.event_id).map(|x| x.1),
        })
        .collect();

    let csv = ctx.config.output.formats.contains(&Format::Csv);
    let mut figures = Vec::new();
    let mut fig = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        if !csv {
            return Ok(());
        }
        io::write_records(&l.figure(name), &strings(header), rows)?;
        figures.push(format!("report/{name}.csv"));
        Ok(())
    };
    let cell = |v: Option<f64>| v.map(io::fmt_f64).unwrap_or_else(|| "NaN".into());

    // observed series of the first member alongside its smoother-filter KL
    let (_, traj) = io::read_table(&l.trajectory(0))?;
    let kl = if l.kl(0).exists() { Some(io::read_table(&l.kl(0))?.1) } else { None };
    fig(
        "fig2_series",
        &["t", "x", "kl"],
        traj.iter()
            .enumerate()
            .map(|(n, r)| {
                vec![io::fmt_f64(r[0]), io::fmt_f64(r[1]), cell(kl.as_ref().and_then(|k| k.get(n)).map(|k| k[1]))]
            })
            .collect(),
    )?;
    if l.influence(0).exists() {
        let (_, inf) = io::read_table(&l.influence(0))?;
        fig(
            "fig2_influence",
            &["t", "influence_T", "kl"],
            inf.iter().map(|r| r.iter().copied().map(io::fmt_f64).collect()).collect(),
        )?;
    }
    fig(
        "fig3_onsets",
        &["event_id", "sign", "peak_time", "amplitude", "t_on", "lead_time", "influence_T"],
        events
            .iter()
            .map(|e| {
                vec![
                    e.event_id.to_string(),
                    e.sign.to_string(),
                    io::fmt_f64(e.peak_time),
                    io::fmt_f64(e.amplitude),
                    cell(e.t_on),
                    cell(e.lead_time),
                    cell(e.influence_t),
                ]
            })
            .collect(),
    )?;
    if !labels.is_empty() {
        fig(
            "fig4_clusters",
            &["event_id", "label", "pc1", "pc2", "amplitude"],
            events
                .iter()
                .filter_map(|e| {
                    let (lab, pc) = labels.get(&e.event_id)?;
                    Some(vec![
                        e.event_id.to_string(),
                        lab.to_string(),
                        io::fmt_f64(pc[0]),
                        io::fmt_f64(pc[1]),
                        io::fmt_f64(e.amplitude),
                    ])
                })
                .collect(),
        )?;
    }
    if l.representative().exists() {
        let (h, rows) = io::read_records(&l.representative())?;
        let h: Vec<&str> = h.iter().map(String::as_str).collect();
        fig("fig5_representative_path", &h, rows)?;
    }

    let report = Report {
        model,
        members: ctx.config.simulate.ensemble,
        seed: ctx.config.simulate.seed,
        n_events: events.len(),
        events,
        statistics,
        moments: optional(&l.moments())?,
        directions: optional(&l.directions())?,
        alignment: optional(&l.alignment())?,
        clusters: optional(&l.cluster_summary())?,
        figures,
    };
    io::write_json(&l.report(), &report)?;
    Ok(report)
}
