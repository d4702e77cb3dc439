//! Configuration-driven runner: each stage reads the artifacts of earlier
//! stages from the output directory and writes its own.

pub mod config;
pub mod report;
pub mod stages;

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use config::{Example, PipelineConfig};
pub use report::{Report, REPORT_SCHEMA};
pub use stages::{Context, Layout, StoredEvent};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Simulate,
    Assimilate,
    Diagnose,
    Events,
    Pathways,
    Cluster,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Simulate,
        Stage::Assimilate,
        Stage::Diagnose,
        Stage::Events,
        Stage::Pathways,
        Stage::Cluster,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Assimilate => "assimilate",
            Stage::Diagnose => "diagnose",
            Stage::Events => "events",
            Stage::Pathways => "pathways",
            Stage::Cluster => "cluster",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL.into_iter().find(|st| st.name() == s).ok_or_else(|| Error::config(format!("unknown stage `{s}`")))
    }
}

/// The stages `run` executes for this configuration, in order.
pub fn plan(config: &PipelineConfig) -> Vec<Stage> {
    let cgns = config.model.example.is_cgns();
    let diag = config.diagnostics.is_some();
    let mut out = vec![Stage::Simulate];
    if cgns {
        out.push(Stage::Assimilate);
        if diag {
            out.push(Stage::Diagnose);
        }
    }
    out.push(Stage::Events);
    if cgns && diag {
        out.push(Stage::Pathways);
    }
    if config.cluster.is_some() {
        out.push(Stage::Cluster);
    }
    out.push(Stage::Report);
    out
}

pub fn run_stage(ctx: &Context, stage: Stage) -> Result<()> {
    match stage {
        Stage::Simulate => stages::simulate(ctx),
        Stage::Assimilate => stages::assimilate(ctx),
        Stage::Diagnose => stages::diagnose(ctx),
        Stage::Events => stages::events(ctx),
        Stage::Pathways => stages::pathways_stage(ctx),
        Stage::Cluster => stages::cluster(ctx),
        Stage::Report => report::report(ctx).map(|_| ()),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStatus {
    pub name: String,
    pub status: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_sha256: String,
    pub model_sha256: String,
    pub seed: u64,
    pub model: String,
    pub complete: bool,
    pub stages: Vec<StageStatus>,
    pub artifacts: Vec<Artifact>,
}

impl Manifest {
    pub fn read(path: &Path) -> Result<Self> {
        crate::io::read_json(path)
    }

    pub fn artifact(&self, rel: &str) -> Option<&Artifact> {
        self.artifacts.iter().find(|a| a.path == rel)
    }
}

/// Every file under the output directory except the manifest, sorted by
/// relative path.
pub fn artifacts(root: &Path) -> Result<Vec<Artifact>> {
    if !root.exists() {
        return Ok(Vec::new());
    }
    let manifest = root.join("manifest.json");
    let mut out = Vec::new();
    for entry in walkdir::WalkDir::new(root).sort_by_file_name() {
        let entry = entry.map_err(|e| Error::Io { path: root.into(), source: e.into() })?;
        let p = entry.path();
        if !entry.file_type().is_file() || p == manifest {
            continue;
        }
        let bytes = fs::read(p).map_err(|e| Error::io(p, e))?;
        let rel = p
            .strip_prefix(root)
            .unwrap_or(p)
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        out.push(Artifact { path: rel, sha256: config::hex_digest(&bytes), bytes: bytes.len() as u64 });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

/// Runs `stages` in order and writes the manifest afterwards, also when a
/// stage fails (the failing stage is recorded and later stages are skipped).
pub fn run_stages(ctx: &Context, stages: &[Stage]) -> Result<Manifest> {
    let mut status = Vec::new();
    let mut failure = None;
    for &s in stages {
        if failure.is_some() {
            status.push(StageStatus { name: s.name().into(), status: "skipped".into(), error: None });
            continue;
        }
        match run_stage(ctx, s) {
            Ok(()) => status.push(StageStatus { name: s.name().into(), status: "ok".into(), error: None }),
            Err(e) => {
                status.push(StageStatus { name: s.name().into(), status: "failed".into(), error: Some(e.to_string()) });
                failure = Some(Error::Stage { stage: s.name().into(), source: Box::new(e) });
            }
        }
    }
    let manifest = Manifest {
        config_sha256: ctx.config.sha256(),
        model_sha256: ctx.model_hash.clone(),
        seed: ctx.config.simulate.seed,
        model: ctx.config.model.example.name().into(),
        complete: failure.is_none(),
        stages: status,
        artifacts: artifacts(&ctx.layout.root)?,
    };
    crate::io::write_json(&ctx.layout.manifest(), &manifest)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

/// Full pipeline for `config`, writing into `out`.
pub fn run_pipeline(config: PipelineConfig, out: impl Into<PathBuf>) -> Result<Manifest> {
    let stages = plan(&config);
    let ctx = Context::new(config, out)?;
    run_stages(&ctx, &stages)
}
