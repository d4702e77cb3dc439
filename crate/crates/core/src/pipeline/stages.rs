use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{BuiltModel, Conditioning, Example, HiddenSourceKind, PipelineConfig};
use crate::assimilate::{self, BackwardOperators, BeliefPath};
use crate::clusterkit::{self, FeatureMatrix, FeatureRow, HiddenSource};
use crate::eventstats::mixture::{decorrelation_stride, select_strided};
use crate::eventstats::sensitivity::{best_cov_direction, direction_angle, StartOutcome};
use crate::eventstats::{self, EventRecord, EventRow, MomentLabel, MomentRecord, SeriesStatistics};
use crate::infodiag::{self, KlSeries};
use crate::io;
use crate::models::{demote, CgnsModel};
use crate::pathways::{self, EventRef};
use crate::simulate::{self, sidecar_path, Trajectory};
use crate::{Error, Result};

/// File layout under the output directory.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }
    fn p(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.root.join(rel)
    }
    pub fn config(&self) -> PathBuf {
        self.p("config.json")
    }
    pub fn model(&self) -> PathBuf {
        self.p("model.json")
    }
    pub fn manifest(&self) -> PathBuf {
        self.p("manifest.json")
    }
    pub fn trajectory(&self, i: usize) -> PathBuf {
        self.p(format!("trajectories/member_{i:04}.csv"))
    }
    pub fn filter(&self, i: usize) -> PathBuf {
        self.p(format!("beliefs/filter_{i:04}.csv"))
    }
    pub fn smoother(&self, i: usize) -> PathBuf {
        self.p(format!("beliefs/smoother_{i:04}.csv"))
    }
    pub fn kl(&self, i: usize) -> PathBuf {
        self.p(format!("diagnostics/kl_{i:04}.csv"))
    }
    pub fn influence(&self, i: usize) -> PathBuf {
        self.p(format!("diagnostics/influence_{i:04}.csv"))
    }
    pub fn events_csv(&self) -> PathBuf {
        self.p("events/events.csv")
    }
    pub fn events_json(&self) -> PathBuf {
        self.p("events/events.json")
    }
    pub fn statistics(&self) -> PathBuf {
        self.p("events/statistics.json")
    }
    pub fn moments(&self) -> PathBuf {
        self.p("events/moments.json")
    }
    pub fn directions(&self) -> PathBuf {
        self.p("events/directions.json")
    }
    pub fn representative(&self) -> PathBuf {
        self.p("pathways/representative_path.csv")
    }
    pub fn weights(&self) -> PathBuf {
        self.p("pathways/path_weights.csv")
    }
    pub fn alignment(&self) -> PathBuf {
        self.p("pathways/alignment.json")
    }
    pub fn features(&self) -> PathBuf {
        self.p("cluster/features.csv")
    }
    pub fn clusters(&self) -> PathBuf {
        self.p("cluster/clusters.csv")
    }
    pub fn cluster_summary(&self) -> PathBuf {
        self.p("cluster/summary.json")
    }
    pub fn report(&self) -> PathBuf {
        self.p("report/report.json")
    }
    pub fn figure(&self, name: &str) -> PathBuf {
        self.p(format!("report/{name}.csv"))
    }
}

pub struct Context {
    pub config: PipelineConfig,
    pub layout: Layout,
    pub model: BuiltModel,
    pub model_hash: String,
}

impl Context {
    pub fn new(config: PipelineConfig, out: impl Into<PathBuf>) -> Result<Self> {
        config.validate()?;
        let model = config.build_model()?;
        let model_hash = config.model_hash()?;
        Ok(Self { config, layout: Layout::new(out), model, model_hash })
    }

    fn example(&self) -> Example {
        self.config.model.example
    }

    fn members(&self) -> usize {
        self.config.simulate.ensemble
    }

    fn cgns(&self, stage: &str) -> Result<&dyn CgnsModel> {
        match &self.model {
            BuiltModel::Cgns(m) => Ok(m.as_ref()),
            BuiltModel::Topographic(_) => {
                Err(Error::UnsupportedStage { stage: stage.into(), model: self.example().name().into() })
            }
        }
    }

    pub fn trajectories(&self) -> Result<Vec<Trajectory>> {
        (0..self.members()).into_par_iter().map(|i| Trajectory::read_csv(&self.layout.trajectory(i))).collect()
    }

    fn beliefs(&self, path: impl Fn(usize) -> PathBuf + Sync) -> Result<Vec<BeliefPath>> {
        (0..self.members())
            .into_par_iter()
            .map(|i| {
                let p = path(i);
                if !p.exists() {
                    return Err(Error::Dependency(p));
                }
                BeliefPath::read_csv(&p)
            })
            .collect()
    }

    pub fn filters(&self) -> Result<Vec<BeliefPath>> {
        self.beliefs(|i| self.layout.filter(i))
    }

    pub fn smoothers(&self) -> Result<Vec<BeliefPath>> {
        self.beliefs(|i| self.layout.smoother(i))
    }

    pub fn stored_events(&self) -> Result<Vec<StoredEvent>> {
        io::read_json(&self.layout.events_json())
    }
}

pub fn simulate(ctx: &Context) -> Result<()> {
    let s = &ctx.config.simulate;
    let (nx, ny) = ctx.model.dims();
    let x0 = s.x0.clone().unwrap_or_else(|| vec![0.0; nx]);
    let y0 = s.y0.clone().unwrap_or_else(|| vec![0.0; ny]);
    if x0.len() != nx || y0.len() != ny {
        return Err(Error::config(format!("initial state must have {nx} observed and {ny} hidden components")));
    }
    let init = |_: usize, _: u64| (x0.clone(), y0.clone());
    let trajs = match &ctx.model {
        BuiltModel::Cgns(m) => {
            simulate::generate_ensemble(&demote(m.as_ref()), init, s.dt, s.n_steps, s.ensemble, s.seed)?
        }
        BuiltModel::Topographic(m) => simulate::generate_ensemble(m, init, s.dt, s.n_steps, s.ensemble, s.seed)?,
    };
    io::write_json(&ctx.layout.config(), &ctx.config)?;
    io::write_json(
        &ctx.layout.model(),
        &serde_json::json!({ "example": ctx.example(), "params": ctx.config.resolved_params()?, "hash": ctx.model_hash }),
    )?;
    for (i, t) in trajs.iter().enumerate() {
        let t = simulate::burn_in(t, s.burn_in)?;
        let path = ctx.layout.trajectory(i);
        t.write_csv(&path)?;
        t.meta(&ctx.model_hash).write(&sidecar_path(&path))?;
    }
    Ok(())
}

pub fn assimilate(ctx: &Context) -> Result<()> {
    let model = ctx.cgns("assimilate")?;
    let trajs = ctx.trajectories()?;
    let paths: Vec<(BeliefPath, BeliefPath)> = trajs
        .par_iter()
        .map(|t| {
            let f = assimilate::filter(model, t)?;
            let s = assimilate::smooth(model, t, &f)?;
            Ok((f, s))
        })
        .collect::<Result<_>>()?;
    for (i, (f, s)) in paths.iter().enumerate() {
        f.write_csv(&ctx.layout.filter(i))?;
        s.write_csv(&ctx.layout.smoother(i))?;
    }
    Ok(())
}

pub fn diagnose(ctx: &Context) -> Result<()> {
    let model = ctx.cgns("diagnose")?;
    let d = ctx
        .config
        .diagnostics
        .clone()
        .ok_or_else(|| Error::config("the diagnose stage needs a `diagnostics` block"))?;
    let filters = ctx.filters()?;
    let smoothers = ctx.smoothers()?;
    let trajs = ctx.trajectories()?;
    for i in 0..ctx.members() {
        let kl = infodiag::kl_series_filter_smoother(&smoothers[i], &filters[i])?;
        kl.write_csv(&ctx.layout.kl(i))?;
        let ops = BackwardOperators::new(model, &trajs[i], &filters[i])?;
        let idx: Vec<usize> = (0..filters[i].len()).step_by(d.influence_stride).collect();
        let rows: Vec<Vec<f64>> = idx
            .par_iter()
            .map(|&n| {
                let p = infodiag::influence_profile_with(
                    &ops,
                    &filters[i],
                    &smoothers[i],
                    n,
                    d.lag_stride,
                    Some(d.max_lag),
                )?;
                Ok(vec![p.t, p.integrated_range, p.kl_at_zero])
            })
            .collect::<Result<_>>()?;
        let header: Vec<String> = ["t", "influence_T", "kl"].iter().map(|s| s.to_string()).collect();
        io::write_table(&ctx.layout.influence(i), &header, rows)?;
    }
    Ok(())
}

/// Event record with its ensemble member and per-event diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredEvent {
    pub event_id: usize,
    pub member: usize,
    pub record: EventRecord,
    pub t_on: Option<f64>,
    pub onset_index: Option<usize>,
    pub precursor_detected: Option<bool>,
    pub influence_t: Option<f64>,
}

/// Pooled statistics of the observed series plus Monte Carlo estimates of
/// the hidden moments at the last grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Statistics {
    pub observed: SeriesStatistics,
    pub n_events: usize,
    pub n_positive: usize,
    pub n_negative: usize,
    pub hidden_mc: Vec<HiddenMc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenMc {
    pub component: usize,
    pub mean: eventstats::McEstimate,
    pub second_moment: eventstats::McEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub stride: usize,
    pub n_unconditional: usize,
    pub n_event: usize,
    pub conditioning: Conditioning,
    pub unconditional: MomentRecord,
    pub event_conditioned: Option<MomentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Directions {
    pub mean_shift: Option<Vec<f64>>,
    pub mean_shift_score: Option<f64>,
    pub covariance: Vec<(f64, Vec<f64>)>,
    pub covariance_best_score: f64,
    pub full: Vec<f64>,
    pub full_score: f64,
    pub starts: Vec<StartOutcome>,
    /// Angle between the smoother- and filter-based full directions.
    pub filter_angle: Option<f64>,
}

pub fn events(ctx: &Context) -> Result<()> {
    let cfg = &ctx.config;
    let spec = cfg.events.threshold();
    let min_sep = cfg.events.min_separation(ctx.example());
    let trajs = ctx.trajectories()?;

    let mut stored = Vec::new();
    for (m, t) in trajs.iter().enumerate() {
        let series = t.obs_series(0);
        for r in eventstats::detect_events_with(&series, &spec, min_sep, t.dt, t.t0, (1.5, 1.5))? {
            stored.push(StoredEvent {
                event_id: stored.len(),
                member: m,
                record: r,
                t_on: None,
                onset_index: None,
                precursor_detected: None,
                influence_t: None,
            });
        }
    }

    let mut hidden_mc = Vec::new();
    if let BuiltModel::Cgns(model) = &ctx.model {
        let filters = ctx.filters()?;
        let smoothers = ctx.smoothers()?;
        if let Some(d) = &cfg.diagnostics {
            let kls: Vec<KlSeries> =
                (0..ctx.members()).map(|i| KlSeries::read_csv(&ctx.layout.kl(i))).collect::<Result<_>>()?;
            let ops: Vec<BackwardOperators> = trajs
                .par_iter()
                .zip(&filters)
                .map(|(t, f)| BackwardOperators::new(model.as_ref(), t, f))
                .collect::<Result<_>>()?;
            stored.par_iter_mut().try_for_each(|e| -> Result<()> {
                let m = e.member;
                match infodiag::onset_time(&kls[m], d.kappa, d.t_pre, e.record.peak_time) {
                    Ok(on) => {
                        let p = infodiag::influence_profile_with(
                            &ops[m],
                            &filters[m],
                            &smoothers[m],
                            on.index,
                            d.lag_stride,
                            Some(d.max_lag),
                        )?;
                        e.t_on = Some(on.t_on);
                        e.onset_index = Some(on.index);
                        e.precursor_detected = Some(on.precursor_detected);
                        e.influence_t = Some(p.integrated_range);
                    }
                    // onset window leaves the record: no onset for this event
                    Err(Error::Argument(_)) => {}
                    Err(other) => return Err(other),
                }
                Ok(())
            })?;
        }
        write_moments(ctx, &trajs, &filters, &smoothers, &stored)?;
        let last = trajs.iter().map(Trajectory::len).min().unwrap_or(1) - 1;
        for j in 0..model.dim_hidden() {
            let mean = eventstats::monte_carlo_estimate(
                &smoothers,
                &[],
                &eventstats::Functional::Polynomial { component: j, degree: 1 },
                last,
            )?;
            let second = eventstats::monte_carlo_estimate(
                &smoothers,
                &[],
                &eventstats::Functional::Polynomial { component: j, degree: 2 },
                last,
            )?;
            hidden_mc.push(HiddenMc { component: j, mean, second_moment: second });
        }
    }

    let pooled: Vec<f64> = trajs.iter().flat_map(|t| t.obs_series(0)).collect();
    let stats = Statistics {
        observed: eventstats::series_statistics(&pooled, trajs[0].dt)?,
        n_events: stored.len(),
        n_positive: stored.iter().filter(|e| e.record.sign > 0).count(),
        n_negative: stored.iter().filter(|e| e.record.sign < 0).count(),
        hidden_mc,
    };
    io::write_json(&ctx.layout.statistics(), &stats)?;
    io::write_json(&ctx.layout.events_json(), &stored)?;
    let rows: Vec<EventRow> = stored
        .iter()
        .map(|e| EventRow {
            event: e.record.clone(),
            t_on: e.t_on.unwrap_or(f64::NAN),
            influence_t: e.influence_t.unwrap_or(f64::NAN),
        })
        .collect();
    eventstats::write_event_table(&ctx.layout.events_csv(), &rows)
}

fn write_moments(
    ctx: &Context,
    trajs: &[Trajectory],
    filters: &[BeliefPath],
    smoothers: &[BeliefPath],
    stored: &[StoredEvent],
) -> Result<()> {
    let dt = trajs[0].dt;
    let stride = decorrelation_stride(&trajs[0].obs_series(0), dt);
    let uncond_sel = select_strided(smoothers, 0, stride);
    let uncond =
        eventstats::mixture_moments(&eventstats::build_mixture(smoothers, &uncond_sel)?, MomentLabel::Unconditional);
    let offset = (ctx.config.events.offset / dt).round() as i64;
    let event_sel: Vec<(usize, usize)> = stored
        .iter()
        .filter_map(|e| {
            let i = e.record.peak_index as i64 + offset;
            (i >= 0 && (i as usize) < smoothers[e.member].len()).then_some((e.member, i as usize))
        })
        .collect();
    let conditioning = ctx.config.events.conditioning;
    let event_moments = |paths: &[BeliefPath]| -> Result<Option<eventstats::MomentPair>> {
        if event_sel.is_empty() {
            return Ok(None);
        }
        Ok(Some(eventstats::mixture_moments(
            &eventstats::build_mixture(paths, &event_sel)?,
            MomentLabel::EventConditioned,
        )))
    };
    let (primary, other) = match conditioning {
        Conditioning::Smoother => (smoothers, filters),
        Conditioning::Filter => (filters, smoothers),
    };
    let event = event_moments(primary)?;
    io::write_json(
        &ctx.layout.moments(),
        &Moments {
            stride,
            n_unconditional: uncond_sel.len(),
            n_event: event_sel.len(),
            conditioning,
            unconditional: MomentRecord::from(&uncond),
            event_conditioned: event.as_ref().map(MomentRecord::from),
        },
    )?;

    let Some(event) = event else {
        return Ok(());
    };
    let mean = match eventstats::sensitive_direction_mean(&uncond, &event) {
        Ok(v) => Some(v),
        Err(Error::DegenerateDirection(_)) => None,
        Err(e) => return Err(e),
    };
    let cov = eventstats::sensitive_direction_cov(&uncond, &event)?;
    let (cov_best, _) = best_cov_direction(&uncond, &event)?;
    let full = eventstats::sensitive_direction_full(&uncond, &event, eventstats::sensitivity::DEFAULT_TOL)?;
    let filter_angle = match event_moments(other)? {
        Some(alt) => eventstats::sensitive_direction_full(&uncond, &alt, eventstats::sensitivity::DEFAULT_TOL)
            .ok()
            .map(|d| direction_angle(&d.vector, &full.vector)),
        None => None,
    };
    let vecf = |v: &nalgebra::DVector<f64>| v.iter().copied().collect::<Vec<f64>>();
    io::write_json(
        &ctx.layout.directions(),
        &Directions {
            mean_shift_score: mean.as_ref().map(|v| eventstats::sensitivity_score(v, &uncond, &event)).transpose()?,
            mean_shift: mean.as_ref().map(vecf),
            covariance: cov.iter().map(|(l, v)| (*l, vecf(v))).collect(),
            covariance_best_score: cov_best,
            full: vecf(&full.vector),
            full_score: full.score,
            starts: full.starts,
            filter_angle,
        },
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    pub anchor: pathways::Anchor,
    pub window_pre: f64,
    pub window_post: f64,
    pub aligned: Vec<usize>,
    pub dropped: Vec<(usize, String)>,
    pub j: Vec<f64>,
    pub weights: Vec<f64>,
}

pub fn pathways_stage(ctx: &Context) -> Result<()> {
    ctx.cgns("pathways")?;
    let d = ctx
        .config
        .diagnostics
        .clone()
        .ok_or_else(|| Error::config("the pathways stage needs a `diagnostics` block"))?;
    let stored = ctx.stored_events()?;
    let smoothers = ctx.smoothers()?;
    let trajs = ctx.trajectories()?;
    let refs: Vec<EventRef> = stored
        .iter()
        .map(|e| EventRef {
            event_id: e.event_id,
            member: e.member,
            peak_index: e.record.peak_index,
            onset_index: e.onset_index,
        })
        .collect();
    let (wp, wq) = d.windows(ctx.example());
    let al = pathways::align_events(&refs, &smoothers, &trajs, wp, wq, d.anchor)?;
    let mut report = AlignmentReport {
        anchor: d.anchor,
        window_pre: wp,
        window_post: wq,
        aligned: al.paths.iter().map(|p| p.event_id).collect(),
        dropped: al.dropped.clone(),
        j: Vec::new(),
        weights: Vec::new(),
    };
    if !al.paths.is_empty() {
        let w = pathways::path_weights(&al.paths, d.uncertainty)?;
        let rep = pathways::representative_path(&al.paths, &w.weights)?;
        rep.write_csv(&ctx.layout.representative())?;
        pathways::write_weight_table(&ctx.layout.weights(), &al.paths, &w)?;
        report.j = w.j;
        report.weights = w.weights;
    }
    io::write_json(&ctx.layout.alignment(), &report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSummary {
    pub k: usize,
    pub seed: u64,
    pub restarts: usize,
    pub inertia: f64,
    pub n_events: usize,
    pub excluded: Vec<(usize, String)>,
    pub constant_columns: Vec<String>,
    pub sizes: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Per-cluster means of the raw (unstandardized) features.
    pub cluster_means: Vec<Vec<f64>>,
    pub pca_variances: Vec<f64>,
}

pub fn cluster(ctx: &Context) -> Result<()> {
    let c = ctx.config.cluster.clone().ok_or_else(|| Error::config("the cluster stage needs a `cluster` block"))?;
    let stored = ctx.stored_events()?;
    let trajs = ctx.trajectories()?;
    let smoothers = match c.hidden_source {
        HiddenSourceKind::Smoother => Some(ctx.smoothers()?),
        HiddenSourceKind::Truth => None,
    };
    let (names, rows): (&[&str], Vec<std::result::Result<FeatureRow, String>>) = match (&ctx.model, ctx.example()) {
        (BuiltModel::Cgns(_), Example::DampingForcing) => {
            let params = ctx.config.damping_forcing_params()?;
            let rows = stored
                .par_iter()
                .map(|e| {
                    let src = match &smoothers {
                        Some(s) => HiddenSource::SmootherMean(&s[e.member]),
                        None => HiddenSource::Truth,
                    };
                    clusterkit::features_damping_forcing(&e.record, &trajs[e.member], &params, src)
                })
                .collect();
            (&clusterkit::DAMPING_FORCING_FEATURES, rows)
        }
        (BuiltModel::Topographic(m), _) => {
            let rows =
                stored.par_iter().map(|e| clusterkit::features_topographic(&e.record, &trajs[e.member], m)).collect();
            (&clusterkit::TOPOGRAPHIC_FEATURES, rows)
        }
        _ => return Err(Error::UnsupportedStage { stage: "cluster".into(), model: ctx.example().name().into() }),
    };
    let mut ids = Vec::new();
    let mut kept = Vec::new();
    let mut excluded = Vec::new();
    for (e, r) in stored.iter().zip(rows) {
        match r {
            Ok(r) => {
                ids.push(e.event_id);
                kept.push(r);
            }
            Err(why) => excluded.push((e.event_id, why)),
        }
    }
    let fm = FeatureMatrix::new(ids, names, kept)?;
    fm.write_csv(&ctx.layout.features())?;
    if fm.n_events() < c.k.max(2) {
        return Err(Error::arg(format!("{} usable events cannot form {} clusters", fm.n_events(), c.k)));
    }
    let z = clusterkit::standardize(&fm)?;
    let key: Vec<f64> = fm.values.column(0).iter().copied().collect();
    let res = clusterkit::kmeans_keyed(&z, c.k, c.restarts, c.seed, &key)?;
    res.write_csv(&ctx.layout.clusters(), &fm.event_ids)?;
    let pca = clusterkit::pca_project(&z, 2.min(z.values.ncols()))?;
    let sizes: Vec<usize> = (1..=c.k).map(|l| res.labels.iter().filter(|&&x| x == l).count()).collect();
    let cluster_means = (1..=c.k)
        .map(|l| {
            let members: Vec<usize> = (0..res.labels.len()).filter(|&i| res.labels[i] == l).collect();
            (0..fm.values.ncols())
                .map(|j| members.iter().map(|&i| fm.values[(i, j)]).sum::<f64>() / members.len().max(1) as f64)
                .collect()
        })
        .collect();
    io::write_json(
        &ctx.layout.cluster_summary(),
        &ClusterSummary {
            k: c.k,
            seed: c.seed,
            restarts: c.restarts,
            inertia: res.inertia,
            n_events: fm.n_events(),
            excluded,
            constant_columns: z
                .constant_columns
                .iter()
                .zip(&z.feature_names)
                .filter(|(f, _)| **f)
                .map(|(_, n)| n.clone())
                .collect(),
            sizes,
            feature_names: fm.feature_names.clone(),
            cluster_means,
            pca_variances: pca.variances,
        },
    )
}
