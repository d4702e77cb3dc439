//! Per-event features, standardization, k-means and PCA.

pub mod features;
pub mod kmeans;

use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};

pub use features::{
    features_damping_forcing, features_topographic, FeatureRow, HiddenSource, DAMPING_FORCING_FEATURES,
    TOPOGRAPHIC_FEATURES,
};

use crate::io;
use crate::linalg;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub event_ids: Vec<usize>,
    pub feature_names: Vec<String>,
    /// Events × features.
    pub values: DMatrix<f64>,
    pub standardized: bool,
    /// Per event: some ratio feature had a zero denominator.
    pub degenerate: Vec<bool>,
    /// Per column: zero variance at standardization (column set to zeros).
    pub constant_columns: Vec<bool>,
}

impl FeatureMatrix {
    pub fn new(event_ids: Vec<usize>, names: &[&str], rows: Vec<FeatureRow>) -> Result<Self> {
        if event_ids.len() != rows.len() {
            return Err(Error::arg("one event id per feature row is required"));
        }
        let m = names.len();
        if rows.iter().any(|r| r.values.len() != m) {
            return Err(Error::arg("feature row length does not match the feature names"));
        }
        if rows.iter().any(|r| r.values.iter().any(|v| !v.is_finite())) {
            return Err(Error::arg("feature matrix contains non-finite values"));
        }
        let values = DMatrix::from_fn(rows.len(), m, |i, j| rows[i].values[j]);
        Ok(Self {
            event_ids,
            feature_names: names.iter().map(|s| s.to_string()).collect(),
            values,
            standardized: false,
            degenerate: rows.iter().map(|r| r.degenerate).collect(),
            constant_columns: vec![false; m],
        })
    }

    pub fn n_events(&self) -> usize {
        self.values.nrows()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut header = vec!["event_id".to_string()];
        header.extend(self.feature_names.iter().cloned());
        header.push("degenerate".into());
        let rows = (0..self.n_events()).map(|i| {
            let mut r = vec![self.event_ids[i].to_string()];
            r.extend(self.values.row(i).iter().map(|&v| io::fmt_f64(v)));
            r.push(u8::from(self.degenerate[i]).to_string());
            r
        });
        io::write_records(path, &header, rows)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let (header, rows) = io::read_records(path)?;
        let bad = |reason: &str| Error::Parse { path: path.to_path_buf(), reason: reason.into() };
        if header.len() < 2 || header[0] != "event_id" || header[header.len() - 1] != "degenerate" {
            return Err(bad("feature table header must start with event_id and end with degenerate"));
        }
        let names: Vec<&str> = header[1..header.len() - 1].iter().map(String::as_str).collect();
        let mut ids = Vec::new();
        let mut out = Vec::new();
        for r in &rows {
            ids.push(r[0].parse().map_err(|_| bad("bad event id"))?);
            let values = r[1..r.len() - 1].iter().map(|v| v.parse::<f64>()).collect::<std::result::Result<_, _>>();
            out.push(FeatureRow {
                values: values.map_err(|_| bad("bad feature value"))?,
                degenerate: r[r.len() - 1] == "1",
            });
        }
        Self::new(ids, &names, out)
    }
}

/// Per-column z-score with population variance; constant columns become zeros.
pub fn standardize(fm: &FeatureMatrix) -> Result<FeatureMatrix> {
    let n = fm.n_events();
    if n < 2 {
        return Err(Error::arg("standardization needs at least two events"));
    }
    let mut out = fm.clone();
    for j in 0..fm.values.ncols() {
        let col = fm.values.column(j);
        let mean = col.sum() / n as f64;
        let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
        let sd = var.sqrt();
        let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        if !(sd > 1e-14 * scale.max(f64::MIN_POSITIVE)) {
            out.values.column_mut(j).fill(0.0);
            out.constant_columns[j] = true;
        } else {
            for i in 0..n {
                out.values[(i, j)] = (fm.values[(i, j)] - mean) / sd;
            }
        }
    }
    out.standardized = true;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// Events × components.
    pub coords: DMatrix<f64>,
    /// Features × components; each column's largest entry is positive.
    pub loadings: DMatrix<f64>,
    /// Covariance eigenvalues of the retained components, descending.
    pub variances: Vec<f64>,
}

/// Projection onto the leading eigenvectors of the population feature covariance.
pub fn pca_project(fm: &FeatureMatrix, n_components: usize) -> Result<Pca> {
    let (n, m) = fm.values.shape();
    if n < n_components || m < n_components {
        return Err(Error::arg("not enough events or features for the requested components"));
    }
    let means = DMatrix::from_fn(1, m, |_, j| fm.values.column(j).mean());
    let centered = DMatrix::from_fn(n, m, |i, j| fm.values[(i, j)] - means[(0, j)]);
    let cov = linalg::symmetrize(&(centered.transpose() * &centered / n as f64));
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut loadings = DMatrix::zeros(m, n_components);
    for (c, &i) in order.iter().take(n_components).enumerate() {
        let v = linalg::canonical_sign(eig.eigenvectors.column(i).into_owned());
        loadings.set_column(c, &v);
    }
    Ok(Pca {
        coords: &centered * &loadings,
        loadings,
        variances: order.iter().take(n_components).map(|&i| eig.eigenvalues[i].max(0.0)).collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterResult {
    /// 1-based labels, ordered by ascending mean of the key column.
    pub labels: Vec<usize>,
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
    pub pca_coords: DMatrix<f64>,
    pub seed: u64,
}

impl ClusterResult {
    pub fn write_csv(&self, path: &Path, event_ids: &[usize]) -> Result<()> {
        let header: Vec<String> = ["event_id", "label", "pc1", "pc2"].iter().map(|s| s.to_string()).collect();
        let rows = self.labels.iter().enumerate().map(|(i, l)| {
            let pc = |c: usize| if c < self.pca_coords.ncols() { self.pca_coords[(i, c)] } else { 0.0 };
            vec![event_ids[i].to_string(), l.to_string(), io::fmt_f64(pc(0)), io::fmt_f64(pc(1))]
        });
        io::write_records(path, &header, rows)
    }
}

/// k-means with labels canonicalized by the mean of column 0, the signed
/// peak amplitude in both feature sets.
pub fn kmeans(fm: &FeatureMatrix, k: usize, restarts: usize, seed: u64) -> Result<ClusterResult> {
    let key: Vec<f64> = fm.values.column(0).iter().copied().collect();
    kmeans_keyed(fm, k, restarts, seed, &key)
}

pub fn kmeans_keyed(fm: &FeatureMatrix, k: usize, restarts: usize, seed: u64, key: &[f64]) -> Result<ClusterResult> {
    if key.len() != fm.n_events() {
        return Err(Error::arg("one ordering key per event is required"));
    }
    let fit = kmeans::kmeans_fit(&fm.values, k, restarts, seed)?;
    let stats: Vec<(f64, usize)> = (0..k)
        .map(|c| {
            let members: Vec<usize> = (0..fit.labels.len()).filter(|&i| fit.labels[i] == c).collect();
            let mean = if members.is_empty() {
                f64::INFINITY
            } else {
                members.iter().map(|&i| key[i]).sum::<f64>() / members.len() as f64
            };
            (mean, members.first().copied().unwrap_or(usize::MAX))
        })
        .collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| stats[a].0.total_cmp(&stats[b].0).then(stats[a].1.cmp(&stats[b].1)));
    let mut rank = vec![0; k];
    for (r, &c) in order.iter().enumerate() {
        rank[c] = r;
    }
    let mut centroids = DMatrix::zeros(k, fm.values.ncols());
    for (c, &r) in rank.iter().enumerate() {
        centroids.set_row(r, &fit.centroids.row(c));
    }
    let pca_coords = pca_project(fm, 2.min(fm.values.ncols()).min(fm.n_events()))?.coords;
    Ok(ClusterResult {
        labels: fit.labels.iter().map(|&l| rank[l] + 1).collect(),
        centroids,
        inertia: fit.inertia,
        pca_coords,
        seed,
    })
}

/// Adjusted Rand index between two labelings of the same events.
pub fn adjusted_rand_index(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    use std::collections::HashMap;
    let mut table: HashMap<(usize, usize), u64> = HashMap::new();
    let mut ra: HashMap<usize, u64> = HashMap::new();
    let mut rb: HashMap<usize, u64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *ra.entry(x).or_default() += 1;
        *rb.entry(y).or_default() += 1;
    }
    let c2 = |n: u64| (n * n.saturating_sub(1)) as f64 / 2.0;
    let index: f64 = table.values().map(|&n| c2(n)).sum();
    let sa: f64 = ra.values().map(|&n| c2(n)).sum();
    let sb: f64 = rb.values().map(|&n| c2(n)).sum();
    let total = c2(a.len() as u64);
    let expected = if total > 0.0 { sa * sb / total } else { 0.0 };
    let max = 0.5 * (sa + sb);
    if (max - expected).abs() < 1e-12 {
        return 1.0;
    }
    (index - expected) / (max - expected)
}
