use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;
pub const DEFAULT_RESTARTS: usize = 50;

/// Raw k-means output before label canonicalization (labels are 0-based).
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: DMatrix<f64>,
    pub inertia: f64,
    pub iterations: usize,
}

fn dist2(x: &DMatrix<f64>, i: usize, c: &DMatrix<f64>, j: usize) -> f64 {
    x.row(i).iter().zip(c.row(j).iter()).map(|(a, b)| (a - b).powi(2)).sum()
}

fn plus_plus(x: &DMatrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let n = x.nrows();
    let mut c = DMatrix::zeros(k, x.ncols());
    c.set_row(0, &x.row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| dist2(x, i, &c, 0)).collect();
    for j in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if r < d {
                    pick = i;
                    break;
                }
                r -= d;
            }
            pick
        } else {
            rng.gen_range(0..n)
        };
        c.set_row(j, &x.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(dist2(x, i, &c, j));
        }
    }
    c
}

fn assign(x: &DMatrix<f64>, c: &DMatrix<f64>) -> (Vec<usize>, Vec<f64>) {
    (0..x.nrows())
        .map(|i| {
            let mut best = (0, f64::INFINITY);
            for j in 0..c.nrows() {
                let d = dist2(x, i, c, j);
                if d < best.1 {
                    best = (j, d);
                }
            }
            best
        })
        .unzip()
}

fn lloyd(x: &DMatrix<f64>, mut c: DMatrix<f64>) -> KMeansFit {
    let k = c.nrows();
    let (mut labels, mut d) = assign(x, &c);
    let mut inertia: f64 = d.iter().sum();
    let mut iterations = 0;
    while iterations < MAX_ITERATIONS {
        iterations += 1;
        let mut sums = DMatrix::zeros(k, x.ncols());
        let mut counts = vec![0usize; k];
        for (i, &l) in labels.iter().enumerate() {
            let mut row = sums.row_mut(l);
            row += x.row(i);
            counts[l] += 1;
        }
        for (j, &n) in counts.iter().enumerate() {
            if n > 0 {
                c.set_row(j, &(sums.row(j) / n as f64));
            } else {
                // re-seed from the point farthest from its centroid
                let far = (0..x.nrows()).max_by(|&a, &b| d[a].total_cmp(&d[b])).unwrap_or(0);
                c.set_row(j, &x.row(far));
                d[far] = 0.0;
            }
        }
        let (next, nd) = assign(x, &c);
        let next_inertia: f64 = nd.iter().sum();
        debug_assert!(next_inertia <= inertia * (1.0 + 1e-12) + 1e-12, "inertia increased");
        let done = next == labels;
        labels = next;
        d = nd;
        inertia = next_inertia;
        if done {
            break;
        }
    }
    KMeansFit { labels, centroids: c, inertia, iterations }
}

/// k-means++ seeding and Lloyd iterations with `restarts` independent
/// starts; the lowest inertia wins (ties go to the earliest restart).
pub fn kmeans_fit(x: &DMatrix<f64>, k: usize, restarts: usize, seed: u64) -> Result<KMeansFit> {
    if k == 0 || k > x.nrows() {
        return Err(Error::arg(format!("k = {k} must lie in 1..={}", x.nrows())));
    }
    let fits: Vec<KMeansFit> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            lloyd(x, plus_plus(x, k, &mut rng))
        })
        .collect();
    let mut best = 0;
    for (i, f) in fits.iter().enumerate() {
        if f.inertia < fits[best].inertia {
            best = i;
        }
    }
    Ok(fits.into_iter().nth(best).expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn clouds() -> (DMatrix<f64>, Vec<usize>) {
        let mut rows = Vec::new();
        let mut truth = Vec::new();
        for (c, s) in [(5.0, 0usize), (-5.0, 1)] {
            for i in 0..20u64 {
                let step = i + 20 * s as u64;
                rows.extend([c + crate::rng::normal_at(3, 2, step, 0), c + crate::rng::normal_at(3, 2, step, 1)]);
                truth.push(s);
            }
        }
        (DMatrix::from_row_slice(40, 2, &rows), truth)
    }

    #[test]
    fn separated_clouds() {
        let (x, truth) = clouds();
        let fit = kmeans_fit(&x, 2, 10, 7).unwrap();
        let flip = fit.labels[0] != truth[0];
        for (l, t) in fit.labels.iter().zip(&truth) {
            assert_eq!(if flip { 1 - l } else { *l }, *t);
        }
        // brute force: every point is nearest to its own centroid
        for i in 0..x.nrows() {
            let own = dist2(&x, i, &fit.centroids, fit.labels[i]);
            let other = dist2(&x, i, &fit.centroids, 1 - fit.labels[i]);
            assert!(own <= other);
        }
    }

    #[test]
    fn singletons_and_determinism() {
        let (x, _) = clouds();
        let fit = kmeans_fit(&x, x.nrows(), 3, 1).unwrap();
        assert!(fit.inertia.abs() < 1e-24);
        assert_eq!(kmeans_fit(&x, 3, 5, 11).unwrap(), kmeans_fit(&x, 3, 5, 11).unwrap());
        assert!(kmeans_fit(&x, 41, 1, 0).is_err());
    }
}
