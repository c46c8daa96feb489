use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;

use crate::error::{Error, Result};

/// Result of Lloyd's algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct Centroids {
    pub points: Array2<f64>,
    /// Rows assigned to each centroid at the final assignment.
    pub counts: Vec<usize>,
    /// Within-cluster sum of squares after every assignment step.
    pub distortion: Vec<f64>,
}

impl Centroids {
    pub fn k(&self) -> usize {
        self.points.nrows()
    }

    pub fn nearest(&self, x: ArrayView1<f64>) -> usize {
        nearest(&self.points, x).0
    }
}

fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &Array2<f64>, x: ArrayView1<f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.rows().into_iter().enumerate() {
        let d = sq_dist(c, x);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

/// k-means++ seeding: first centre uniform, then proportional to squared distance.
fn seed_plus_plus<R: Rng + ?Sized>(data: ArrayView2<f64>, k: usize, rng: &mut R) -> Array2<f64> {
    let n = data.nrows();
    let mut centres = Array2::zeros((k, data.ncols()));
    centres.row_mut(0).assign(&data.row(rng.gen_range(0..n)));
    let mut d2: Vec<f64> = data.rows().into_iter().map(|r| sq_dist(r, centres.row(0))).collect();
    for c in 1..k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.gen::<f64>() * total;
            let mut idx = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if u < w {
                    idx = i;
                    break;
                }
                u -= w;
            }
            idx
        } else {
            rng.gen_range(0..n)
        };
        centres.row_mut(c).assign(&data.row(pick));
        for (i, r) in data.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(r, centres.row(c)));
        }
    }
    centres
}

/// Lloyd's iterations from k-means++ seeds until assignments stop changing
/// or `max_iter` is reached. Empty clusters are re-seeded at the point
/// farthest from its current centroid.
pub fn kmeans_fit<R: Rng + ?Sized>(data: ArrayView2<f64>, k: usize, max_iter: usize, rng: &mut R) -> Result<Centroids> {
    let n = data.nrows();
    if k == 0 {
        return Err(Error::config("baseline.clusters", "need at least one cluster"));
    }
    if n < k {
        return Err(Error::config("baseline.clusters", format!("{k} clusters for {n} points")));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("k-means input contains non-finite values".into()));
    }
    let d = data.ncols();
    let mut centres = seed_plus_plus(data, k, rng);
    let mut assign = vec![usize::MAX; n];
    let mut dist = vec![0.0; n];
    let mut history = Vec::new();
    for _ in 0..max_iter.max(1) {
        let mut changed = false;
        for (i, r) in data.rows().into_iter().enumerate() {
            let (j, d2) = nearest(&centres, r);
            if assign[i] != j {
                changed = true;
                assign[i] = j;
            }
            dist[i] = d2;
        }
        history.push(dist.iter().sum());
        if !changed {
            break;
        }
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0usize; k];
        for (i, r) in data.rows().into_iter().enumerate() {
            let mut s = sums.row_mut(assign[i]);
            s += &r;
            counts[assign[i]] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                let mean = &sums.row(j) / counts[j] as f64;
                centres.row_mut(j).assign(&mean);
            } else {
                let far = (0..n)
                    .max_by(|&a, &b| dist[a].total_cmp(&dist[b]).then(b.cmp(&a)))
                    .expect("n >= 1");
                centres.row_mut(j).assign(&data.row(far));
                dist[far] = 0.0;
            }
        }
    }
    let mut counts = vec![0usize; k];
    for (i, r) in data.rows().into_iter().enumerate() {
        let j = nearest(&centres, r).0;
        assign[i] = j;
        counts[j] += 1;
    }
    Ok(Centroids {
        points: centres,
        counts,
        distortion: history,
    })
}
