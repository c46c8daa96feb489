//! Distribution-similarity metrics: exact optimal transport, 1-D histogram
//! Wasserstein, Density & Coverage, and claw containment rates.

mod coverage;
mod report;
mod simplex;

pub use coverage::{density_coverage, knn_radii, DcResult};
pub use report::{MetricRecord, MetricReport};
pub use simplex::{transport, TransportPlan};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;

use crate::envs::{in_region, ClawScene};
use crate::error::{Error, Result};
use crate::rng::seeded;

/// Default cap on points per side before `emd` subsamples.
pub const EMD_POINT_CAP: usize = 2000;

/// Weighted point cloud. Weights are non-negative and sum to one.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalDistribution {
    points: Array2<f64>,
    weights: Array1<f64>,
}

impl EmpiricalDistribution {
    pub fn uniform(points: Array2<f64>) -> Result<Self> {
        let n = points.nrows();
        if n == 0 {
            return Err(Error::Shape("empirical distribution needs at least one point".into()));
        }
        Self::weighted(points, Array1::from_elem(n, 1.0 / n as f64))
    }

    pub fn weighted(points: Array2<f64>, weights: Array1<f64>) -> Result<Self> {
        if points.nrows() != weights.len() {
            return Err(Error::Shape(format!("{} points but {} weights", points.nrows(), weights.len())));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("non-finite point".into()));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain("weights must be finite and non-negative".into()));
        }
        let total: f64 = weights.sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { points, weights })
    }

    pub fn len(&self) -> usize {
        self.points.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> ArrayView2<'_, f64> {
        self.points.view()
    }

    pub fn weights(&self) -> ArrayView1<'_, f64> {
        self.weights.view()
    }

    /// Keeps `cap` points drawn without replacement, renormalising weights.
    pub fn subsample<R: Rng + ?Sized>(&self, cap: usize, rng: &mut R) -> Result<Self> {
        if self.len() <= cap {
            return Ok(self.clone());
        }
        let mut idx = rand::seq::index::sample(rng, self.len(), cap).into_vec();
        idx.sort_unstable();
        let pts = self.points.select(Axis(0), &idx);
        let w = self.weights.select(Axis(0), &idx);
        let total = w.sum();
        if total <= 0.0 {
            return Err(Error::Domain("subsample kept only zero-weight points".into()));
        }
        let mut w = w / total;
        // Fold rounding drift into the largest weight so the sum check holds.
        let drift = 1.0 - w.sum();
        if let Some(i) = crate::samplers::argmax_first(w.as_slice().expect("contiguous")) {
            w[i] += drift;
        }
        Self::weighted(pts, w)
    }
}

fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Seed used by [`emd`] when a side exceeds the point cap.
pub const EMD_DEFAULT_SEED: u64 = 0;

/// Exact earth mover's distance under the Euclidean ground cost. Inputs above
/// `EMD_POINT_CAP` points are subsampled with a fixed seed.
pub fn emd(p: &EmpiricalDistribution, q: &EmpiricalDistribution) -> Result<f64> {
    emd_capped(p, q, EMD_POINT_CAP, EMD_DEFAULT_SEED)
}

/// As [`emd`] with an explicit cap and subsampling seed. Each side is
/// subsampled from a fresh generator, so identical inputs keep identical
/// subsets.
pub fn emd_capped(p: &EmpiricalDistribution, q: &EmpiricalDistribution, cap: usize, seed: u64) -> Result<f64> {
    if p.dim() != q.dim() {
        return Err(Error::Shape(format!("dimension mismatch: {} vs {}", p.dim(), q.dim())));
    }
    let p = p.subsample(cap, &mut seeded(seed))?;
    let q = q.subsample(cap, &mut seeded(seed))?;
    let mut cost = Vec::with_capacity(p.len() * q.len());
    for a in p.points.rows() {
        for b in q.points.rows() {
            cost.push(euclidean(a, b));
        }
    }
    let plan = transport(
        p.weights.as_slice().expect("contiguous"),
        q.weights.as_slice().expect("contiguous"),
        &cost,
    );
    Ok(plan.cost)
}

fn check_histogram(h: &[f64]) -> Result<()> {
    if h.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain("histogram entries must be finite and non-negative".into()));
    }
    let total: f64 = h.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Domain(format!("histogram sums to {total}")));
    }
    Ok(())
}

/// 1-D Wasserstein distance between histograms over equally spaced ordered bins.
pub fn wasserstein_1d(h1: &[f64], h2: &[f64], spacing: f64) -> Result<f64> {
    if h1.len() != h2.len() {
        return Err(Error::Shape(format!("{} bins vs {} bins", h1.len(), h2.len())));
    }
    check_histogram(h1)?;
    check_histogram(h2)?;
    let mut gap = 0.0;
    let mut total = 0.0;
    for (a, b) in h1.iter().zip(h2).take(h1.len().saturating_sub(1)) {
        gap += a - b;
        total += gap.abs();
    }
    Ok(total * spacing)
}

/// Total variation distance for unordered categories.
pub fn total_variation(h1: &[f64], h2: &[f64]) -> Result<f64> {
    if h1.len() != h2.len() {
        return Err(Error::Shape(format!("{} bins vs {} bins", h1.len(), h2.len())));
    }
    check_histogram(h1)?;
    check_histogram(h2)?;
    Ok(0.5 * h1.iter().zip(h2).map(|(a, b)| (a - b).abs()).sum::<f64>())
}

fn point2(a: ArrayView1<f64>) -> Result<[f64; 2]> {
    if a.len() != 2 {
        return Err(Error::Shape(format!("claw actions are 2-D, got {}", a.len())));
    }
    Ok([a[0], a[1]])
}

/// Fraction of actions inside a region of their scene.
pub fn in_distribution_rate(scenes: &[ClawScene], scene_ids: &[usize], actions: ArrayView2<f64>) -> Result<f64> {
    if scene_ids.len() != actions.nrows() {
        return Err(Error::Shape(format!("{} scene ids for {} actions", scene_ids.len(), actions.nrows())));
    }
    if scene_ids.is_empty() {
        return Ok(0.0);
    }
    let mut hits = 0usize;
    for (&s, a) in scene_ids.iter().zip(actions.rows()) {
        let scene = scenes.get(s).ok_or_else(|| Error::Shape(format!("unknown scene {s}")))?;
        if in_region(scene, point2(a)?) {
            hits += 1;
        }
    }
    Ok(hits as f64 / scene_ids.len() as f64)
}

/// Per-region occupancy for one scene; the final entry is the mass outside
/// every region.
pub fn region_occupancy(scene: &ClawScene, actions: ArrayView2<f64>) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; scene.regions.len() + 1];
    for a in actions.rows() {
        match scene.region_of(point2(a)?) {
            Some(r) => counts[r] += 1,
            None => counts[scene.regions.len()] += 1,
        }
    }
    let n = actions.nrows().max(1) as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Shannon entropy (nats) of an occupancy vector, ignoring empty cells.
pub fn occupancy_entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|v| v * v.ln()).sum::<f64>()
}
