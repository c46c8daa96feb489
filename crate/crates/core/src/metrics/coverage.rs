use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DcResult {
    pub density: f64,
    pub coverage: f64,
    pub k: usize,
    /// Real points whose neighbourhood radius collapsed to zero (duplicates).
    pub zero_radius_count: usize,
}

fn dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Distance from each point to its k-th nearest neighbour in the same set,
/// excluding itself but counting duplicates.
pub fn knn_radii(points: ArrayView2<f64>, k: usize) -> Result<Vec<f64>> {
    let n = points.nrows();
    if k == 0 || n <= k {
        return Err(Error::config("metrics.k", format!("need 1 <= k < n, got k={k}, n={n}")));
    }
    let mut row = Vec::with_capacity(n - 1);
    Ok((0..n)
        .map(|i| {
            row.clear();
            row.extend((0..n).filter(|&j| j != i).map(|j| dist(points.row(i), points.row(j))));
            let (_, kth, _) = row.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

/// Density and Coverage of `fake` against `real` using closed k-NN balls.
pub fn density_coverage(real: ArrayView2<f64>, fake: ArrayView2<f64>, k: usize) -> Result<DcResult> {
    if real.ncols() != fake.ncols() {
        return Err(Error::Shape(format!("dimension mismatch: {} vs {}", real.ncols(), fake.ncols())));
    }
    if real.iter().chain(fake.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite point".into()));
    }
    let radii = knn_radii(real, k)?;
    let mut inside = 0usize;
    let mut covered = vec![false; real.nrows()];
    for f in fake.rows() {
        for (i, r) in real.rows().into_iter().enumerate() {
            if dist(f, r) <= radii[i] {
                inside += 1;
                covered[i] = true;
            }
        }
    }
    let m = fake.nrows();
    Ok(DcResult {
        density: if m == 0 { 0.0 } else { inside as f64 / (k * m) as f64 },
        coverage: covered.iter().filter(|&&c| c).count() as f64 / real.nrows() as f64,
        k,
        zero_radius_count: radii.iter().filter(|&&r| r == 0.0).count(),
    })
}
