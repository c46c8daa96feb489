use ndarray::{Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

/// Equal-weight mixture of isotropic Gaussians centred on the support points.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeModel {
    support: Array2<f64>,
    width: f64,
}

impl KdeModel {
    pub fn fit(samples: ArrayView2<f64>, width: f64) -> Result<Self> {
        if !(width.is_finite() && width > 0.0) {
            return Err(Error::config("sampler.kde_width", format!("must be positive, got {width}")));
        }
        if samples.nrows() == 0 || samples.ncols() == 0 {
            return Err(Error::Shape("KDE needs at least one non-empty support point".into()));
        }
        Ok(Self {
            support: samples.to_owned(),
            width,
        })
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn support(&self) -> ArrayView2<'_, f64> {
        self.support.view()
    }

    pub fn log_density(&self, x: ArrayView1<f64>) -> Result<f64> {
        let d = self.support.ncols();
        if x.len() != d {
            return Err(Error::Shape(format!("query has {} dims, KDE has {d}", x.len())));
        }
        let inv = 1.0 / (2.0 * self.width * self.width);
        let exps: Vec<f64> = self
            .support
            .rows()
            .into_iter()
            .map(|s| -inv * s.iter().zip(x.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
            .collect();
        let k = exps.len() as f64;
        let norm = 0.5 * d as f64 * (2.0 * std::f64::consts::PI * self.width * self.width).ln();
        Ok(log_sum_exp(&exps) - k.ln() - norm)
    }

    /// Log density of every row of `xs`.
    pub fn score(&self, xs: ArrayView2<f64>) -> Result<Vec<f64>> {
        xs.rows().into_iter().map(|r| self.log_density(r)).collect()
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Index of the largest value; the first one wins ties.
pub fn argmax_first(xs: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &x) in xs.iter().enumerate() {
        match best {
            Some((_, b)) if x <= b => {}
            _ => best = Some((i, x)),
        }
    }
    best.map(|(i, _)| i)
}
