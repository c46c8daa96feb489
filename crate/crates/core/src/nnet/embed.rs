use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sinusoidal encoding of the denoising timestep.
///
/// Component `2i` is `sin(tau * base^(-2i/dim))` and `2i+1` the matching cosine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeEmbedding {
    dim: usize,
    base: f64,
}

impl TimeEmbedding {
    pub fn new(dim: usize, base: f64) -> Result<Self> {
        if dim == 0 || !dim.is_multiple_of(2) {
            return Err(Error::config("time_embed_dim", format!("must be a positive even integer, got {dim}")));
        }
        if !(base.is_finite() && base > 0.0) {
            return Err(Error::config("time_embed_base", format!("must be positive, got {base}")));
        }
        Ok(Self { dim, base })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn base(&self) -> f64 {
        self.base
    }

    pub fn embed(&self, tau: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        self.embed_into(tau, &mut out);
        out
    }

    pub fn embed_into(&self, tau: usize, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim);
        let t = tau as f64;
        let half = self.dim / 2;
        for i in 0..half {
            let freq = self.base.powf(-((2 * i) as f64) / self.dim as f64);
            let (s, c) = (t * freq).sin_cos();
            out[2 * i] = s;
            out[2 * i + 1] = c;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn odd_dimension_rejected() {
        assert!(matches!(TimeEmbedding::new(7, 1e4), Err(Error::Config { .. })));
    }

    #[test]
    fn tau_zero_alternates() {
        let e = TimeEmbedding::new(8, 1e4).unwrap().embed(0);
        assert_eq!(e, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn distinct_and_bounded_over_fifty_steps() {
        let emb = TimeEmbedding::new(128, 1e4).unwrap();
        let all: Vec<Vec<f64>> = (1..=50).map(|t| emb.embed(t)).collect();
        for (i, a) in all.iter().enumerate() {
            assert_eq!(a.len(), 128);
            assert!(a.iter().all(|v| v.abs() <= 1.0));
            for b in &all[i + 1..] {
                let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum();
                assert!(d > 1e-6);
            }
        }
    }
}
