//! Dense-tensor MLP machinery with exact reverse-mode gradients.
//!
//! Everything trains in `f64`. Batches are row-major `Array2` values with one
//! sample per row; single-vector helpers wrap a batch of one.

mod adam;
mod embed;
mod gradcheck;
pub(crate) mod mlp;

pub use adam::{Adam, AdamConfig};
pub use embed::TimeEmbedding;
pub use gradcheck::{check_gradients, relative_error, GradCheck};
pub use mlp::{Activation, Dense, DenseTape, Mlp, MlpTape};

/// Anything that owns trainable dense layers.
///
/// The traversal order is stable: optimizers and checkpoints rely on it.
pub trait Parameterized {
    fn layers(&self) -> Vec<&Dense>;
    fn layers_mut(&mut self) -> Vec<&mut Dense>;

    fn zero_grad(&mut self) {
        for l in self.layers_mut() {
            l.zero_grad();
        }
    }

    fn param_count(&self) -> usize {
        self.layers().iter().map(|l| l.param_count()).sum()
    }
}

/// Step-size schedule over a fixed number of optimizer updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    /// Cosine decay from the base rate to zero over the run.
    Cosine,
}

impl LrSchedule {
    pub fn rate(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                if total == 0 {
                    return base;
                }
                let p = (step as f64 / total as f64).min(1.0);
                0.5 * base * (1.0 + (std::f64::consts::PI * p).cos())
            }
        }
    }
}


/// Epoch/minibatch settings shared by every trainer.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub lr_schedule: LrSchedule,
}

impl TrainConfig {
    pub fn steps_per_epoch(&self, rows: usize) -> usize {
        rows.div_ceil(self.batch_size.max(1))
    }

    pub fn total_steps(&self, rows: usize) -> usize {
        self.epochs * self.steps_per_epoch(rows)
    }
}

/// Shuffled minibatch index lists covering `0..rows` once.
pub fn minibatches<R: rand::Rng + ?Sized>(rows: usize, batch: usize, rng: &mut R) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    let mut idx: Vec<usize> = (0..rows).collect();
    idx.shuffle(rng);
    idx.chunks(batch.max(1)).map(|c| c.to_vec()).collect()
}
