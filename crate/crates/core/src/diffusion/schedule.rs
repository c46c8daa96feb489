use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the reverse-step noise scale is derived from the beta schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SigmaKind {
    /// sigma = sqrt(beta)
    #[default]
    Beta,
    /// sigma = sqrt(beta * (1 - alpha_bar[t-1]) / (1 - alpha_bar[t]))
    PosteriorBeta,
}

/// DDPM variance schedule over denoising steps `1..=T`.
///
/// Accessors take the 1-based step index used throughout the sampler loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceSchedule {
    beta_min: f64,
    beta_max: f64,
    sigma_kind: SigmaKind,
    beta: Vec<f64>,
    alpha: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

impl VarianceSchedule {
    /// Linear beta ramp from `beta_min` at step 1 to `beta_max` at step `steps`.
    pub fn linear(steps: usize, beta_min: f64, beta_max: f64) -> Result<Self> {
        Self::linear_with_sigma(steps, beta_min, beta_max, SigmaKind::Beta)
    }

    pub fn linear_with_sigma(steps: usize, beta_min: f64, beta_max: f64, sigma_kind: SigmaKind) -> Result<Self> {
        if steps == 0 {
            return Err(Error::config("diffusion.steps", "must be at least 1"));
        }
        if !(beta_min > 0.0 && beta_min <= beta_max && beta_max < 1.0) {
            return Err(Error::config(
                "diffusion.beta_min",
                format!("need 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"),
            ));
        }
        let beta: Vec<f64> = if steps == 1 {
            vec![beta_min]
        } else {
            let span = beta_max - beta_min;
            (0..steps)
                .map(|i| beta_min + span * i as f64 / (steps - 1) as f64)
                .collect()
        };
        let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
        let mut alpha_bar = Vec::with_capacity(steps);
        let mut acc = 1.0;
        for a in &alpha {
            acc *= a;
            alpha_bar.push(acc);
        }
        let sigma = match sigma_kind {
            SigmaKind::Beta => beta.iter().map(|b| b.sqrt()).collect(),
            SigmaKind::PosteriorBeta => (0..steps)
                .map(|i| {
                    let prev = if i == 0 { 1.0 } else { alpha_bar[i - 1] };
                    (beta[i] * (1.0 - prev) / (1.0 - alpha_bar[i])).sqrt()
                })
                .collect(),
        };
        Ok(Self {
            beta_min,
            beta_max,
            sigma_kind,
            beta,
            alpha,
            alpha_bar,
            sigma,
        })
    }

    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta_min(&self) -> f64 {
        self.beta_min
    }

    pub fn beta_max(&self) -> f64 {
        self.beta_max
    }

    pub fn sigma_kind(&self) -> SigmaKind {
        self.sigma_kind
    }

    pub fn beta(&self, tau: usize) -> f64 {
        self.beta[tau - 1]
    }

    pub fn alpha(&self, tau: usize) -> f64 {
        self.alpha[tau - 1]
    }

    pub fn alpha_bar(&self, tau: usize) -> f64 {
        self.alpha_bar[tau - 1]
    }

    pub fn sigma(&self, tau: usize) -> f64 {
        self.sigma[tau - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    pub(crate) fn check_tau(&self, tau: usize) -> Result<()> {
        if tau == 0 || tau > self.steps() {
            return Err(Error::Shape(format!("denoising step {tau} outside 1..={}", self.steps())));
        }
        Ok(())
    }
}

/// `sqrt(alpha_bar) * a + sqrt(1 - alpha_bar) * z`, elementwise.
pub fn forward_noise(a: &[f64], tau: usize, sched: &VarianceSchedule, z: &[f64]) -> Result<Vec<f64>> {
    sched.check_tau(tau)?;
    if a.len() != z.len() {
        return Err(Error::Shape(format!("action has {} dims, noise has {}", a.len(), z.len())));
    }
    let ab = sched.alpha_bar(tau);
    Ok(noise_with(ab, a, z))
}

pub(crate) fn noise_with(alpha_bar: f64, a: &[f64], z: &[f64]) -> Vec<f64> {
    let s = alpha_bar.sqrt();
    let n = (1.0 - alpha_bar).sqrt();
    a.iter().zip(z).map(|(x, e)| s * x + n * e).collect()
}
