//! Reverse-chain action samplers.
//!
//! All samplers work in the model's normalised action space; [`DiffusionPolicy`]
//! wraps a trained denoiser with its schedule and action normaliser and
//! returns actions in environment units.
//!
//! Random draws happen in a fixed order: the initial `a_T` for every chain
//! (row-major), then for each step `tau > 1` one noise vector per chain.
//! The extra steps of the extra-step scheme run at `tau = 1` and draw nothing.

mod kde;

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use kde::{argmax_first, log_sum_exp, KdeModel};

use crate::diffusion::train::ReverseCoef;
use crate::diffusion::{cfg_epsilon, train_denoiser, Denoiser, DenoiserSpec, NoiseModel, VarianceSchedule};
use crate::envs::{DemoDataset, Normalizer};
use crate::nnet::TrainConfig;
use crate::rng::SeedTree;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    DiffusionBc,
    DiffusionX,
    DiffusionKde,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub scheme: Scheme,
    /// Extra denoising steps at `tau = 1` (only for `DiffusionX`).
    pub extra_steps: usize,
    pub kde_samples: usize,
    /// Kernel standard deviation in normalised action units.
    pub kde_width: f64,
    /// Guidance weight; `None` samples from the conditional model directly.
    pub guidance: Option<f64>,
}

impl SamplerConfig {
    pub fn bc() -> Self {
        Self {
            scheme: Scheme::DiffusionBc,
            extra_steps: 0,
            kde_samples: 100,
            kde_width: 0.4,
            guidance: None,
        }
    }

    pub fn x(extra_steps: usize) -> Self {
        Self {
            scheme: Scheme::DiffusionX,
            extra_steps,
            ..Self::bc()
        }
    }

    pub fn kde(samples: usize, width: f64) -> Self {
        Self {
            scheme: Scheme::DiffusionKde,
            kde_samples: samples,
            kde_width: width,
            ..Self::bc()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scheme == Scheme::DiffusionX && self.extra_steps == 0 {
            return Err(Error::config("sampler.extra_steps", "diffusion_x needs at least one extra step"));
        }
        if self.scheme == Scheme::DiffusionKde {
            if self.kde_samples == 0 {
                return Err(Error::config("sampler.kde_samples", "must be at least 1"));
            }
            if !(self.kde_width.is_finite() && self.kde_width > 0.0) {
                return Err(Error::config("sampler.kde_width", "must be positive"));
            }
        }
        if let Some(w) = self.guidance {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::config("guidance.weight", format!("must be >= 0, got {w}")));
            }
        }
        Ok(())
    }

    /// Extra steps actually run: plain diffusion never runs any.
    pub fn effective_extra_steps(&self) -> usize {
        match self.scheme {
            Scheme::DiffusionX => self.extra_steps,
            _ => 0,
        }
    }
}

fn predict<M: NoiseModel + ?Sized>(
    model: &M,
    cond: &[f64],
    a: ArrayView2<f64>,
    tau: usize,
    guidance: Option<f64>,
) -> Result<Array2<f64>> {
    match guidance {
        None => model.epsilon(cond, a, tau, false),
        Some(w) => cfg_epsilon(model, cond, a, tau, w),
    }
}

fn check_finite(a: &Array2<f64>, tau: usize) -> Result<()> {
    if a.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::Sampling { tau })
    }
}

/// Runs `chains` reverse chains from `tau = T` down to 1, then `extra_steps`
/// more updates at `tau = 1`. Returns one row per chain.
pub fn reverse_chains<M: NoiseModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    cond: &[f64],
    sched: &VarianceSchedule,
    chains: usize,
    extra_steps: usize,
    guidance: Option<f64>,
    rng: &mut R,
) -> Result<Array2<f64>> {
    let d = model.action_dim();
    let mut a = Array2::<f64>::zeros((chains, d));
    a.mapv_inplace(|_| rng.sample(StandardNormal));
    let mut z = Array2::<f64>::zeros((chains, d));
    for tau in (1..=sched.steps()).rev() {
        let eps = predict(model, cond, a.view(), tau, guidance)?;
        let coef = ReverseCoef::at(sched, tau);
        if tau > 1 {
            z.mapv_inplace(|_| rng.sample(StandardNormal));
            coef.apply_rows(&mut a, &eps, Some(&z));
        } else {
            coef.apply_rows(&mut a, &eps, None);
        }
        check_finite(&a, tau)?;
    }
    let coef = ReverseCoef::at(sched, 1);
    for _ in 0..extra_steps {
        let eps = predict(model, cond, a.view(), 1, guidance)?;
        coef.apply_rows(&mut a, &eps, None);
        check_finite(&a, 1)?;
    }
    Ok(a)
}

fn first_row(a: Array2<f64>) -> Vec<f64> {
    a.row(0).to_vec()
}

/// Plain reverse chain for one observation.
pub fn sample_diffusion_bc<M: NoiseModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    obs: &[f64],
    sched: &VarianceSchedule,
    guidance: Option<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let cond = model.condition(obs)?;
    reverse_chains(model, &cond, sched, 1, 0, guidance, rng).map(first_row)
}

/// Reverse chain followed by `extra_steps` noise-free updates at `tau = 1`.
pub fn sample_diffusion_x<M: NoiseModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    obs: &[f64],
    sched: &VarianceSchedule,
    extra_steps: usize,
    guidance: Option<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let cond = model.condition(obs)?;
    reverse_chains(model, &cond, sched, 1, extra_steps, guidance, rng).map(first_row)
}

/// Draws `k` plain samples and returns the one with the highest KDE log density.
pub fn sample_diffusion_kde<M: NoiseModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    obs: &[f64],
    sched: &VarianceSchedule,
    k: usize,
    width: f64,
    guidance: Option<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let cond = model.condition(obs)?;
    kde_select(model, &cond, sched, k, width, guidance, rng)
}

fn kde_select<M: NoiseModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    cond: &[f64],
    sched: &VarianceSchedule,
    k: usize,
    width: f64,
    guidance: Option<f64>,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::config("sampler.kde_samples", "must be at least 1"));
    }
    let draws = reverse_chains(model, cond, sched, k, 0, guidance, rng)?;
    let kde = KdeModel::fit(draws.view(), width)?;
    let scores = kde.score(draws.view())?;
    let best = argmax_first(&scores).expect("k >= 1");
    Ok(draws.row(best).to_vec())
}

/// Samples `n` actions for one observation according to `cfg`, in model space.
///
/// Plain and extra-step chains run as one batch; the KDE scheme runs `n`
/// independent selections of `kde_samples` chains each.
pub fn sample_many<M: NoiseModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    obs: &[f64],
    sched: &VarianceSchedule,
    cfg: &SamplerConfig,
    n: usize,
    rng: &mut R,
) -> Result<Array2<f64>> {
    cfg.validate()?;
    let cond = model.condition(obs)?;
    match cfg.scheme {
        Scheme::DiffusionBc | Scheme::DiffusionX => {
            reverse_chains(model, &cond, sched, n, cfg.effective_extra_steps(), cfg.guidance, rng)
        }
        Scheme::DiffusionKde => {
            let mut out = Array2::zeros((n, model.action_dim()));
            for mut r in out.rows_mut() {
                let a = kde_select(model, &cond, sched, cfg.kde_samples, cfg.kde_width, cfg.guidance, rng)?;
                r.assign(&ndarray::ArrayView1::from(&a));
            }
            Ok(out)
        }
    }
}

/// A trained denoiser bundled with everything needed to emit real actions.
#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionPolicy {
    pub model: Denoiser,
    pub schedule: VarianceSchedule,
    pub normalizer: Normalizer,
}

impl DiffusionPolicy {
    /// Initialises a denoiser from `spec` and trains it on `data`.
    /// Uses the `init` and `train` substreams of `seeds`.
    pub fn fit(
        data: &DemoDataset,
        spec: DenoiserSpec,
        schedule: VarianceSchedule,
        dropout: f64,
        train: &TrainConfig,
        seeds: &SeedTree,
    ) -> Result<(Self, Vec<f64>)> {
        if spec.obs_dim != data.obs_dim() || spec.action_dim != data.action_dim() {
            return Err(Error::Shape(format!(
                "model expects {}/{} dims, data has {}/{}",
                spec.obs_dim,
                spec.action_dim,
                data.obs_dim(),
                data.action_dim()
            )));
        }
        if spec.steps != schedule.steps() {
            return Err(Error::config("schedule.steps", "model and schedule disagree on the step count"));
        }
        if data.is_empty() {
            return Err(Error::config("data.n", "empty dataset"));
        }
        let normalizer = data.normalizer();
        let actions = normalizer.normalize_rows(data.actions());
        let mut model = Denoiser::new(spec, &mut seeds.stream("init"))?;
        let curve = train_denoiser(
            &mut model,
            data.observations(),
            actions.view(),
            &schedule,
            dropout,
            train,
            &mut seeds.stream("train"),
        )?;
        Ok((
            Self {
                model,
                schedule,
                normalizer,
            },
            curve,
        ))
    }

    pub fn sample<R: Rng + ?Sized>(&self, obs: &[f64], cfg: &SamplerConfig, rng: &mut R) -> Result<Vec<f64>> {
        let a = sample_many(&self.model, obs, &self.schedule, cfg, 1, rng)?;
        Ok(self.normalizer.denormalize(a.row(0).as_slice().expect("contiguous")))
    }

    pub fn sample_n<R: Rng + ?Sized>(&self, obs: &[f64], cfg: &SamplerConfig, n: usize, rng: &mut R) -> Result<Array2<f64>> {
        let mut a = sample_many(&self.model, obs, &self.schedule, cfg, n, rng)?;
        for mut r in a.rows_mut() {
            let v = self.normalizer.denormalize(r.as_slice().expect("contiguous"));
            r.assign(&ndarray::ArrayView1::from(&v));
        }
        Ok(a)
    }
}
