use ndarray::{Array2, ArrayView2, Zip};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::denoiser::{Denoiser, NoiseModel};
use super::schedule::VarianceSchedule;
use crate::error::{Error, Result};
use crate::nnet::{minibatches, Adam, AdamConfig, Parameterized, TrainConfig};

/// Classifier-free guidance settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceConfig {
    /// Guidance weight `w >= 0`; zero means plain conditional sampling.
    pub weight: f64,
    /// Probability of masking the observation code during training.
    pub dropout: f64,
}

impl Default for GuidanceConfig {
    fn default() -> Self {
        Self {
            weight: 0.0,
            dropout: 0.1,
        }
    }
}

impl GuidanceConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.weight.is_finite() && self.weight >= 0.0) {
            return Err(Error::config("guidance.weight", format!("must be >= 0, got {}", self.weight)));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return Err(Error::config("guidance.dropout", format!("must lie in [0, 1], got {}", self.dropout)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepStats {
    /// Mean squared noise-prediction error before the update.
    pub loss: f64,
    /// Rows whose observation was masked in this batch.
    pub masked: usize,
}

/// Mean over rows of `||pred - target||^2` and its gradient w.r.t. `pred`.
pub fn ddpm_loss(pred: ArrayView2<f64>, target: ArrayView2<f64>) -> Result<(f64, Array2<f64>)> {
    if pred.dim() != target.dim() {
        return Err(Error::Shape(format!("prediction {:?} vs target {:?}", pred.dim(), target.dim())));
    }
    let n = pred.nrows().max(1) as f64;
    let diff = &pred - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff * (2.0 / n)))
}

/// One optimisation step of the noise-prediction objective on a batch.
///
/// Per row: `tau ~ U{1..T}`, mask with probability `dropout`, `z ~ N(0, I)`.
pub fn ddpm_training_step<R: Rng + ?Sized>(
    model: &mut Denoiser,
    opt: &mut Adam,
    lr: f64,
    obs: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    sched: &VarianceSchedule,
    dropout: f64,
    rng: &mut R,
) -> Result<StepStats> {
    let n = actions.nrows();
    if n == 0 {
        return Err(Error::Shape("empty training batch".into()));
    }
    if obs.nrows() != n {
        return Err(Error::Shape(format!("{} observations for {n} actions", obs.nrows())));
    }
    let d = actions.ncols();
    let steps = sched.steps();
    let mut taus = Vec::with_capacity(n);
    let mut masked = Vec::with_capacity(n);
    let mut z = Array2::<f64>::zeros((n, d));
    let mut noisy = Array2::<f64>::zeros((n, d));
    for i in 0..n {
        let tau = rng.gen_range(1..=steps);
        taus.push(tau);
        masked.push(rng.gen::<f64>() < dropout);
        let ab = sched.alpha_bar(tau);
        let (s, c) = (ab.sqrt(), (1.0 - ab).sqrt());
        for j in 0..d {
            let e: f64 = rng.sample(StandardNormal);
            z[[i, j]] = e;
            noisy[[i, j]] = s * actions[[i, j]] + c * e;
        }
    }

    let (pred, tape) = model.forward_train(obs, noisy.view(), &taus, &masked)?;
    let (loss, grad) = ddpm_loss(pred.view(), z.view())?;
    if !loss.is_finite() {
        return Err(Error::Training {
            layer: None,
            msg: format!("non-finite loss {loss}"),
        });
    }
    model.zero_grad();
    model.backward(&tape, grad.view())?;
    opt.step_with_lr(&mut model.layers_mut(), lr)?;
    Ok(StepStats {
        loss,
        masked: masked.iter().filter(|&&m| m).count(),
    })
}

/// Runs `cfg.epochs` passes of shuffled minibatch training and returns the
/// mean loss of each epoch. Actions must already be normalised.
pub fn train_denoiser<R: Rng + ?Sized>(
    model: &mut Denoiser,
    obs: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    sched: &VarianceSchedule,
    dropout: f64,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if cfg.batch_size == 0 {
        return Err(Error::config("train.batch_size", "must be positive"));
    }
    if !(0.0..=1.0).contains(&dropout) {
        return Err(Error::config("guidance.dropout", format!("must lie in [0, 1], got {dropout}")));
    }
    let rows = actions.nrows();
    let mut opt = Adam::new(AdamConfig {
        lr: cfg.lr,
        ..AdamConfig::default()
    });
    let total = cfg.total_steps(rows);
    let mut step = 0;
    let mut curve = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let batches = minibatches(rows, cfg.batch_size, rng);
        let mut sum = 0.0;
        for idx in &batches {
            let o = obs.select(ndarray::Axis(0), idx);
            let a = actions.select(ndarray::Axis(0), idx);
            let lr = cfg.lr_schedule.rate(cfg.lr, step, total);
            sum += ddpm_training_step(model, &mut opt, lr, o.view(), a.view(), sched, dropout, rng)?.loss;
            step += 1;
        }
        curve.push(sum / batches.len().max(1) as f64);
    }
    Ok(curve)
}

/// Coefficients of the reverse update at one step.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ReverseCoef {
    inv_sqrt_alpha: f64,
    eps_scale: f64,
    sigma: f64,
}

impl ReverseCoef {
    pub(crate) fn at(sched: &VarianceSchedule, tau: usize) -> Self {
        let alpha = sched.alpha(tau);
        Self {
            inv_sqrt_alpha: 1.0 / alpha.sqrt(),
            eps_scale: (1.0 - alpha) / (1.0 - sched.alpha_bar(tau)).sqrt(),
            sigma: sched.sigma(tau),
        }
    }

    #[inline]
    pub(crate) fn apply(&self, a: f64, eps: f64, z: f64) -> f64 {
        self.inv_sqrt_alpha * (a - self.eps_scale * eps) + self.sigma * z
    }

    /// In-place update of a batch; `z = None` means zero noise.
    pub(crate) fn apply_rows(&self, a: &mut Array2<f64>, eps: &Array2<f64>, z: Option<&Array2<f64>>) {
        match z {
            Some(z) => Zip::from(a).and(eps).and(z).for_each(|x, &e, &n| *x = self.apply(*x, e, n)),
            None => Zip::from(a).and(eps).for_each(|x, &e| *x = self.apply(*x, e, 0.0)),
        }
    }
}

/// `(1/sqrt(alpha)) (a - (1-alpha)/sqrt(1-alpha_bar) * eps) + sigma z`.
pub fn reverse_update(a_tau: &[f64], eps: &[f64], tau: usize, sched: &VarianceSchedule, z: &[f64]) -> Result<Vec<f64>> {
    sched.check_tau(tau)?;
    if a_tau.len() != eps.len() || a_tau.len() != z.len() {
        return Err(Error::Shape("action, noise prediction and noise lengths differ".into()));
    }
    let c = ReverseCoef::at(sched, tau);
    Ok(a_tau
        .iter()
        .zip(eps)
        .zip(z)
        .map(|((&a, &e), &n)| c.apply(a, e, n))
        .collect())
}

/// One reverse denoising step for a single action.
pub fn denoise_step<M: NoiseModel + ?Sized>(
    model: &M,
    a_tau: &[f64],
    tau: usize,
    obs: &[f64],
    sched: &VarianceSchedule,
    z: &[f64],
) -> Result<Vec<f64>> {
    sched.check_tau(tau)?;
    let cond = model.condition(obs)?;
    let a = ArrayView2::from_shape((1, a_tau.len()), a_tau).map_err(|e| Error::Shape(e.to_string()))?;
    let eps = model.epsilon(&cond, a, tau, false)?;
    reverse_update(a_tau, eps.as_slice().expect("contiguous"), tau, sched, z)
}

/// Guided noise prediction `(1+w) eps_cond - w eps_uncond`.
pub fn cfg_epsilon<M: NoiseModel + ?Sized>(
    model: &M,
    cond: &[f64],
    actions: ArrayView2<f64>,
    tau: usize,
    weight: f64,
) -> Result<Array2<f64>> {
    if !(weight.is_finite() && weight >= 0.0) {
        return Err(Error::config("guidance.weight", format!("must be >= 0, got {weight}")));
    }
    let mut out = model.epsilon(cond, actions, tau, false)?;
    let uncond = model.epsilon(cond, actions, tau, true)?;
    let k = 1.0 + weight;
    Zip::from(&mut out).and(&uncond).for_each(|c, &u| *c = k * *c - weight * u);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::{Architecture, DenoiserSpec};
    use crate::nnet::AdamConfig;
    use crate::rng::seeded;
    use ndarray::array;

    fn small(arch: Architecture) -> Denoiser {
        let spec = DenoiserSpec {
            architecture: arch,
            obs_dim: 3,
            action_dim: 2,
            hidden_width: 16,
            hidden_layers: 2,
            embed_dim: 8,
            time_embed_dim: 8,
            steps: 10,
        };
        Denoiser::new(spec, &mut seeded(5)).unwrap()
    }

    #[test]
    fn loss_is_zero_when_prediction_equals_noise() {
        let z = array![[0.3, -1.2], [2.0, 0.5]];
        let (loss, grad) = ddpm_loss(z.view(), z.view()).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn dropout_masks_about_ten_percent() {
        let mut model = small(Architecture::BasicMlp);
        let sched = VarianceSchedule::linear(10, 1e-4, 0.02).unwrap();
        let mut opt = Adam::new(AdamConfig::default());
        let mut rng = seeded(17);
        let rows = 10_000;
        let obs = Array2::from_shape_fn((rows, 3), |(i, j)| if i % 3 == j { 1.0 } else { 0.0 });
        let act = Array2::from_shape_fn((rows, 2), |(i, j)| ((i * 7 + j) % 11) as f64 / 5.5 - 1.0);
        let stats = ddpm_training_step(&mut model, &mut opt, 1e-3, obs.view(), act.view(), &sched, 0.1, &mut rng).unwrap();
        let frac = stats.masked as f64 / rows as f64;
        assert!((0.08..=0.12).contains(&frac), "masked fraction {frac}");
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn initial_loss_is_near_action_dimension() {
        // Scaling the output head to zero makes the prediction ~0, so the loss
        // estimates E||z||^2 = |a|.
        let mut model = small(Architecture::MlpSieve);
        if let Some(l) = model.layers_mut().into_iter().last() {
            l.weight.fill(0.0);
        }
        let sched = VarianceSchedule::linear(10, 1e-4, 0.02).unwrap();
        let mut opt = Adam::new(AdamConfig::default());
        let rows = 4000;
        let obs = Array2::from_elem((rows, 3), 1.0 / 3.0);
        let act = Array2::zeros((rows, 2));
        let stats =
            ddpm_training_step(&mut model, &mut opt, 1e-3, obs.view(), act.view(), &sched, 0.0, &mut seeded(3)).unwrap();
        assert!((stats.loss - 2.0).abs() < 0.15, "loss {}", stats.loss);
        assert_eq!(stats.masked, 0);
    }

    #[test]
    fn empty_batch_rejected() {
        let mut model = small(Architecture::BasicMlp);
        let sched = VarianceSchedule::linear(10, 1e-4, 0.02).unwrap();
        let mut opt = Adam::new(AdamConfig::default());
        let e = Array2::<f64>::zeros((0, 3));
        let a = Array2::<f64>::zeros((0, 2));
        assert!(ddpm_training_step(&mut model, &mut opt, 1e-3, e.view(), a.view(), &sched, 0.1, &mut seeded(0)).is_err());
    }

    #[test]
    fn reverse_update_matches_scalar_formula() {
        let sched = VarianceSchedule::linear(20, 1e-4, 0.02).unwrap();
        let a = [0.4, -1.3, 2.2];
        let e = [0.9, 0.1, -0.5];
        let z = [-0.3, 1.7, 0.05];
        for tau in [1, 7, 20] {
            let got = reverse_update(&a, &e, tau, &sched, &z).unwrap();
            let al = sched.alpha(tau);
            let ab = sched.alpha_bar(tau);
            for i in 0..3 {
                let want = (a[i] - (1.0 - al) / (1.0 - ab).sqrt() * e[i]) / al.sqrt() + sched.beta(tau).sqrt() * z[i];
                assert!((got[i] - want).abs() < 1e-13);
            }
        }
    }

    struct ZeroEps;
    impl NoiseModel for ZeroEps {
        fn obs_dim(&self) -> usize {
            1
        }
        fn action_dim(&self) -> usize {
            2
        }
        fn condition(&self, obs: &[f64]) -> Result<Vec<f64>> {
            Ok(obs.to_vec())
        }
        fn epsilon(&self, _: &[f64], a: ArrayView2<f64>, _: usize, _: bool) -> Result<Array2<f64>> {
            Ok(Array2::zeros(a.dim()))
        }
    }

    #[test]
    fn zero_network_step_scales_by_inverse_sqrt_alpha() {
        let sched = VarianceSchedule::linear(5, 1e-4, 0.02).unwrap();
        let out = denoise_step(&ZeroEps, &[1.0, -2.0], 3, &[0.0], &sched, &[0.0, 0.0]).unwrap();
        let r = sched.alpha(3).sqrt();
        assert!((out[0] - 1.0 / r).abs() < 1e-15);
        assert!((out[1] + 2.0 / r).abs() < 1e-15);
    }

    #[test]
    fn cfg_weight_zero_is_conditional_and_negative_rejected() {
        let m = small(Architecture::MlpSieve);
        let cond = m.condition(&[0.0, 1.0, 0.0]).unwrap();
        let a = array![[0.2, -0.1], [0.5, 0.5]];
        let plain = m.epsilon(&cond, a.view(), 4, false).unwrap();
        assert_eq!(cfg_epsilon(&m, &cond, a.view(), 4, 0.0).unwrap(), plain);
        let unc = m.epsilon(&cond, a.view(), 4, true).unwrap();
        let w1 = cfg_epsilon(&m, &cond, a.view(), 4, 1.0).unwrap();
        for ((g, c), u) in w1.iter().zip(plain.iter()).zip(unc.iter()) {
            assert!((g - (2.0 * c - u)).abs() < 1e-14);
        }
        assert!(matches!(cfg_epsilon(&m, &cond, a.view(), 4, -0.5), Err(Error::Config { .. })));
    }
}
