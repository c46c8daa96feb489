//! Short optimisation runs: losses must fall and fits must be sensible.

use diffbc::baselines::{sample_baseline, train_baseline, BaselineConfig, BaselineKind};
use diffbc::diffusion::{Architecture, DenoiserSpec, VarianceSchedule};
use diffbc::envs::{generate_claw_dataset, default_claw_scenes, DemoDataset};
use diffbc::nnet::{LrSchedule, TrainConfig};
use diffbc::rng::{seeded, SeedTree};
use diffbc::samplers::{DiffusionPolicy, SamplerConfig};
use ndarray::Array2;
use rand::Rng;

fn train_cfg(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 32, lr: 1e-3, lr_schedule: LrSchedule::Constant }
}

/// One observation, actions spread uniformly on a small square.
fn square_data(n: usize) -> DemoDataset {
    let mut rng = seeded(1);
    let obs = Array2::ones((n, 1));
    let actions = Array2::from_shape_fn((n, 2), |(_, j)| 0.4 + 0.2 * j as f64 + rng.gen_range(-0.05..0.05));
    DemoDataset::new(obs, actions).unwrap()
}

/// Every demonstration is the same action, so the noise is exactly
/// recoverable from the noised input and the loss can approach zero.
fn point_data(n: usize) -> DemoDataset {
    let obs = Array2::ones((n, 1));
    let actions = Array2::from_shape_fn((n, 2), |(_, j)| 0.4 + 0.2 * j as f64);
    DemoDataset::new(obs, actions).unwrap()
}

#[test]
fn diffusion_loss_falls_over_200_steps() {
    // 640 rows at batch 32 is 20 steps per epoch
    let data = point_data(640);
    let spec = DenoiserSpec {
        architecture: Architecture::MlpSieve,
        obs_dim: 1,
        action_dim: 2,
        hidden_width: 32,
        hidden_layers: 2,
        embed_dim: 16,
        time_embed_dim: 16,
        steps: 20,
    };
    let sched = VarianceSchedule::linear(20, 1e-4, 0.02).unwrap();
    let (policy, curve) = DiffusionPolicy::fit(&data, spec, sched, 0.0, &train_cfg(10), &SeedTree::new(2)).unwrap();
    assert_eq!(curve.len(), 10);
    assert!(curve.iter().all(|l| l.is_finite()));
    assert!(curve[9] < 0.5 * curve[0], "{curve:?}");
    let a = policy.sample_n(&[1.0], &SamplerConfig::bc(), 200, &mut seeded(3)).unwrap();
    let mean: Vec<f64> = (0..2).map(|j| a.column(j).mean().unwrap()).collect();
    assert!((mean[0] - 0.4).abs() < 0.1 && (mean[1] - 0.6).abs() < 0.1, "{mean:?}");
}

fn baseline_cfg() -> BaselineConfig {
    BaselineConfig {
        hidden_width: 32,
        hidden_layers: 2,
        bins: 10,
        clusters: 4,
        kmeans_iters: 50,
        residual_weight: 1.0,
        train: train_cfg(10),
    }
}

#[test]
fn every_baseline_trains_and_samples() {
    let scenes = default_claw_scenes();
    let data = generate_claw_dataset(&scenes, 700, &mut seeded(4)).unwrap();
    for kind in [BaselineKind::Mse, BaselineKind::Discretised, BaselineKind::Kmeans, BaselineKind::KmeansResidual] {
        let (model, curve) = train_baseline(kind, &data, &baseline_cfg(), &SeedTree::new(5)).unwrap();
        assert!(curve.last().unwrap() < &curve[0], "{kind:?}: {curve:?}");
        let a = sample_baseline(&model, data.observation(0), &mut seeded(6)).unwrap();
        assert_eq!(a.len(), 2);
        assert!(a.iter().all(|v| (-0.1..=1.1).contains(v)), "{kind:?}: {a:?}");
    }
}

#[test]
fn mse_baseline_predicts_the_mean() {
    let data = square_data(640);
    let (model, _) = train_baseline(BaselineKind::Mse, &data, &baseline_cfg(), &SeedTree::new(7)).unwrap();
    let a = sample_baseline(&model, &[1.0], &mut seeded(0)).unwrap();
    assert!((a[0] - 0.4).abs() < 0.03 && (a[1] - 0.6).abs() < 0.03, "{a:?}");
}

#[test]
fn training_is_deterministic() {
    let data = square_data(128);
    let spec = DenoiserSpec {
        architecture: Architecture::BasicMlp,
        obs_dim: 1,
        action_dim: 2,
        hidden_width: 8,
        hidden_layers: 2,
        embed_dim: 4,
        time_embed_dim: 4,
        steps: 5,
    };
    let sched = VarianceSchedule::linear(5, 1e-4, 0.02).unwrap();
    let a = DiffusionPolicy::fit(&data, spec.clone(), sched.clone(), 0.1, &train_cfg(2), &SeedTree::new(9)).unwrap();
    let b = DiffusionPolicy::fit(&data, spec, sched, 0.1, &train_cfg(2), &SeedTree::new(9)).unwrap();
    assert_eq!(a, b);
}
