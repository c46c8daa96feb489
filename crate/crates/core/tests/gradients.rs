//! Finite-difference checks of every trainable parameter.

mod common;

use common::{denoiser_grad_error, mlp_grad_error, random, GRAD_TOL as TOL};
use diffbc::diffusion::Architecture;
use diffbc::nnet::{Activation, Mlp, Parameterized};
use diffbc::rng::seeded;
use ndarray::Array2;

#[test]
fn basic_mlp_denoiser() {
    for seed in 0..5 {
        let e = denoiser_grad_error(Architecture::BasicMlp, seed);
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn sieve_denoiser() {
    for seed in 0..5 {
        let e = denoiser_grad_error(Architecture::MlpSieve, seed);
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn plain_gelu_mlp() {
    for seed in 0..5 {
        let e = mlp_grad_error(Activation::Gelu, seed);
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn plain_leaky_mlp() {
    for seed in 0..5 {
        let e = mlp_grad_error(Activation::LeakyRelu, seed);
        assert!(e < TOL, "seed {seed}: {e}");
    }
}

#[test]
fn input_gradient_of_linear_squared_error() {
    let mut rng = seeded(3);
    let mut model = Mlp::build(&[3, 2], Activation::Identity, &mut rng).unwrap();
    model.dense_mut()[0].bias.fill(0.0);
    let x = random(1, 3, &mut rng);
    let y = random(1, 2, &mut rng);
    let (out, tape) = model.forward_train(x.view()).unwrap();
    let upstream = (&out - &y) * 2.0;
    let gx = model.backward(&tape, upstream.view()).unwrap();
    let w = &model.dense()[0].weight;
    let resid = w.dot(&x.row(0)) - y.row(0);
    let expected = w.t().dot(&resid) * 2.0;
    for j in 0..3 {
        assert!((gx[[0, j]] - expected[j]).abs() < 1e-14);
    }
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut rng = seeded(4);
    let mut model = Mlp::build(&[3, 5, 2], Activation::Gelu, &mut rng).unwrap();
    let x = random(4, 3, &mut rng);
    let (_, tape) = model.forward_train(x.view()).unwrap();
    let gx = model.backward(&tape, Array2::zeros((4, 2)).view()).unwrap();
    assert!(gx.iter().all(|&v| v == 0.0));
    for l in model.layers() {
        assert!(l.grad_weight.iter().chain(l.grad_bias.iter()).all(|&v| v == 0.0));
    }
}

#[test]
fn two_layer_forward_matches_scalar_loops() {
    let mut rng = seeded(5);
    let model = Mlp::build(&[4, 6, 3], Activation::Gelu, &mut rng).unwrap();
    let out = model.forward_one(&[1.0; 4]).unwrap();
    let gelu = |x: f64| 0.5 * x * (1.0 + libm::erf(x / std::f64::consts::SQRT_2));
    let (l0, l1) = (&model.dense()[0], &model.dense()[1]);
    let mut hidden = [0.0; 6];
    for (i, h) in hidden.iter_mut().enumerate() {
        let mut z = l0.bias[i];
        for j in 0..4 {
            z += l0.weight[[i, j]];
        }
        *h = gelu(z);
    }
    for (i, &o) in out.iter().enumerate() {
        let mut z = l1.bias[i];
        for (j, h) in hidden.iter().enumerate() {
            z += l1.weight[[i, j]] * h;
        }
        assert!((o - z).abs() < 1e-14);
    }
}
