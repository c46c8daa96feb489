//! Oracles and fixtures shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use diffbc::diffusion::{Architecture, Denoiser, DenoiserSpec};
use diffbc::nnet::{check_gradients, Activation, Mlp, Parameterized};
use diffbc::rng::seeded;
use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::Rng;

pub const GRAD_STEP: f64 = 1e-5;
pub const GRAD_FLOOR: f64 = 1e-6;
pub const GRAD_TOL: f64 = 1e-4;

pub fn random(rows: usize, cols: usize, rng: &mut impl Rng) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-1.0..1.0))
}

fn probe(out: ArrayView2<f64>, weights: &Array2<f64>) -> f64 {
    (&out * weights).sum()
}

pub fn small_spec(architecture: Architecture) -> DenoiserSpec {
    DenoiserSpec {
        architecture,
        obs_dim: 3,
        action_dim: 2,
        hidden_width: 9,
        hidden_layers: 3,
        embed_dim: 6,
        time_embed_dim: 4,
        steps: 20,
    }
}

/// Worst relative gradient error of a freshly initialised denoiser under a
/// random linear probe loss, with some rows conditioning-masked.
pub fn denoiser_grad_error(architecture: Architecture, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let mut model = Denoiser::new(small_spec(architecture), &mut rng).unwrap();
    let obs = random(5, 3, &mut rng);
    let act = random(5, 2, &mut rng);
    let taus: Vec<usize> = (0..5).map(|_| rng.gen_range(1..=20)).collect();
    let masked = [false, true, false, false, true];
    let weights = random(5, 2, &mut rng);
    let report = check_gradients(
        &mut model,
        GRAD_STEP,
        GRAD_FLOOR,
        |m| Ok(probe(m.predict(obs.view(), act.view(), &taus, &masked)?.view(), &weights)),
        |m| {
            let (_, tape) = m.forward_train(obs.view(), act.view(), &taus, &masked)?;
            m.backward(&tape, weights.view())
        },
    )
    .unwrap();
    assert_eq!(report.checked, model.param_count());
    report.max_rel_error
}

pub fn mlp_grad_error(hidden: Activation, seed: u64) -> f64 {
    let mut rng = seeded(seed);
    let mut model = Mlp::build(&[4, 7, 7, 3], hidden, &mut rng).unwrap();
    let x = random(6, 4, &mut rng);
    let weights = random(6, 3, &mut rng);
    check_gradients(
        &mut model,
        GRAD_STEP,
        GRAD_FLOOR,
        |m| Ok(probe(m.forward(x.view())?.view(), &weights)),
        |m| {
            let (_, tape) = m.forward_train(x.view())?;
            m.backward(&tape, weights.view()).map(|_| ())
        },
    )
    .unwrap()
    .max_rel_error
}

fn euclid(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Exhaustive optimum for two equal-size uniform clouds. The transport
/// polytope's vertices are permutation matrices, so the best permutation is
/// the LP optimum.
pub fn emd_by_permutations(p: ArrayView2<f64>, q: ArrayView2<f64>) -> f64 {
    let n = p.nrows();
    assert_eq!(n, q.nrows());
    permutations(n)
        .iter()
        .map(|perm| perm.iter().enumerate().map(|(i, &j)| euclid(p.row(i), q.row(j))).sum::<f64>() / n as f64)
        .fold(f64::INFINITY, f64::min)
}

/// Quadratic Density & Coverage with fully sorted neighbour lists.
pub fn density_coverage_brute(real: ArrayView2<f64>, fake: ArrayView2<f64>, k: usize) -> (f64, f64) {
    let n = real.nrows();
    let radii: Vec<f64> = (0..n)
        .map(|i| {
            let mut d: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| euclid(real.row(i), real.row(j))).collect();
            d.sort_by(f64::total_cmp);
            d[k - 1]
        })
        .collect();
    let mut count = 0usize;
    let mut covered = 0usize;
    for i in 0..n {
        let mut hit = false;
        for f in fake.rows() {
            if euclid(f, real.row(i)) <= radii[i] {
                count += 1;
                hit = true;
            }
        }
        covered += hit as usize;
    }
    (count as f64 / (k * fake.nrows()) as f64, covered as f64 / n as f64)
}

/// Random cloud; on even instances coordinates sit on a coarse integer grid
/// so ties and duplicate points are common.
pub fn oracle_cloud(rows: usize, dim: usize, gridded: bool, rng: &mut impl Rng) -> Array2<f64> {
    if gridded {
        Array2::from_shape_fn((rows, dim), |_| rng.gen_range(0..4) as f64)
    } else {
        random(rows, dim, rng)
    }
}
