use ndarray::{s, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kmeans::kmeans_fit;
use crate::envs::{DemoDataset, Normalizer};
use crate::error::{Error, Result};
use crate::nnet::{minibatches, Activation, Adam, AdamConfig, Mlp, Parameterized, TrainConfig};
use crate::rng::SeedTree;
use crate::samplers::log_sum_exp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineKind {
    Mse,
    Discretised,
    Kmeans,
    KmeansResidual,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaselineConfig {
    pub hidden_width: usize,
    pub hidden_layers: usize,
    /// Bins per action dimension for `Discretised`.
    pub bins: usize,
    /// Cluster count for the k-means variants.
    pub clusters: usize,
    pub kmeans_iters: usize,
    /// Weight of the residual MSE term relative to the classification loss.
    pub residual_weight: f64,
    pub train: TrainConfig,
}

/// Head metadata; everything lives in normalised action space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BaselineHead {
    Mse,
    /// `bins + 1` strictly increasing edges per action dimension.
    Discretised { edges: Vec<Vec<f64>> },
    Kmeans { centroids: Vec<Vec<f64>> },
    KmeansResidual { centroids: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct BaselineModel {
    pub kind: BaselineKind,
    pub trunk: Mlp,
    pub head: BaselineHead,
    pub normalizer: Normalizer,
}

/// Raw head outputs for one observation.
#[derive(Debug, Clone, PartialEq)]
pub enum HeadOutputs {
    Point(Vec<f64>),
    /// Logits per action dimension.
    PerDim(Vec<Vec<f64>>),
    Clusters { logits: Vec<f64>, residuals: Option<Array2<f64>> },
}

fn uniform_edges(bins: usize, dims: usize) -> Vec<Vec<f64>> {
    let e: Vec<f64> = (0..=bins).map(|i| -1.0 + 2.0 * i as f64 / bins as f64).collect();
    vec![e; dims]
}

fn softmax(logits: ArrayView1<f64>) -> Vec<f64> {
    let lse = log_sum_exp(logits.as_slice().expect("contiguous"));
    logits.iter().map(|l| (l - lse).exp()).collect()
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let mut u = rng.gen::<f64>();
    for (i, &p) in probs.iter().enumerate() {
        if u < p {
            return i;
        }
        u -= p;
    }
    probs.len() - 1
}

fn bin_of(edges: &[f64], x: f64) -> usize {
    let bins = edges.len() - 1;
    edges[1..bins].iter().take_while(|&&e| x >= e).count()
}

fn centroid_table(c: &[Vec<f64>]) -> Array2<f64> {
    let d = c.first().map_or(0, Vec::len);
    Array2::from_shape_fn((c.len(), d), |(i, j)| c[i][j])
}

impl BaselineModel {
    pub fn action_dim(&self) -> usize {
        self.normalizer.dim()
    }

    pub fn output_width(kind: BaselineKind, head: &BaselineHead, action_dim: usize) -> usize {
        match (kind, head) {
            (BaselineKind::Mse, _) => action_dim,
            (BaselineKind::Discretised, BaselineHead::Discretised { edges }) => {
                edges.iter().map(|e| e.len() - 1).sum()
            }
            (BaselineKind::Kmeans, BaselineHead::Kmeans { centroids }) => centroids.len(),
            (BaselineKind::KmeansResidual, BaselineHead::KmeansResidual { centroids }) => {
                centroids.len() * (1 + action_dim)
            }
            _ => 0,
        }
    }

    /// Checks the head metadata against the trunk.
    pub fn validate(&self) -> Result<()> {
        let d = self.action_dim();
        let want = Self::output_width(self.kind, &self.head, d);
        if want == 0 || want != self.trunk.output_dim() {
            return Err(Error::Shape(format!(
                "{:?} head expects {want} outputs, trunk has {}",
                self.kind,
                self.trunk.output_dim()
            )));
        }
        match &self.head {
            BaselineHead::Discretised { edges } => {
                if edges.len() != d {
                    return Err(Error::Shape("one edge list per action dimension".into()));
                }
                for e in edges {
                    if e.len() < 2 || e.windows(2).any(|w| w[1] <= w[0]) {
                        return Err(Error::Shape("bin edges must be strictly increasing".into()));
                    }
                }
            }
            BaselineHead::Kmeans { centroids } | BaselineHead::KmeansResidual { centroids } => {
                if centroids.is_empty() || centroids.iter().any(|c| c.len() != d || c.iter().any(|v| !v.is_finite())) {
                    return Err(Error::Shape("centroids must be finite and match the action width".into()));
                }
            }
            BaselineHead::Mse => {}
        }
        Ok(())
    }

    pub fn head_outputs(&self, obs: &[f64]) -> Result<HeadOutputs> {
        let out = self.trunk.forward_one(obs)?;
        let d = self.action_dim();
        Ok(match &self.head {
            BaselineHead::Mse => HeadOutputs::Point(out),
            BaselineHead::Discretised { edges } => {
                let mut per = Vec::with_capacity(d);
                let mut off = 0;
                for e in edges {
                    let b = e.len() - 1;
                    per.push(out[off..off + b].to_vec());
                    off += b;
                }
                HeadOutputs::PerDim(per)
            }
            BaselineHead::Kmeans { centroids } => HeadOutputs::Clusters {
                logits: out[..centroids.len()].to_vec(),
                residuals: None,
            },
            BaselineHead::KmeansResidual { centroids } => {
                let k = centroids.len();
                let res = Array2::from_shape_vec((k, d), out[k..].to_vec()).map_err(|e| Error::Shape(e.to_string()))?;
                HeadOutputs::Clusters {
                    logits: out[..k].to_vec(),
                    residuals: Some(res),
                }
            }
        })
    }

    /// Samples in normalised action space.
    pub fn sample_normalized<R: Rng + ?Sized>(&self, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
        match (self.head_outputs(obs)?, &self.head) {
            (HeadOutputs::Point(p), _) => Ok(p),
            (HeadOutputs::PerDim(logits), BaselineHead::Discretised { edges }) => Ok(logits
                .iter()
                .zip(edges)
                .map(|(l, e)| {
                    let b = categorical(&softmax(ArrayView1::from(l)), rng);
                    0.5 * (e[b] + e[b + 1])
                })
                .collect()),
            (HeadOutputs::Clusters { logits, residuals }, BaselineHead::Kmeans { centroids })
            | (HeadOutputs::Clusters { logits, residuals }, BaselineHead::KmeansResidual { centroids }) => {
                let k = categorical(&softmax(ArrayView1::from(&logits)), rng);
                let mut a = centroids[k].clone();
                if let Some(r) = residuals {
                    for (x, dr) in a.iter_mut().zip(r.row(k)) {
                        *x += dr;
                    }
                }
                Ok(a)
            }
            _ => Err(Error::State("head outputs do not match head metadata".into())),
        }
    }
}

/// Draws one action in environment units.
pub fn sample_baseline<R: Rng + ?Sized>(model: &BaselineModel, obs: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let a = model.sample_normalized(obs, rng)?;
    Ok(model.normalizer.denormalize(&a))
}

/// Loss and output-gradient for one batch of trunk outputs.
fn head_loss(model: &BaselineModel, out: ArrayView2<f64>, targets: ArrayView2<f64>, labels: &[usize], residual_weight: f64) -> (f64, Array2<f64>) {
    let n = out.nrows() as f64;
    let d = targets.ncols();
    let mut grad = Array2::zeros(out.dim());
    let mut loss = 0.0;
    let mut ce = |logits: ArrayView1<f64>, target: usize, mut g: ndarray::ArrayViewMut1<f64>| {
        let p = softmax(logits);
        loss -= p[target].max(f64::MIN_POSITIVE).ln() / n;
        for (gi, pi) in g.iter_mut().zip(&p) {
            *gi = pi / n;
        }
        g[target] -= 1.0 / n;
    };
    match &model.head {
        BaselineHead::Mse => {
            let diff = &out - &targets;
            loss = diff.iter().map(|v| v * v).sum::<f64>() / n;
            grad = diff * (2.0 / n);
        }
        BaselineHead::Discretised { edges } => {
            for i in 0..out.nrows() {
                let mut off = 0;
                for (j, e) in edges.iter().enumerate() {
                    let b = e.len() - 1;
                    let t = bin_of(e, targets[[i, j]]);
                    ce(out.slice(s![i, off..off + b]), t, grad.slice_mut(s![i, off..off + b]));
                    off += b;
                }
            }
        }
        BaselineHead::Kmeans { centroids } => {
            let k = centroids.len();
            for i in 0..out.nrows() {
                ce(out.slice(s![i, ..k]), labels[i], grad.slice_mut(s![i, ..k]));
            }
        }
        BaselineHead::KmeansResidual { centroids } => {
            let k = centroids.len();
            for i in 0..out.nrows() {
                ce(out.slice(s![i, ..k]), labels[i], grad.slice_mut(s![i, ..k]));
            }
            let mut mse = 0.0;
            for i in 0..out.nrows() {
                let c = &centroids[labels[i]];
                let base = k + labels[i] * d;
                for j in 0..d {
                    let r = out[[i, base + j]] - (targets[[i, j]] - c[j]);
                    mse += r * r / n;
                    grad[[i, base + j]] = residual_weight * 2.0 * r / n;
                }
            }
            loss += residual_weight * mse;
        }
    }
    (loss, grad)
}

/// Fits head metadata, then trains the trunk with Adam on normalised actions.
/// Returns the model and the mean training loss of every epoch.
pub fn train_baseline(
    kind: BaselineKind,
    data: &DemoDataset,
    cfg: &BaselineConfig,
    seeds: &SeedTree,
) -> Result<(BaselineModel, Vec<f64>)> {
    if data.is_empty() {
        return Err(Error::config("data.n", "empty dataset"));
    }
    if cfg.train.batch_size == 0 || cfg.hidden_width == 0 {
        return Err(Error::config("train.batch_size", "batch size and widths must be positive"));
    }
    let normalizer = data.normalizer();
    let targets = normalizer.normalize_rows(data.actions());
    let d = data.action_dim();
    let head = match kind {
        BaselineKind::Mse => BaselineHead::Mse,
        BaselineKind::Discretised => {
            if cfg.bins == 0 {
                return Err(Error::config("baseline.bins", "need at least one bin"));
            }
            BaselineHead::Discretised {
                edges: uniform_edges(cfg.bins, d),
            }
        }
        BaselineKind::Kmeans | BaselineKind::KmeansResidual => {
            let c = kmeans_fit(targets.view(), cfg.clusters, cfg.kmeans_iters, &mut seeds.stream("kmeans"))?;
            let rows: Vec<Vec<f64>> = c.points.rows().into_iter().map(|r| r.to_vec()).collect();
            if kind == BaselineKind::Kmeans {
                BaselineHead::Kmeans { centroids: rows }
            } else {
                BaselineHead::KmeansResidual { centroids: rows }
            }
        }
    };
    let out_dim = BaselineModel::output_width(kind, &head, d);
    let mut widths = vec![data.obs_dim()];
    widths.extend(std::iter::repeat_n(cfg.hidden_width, cfg.hidden_layers));
    widths.push(out_dim);
    let trunk = Mlp::build(&widths, Activation::Gelu, &mut seeds.stream("init"))?;
    let mut model = BaselineModel {
        kind,
        trunk,
        head,
        normalizer,
    };
    model.validate()?;

    let labels: Vec<usize> = match &model.head {
        BaselineHead::Kmeans { centroids } | BaselineHead::KmeansResidual { centroids } => {
            let table = centroid_table(centroids);
            let c = super::Centroids {
                points: table,
                counts: Vec::new(),
                distortion: Vec::new(),
            };
            targets.rows().into_iter().map(|r| c.nearest(r)).collect()
        }
        _ => Vec::new(),
    };

    let mut opt = Adam::new(AdamConfig {
        lr: cfg.train.lr,
        ..AdamConfig::default()
    });
    let mut rng = seeds.stream("train");
    let total = cfg.train.total_steps(data.len());
    let mut step = 0;
    let mut curve = Vec::with_capacity(cfg.train.epochs);
    for _ in 0..cfg.train.epochs {
        let mut sum = 0.0;
        let batches = minibatches(data.len(), cfg.train.batch_size, &mut rng);
        for idx in &batches {
            let obs = data.observations().select(Axis(0), idx);
            let tgt = targets.select(Axis(0), idx);
            let lab: Vec<usize> = if labels.is_empty() { Vec::new() } else { idx.iter().map(|&i| labels[i]).collect() };
            let (out, tape) = model.trunk.forward_train(obs.view())?;
            let (loss, grad) = head_loss(&model, out.view(), tgt.view(), &lab, cfg.residual_weight);
            if !loss.is_finite() {
                return Err(Error::Training {
                    layer: None,
                    msg: format!("non-finite loss {loss}"),
                });
            }
            sum += loss;
            model.trunk.zero_grad();
            model.trunk.backward(&tape, grad.view())?;
            let lr = cfg.train.lr_schedule.rate(cfg.train.lr, step, total);
            opt.step_with_lr(&mut model.trunk.layers_mut(), lr)?;
            step += 1;
        }
        curve.push(sum / batches.len() as f64);
    }
    Ok((model, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nnet::{Dense, LrSchedule};
    use crate::rng::seeded;

    fn cfg(epochs: usize) -> BaselineConfig {
        BaselineConfig {
            hidden_width: 32,
            hidden_layers: 2,
            bins: 20,
            clusters: 4,
            kmeans_iters: 100,
            residual_weight: 1.0,
            train: TrainConfig {
                epochs,
                batch_size: 32,
                lr: 3e-3,
                lr_schedule: LrSchedule::Constant,
            },
        }
    }

    fn repeated(obs: &[Vec<f64>], act: &[Vec<f64>], copies: usize) -> DemoDataset {
        let n = obs.len() * copies;
        let o = Array2::from_shape_fn((n, obs[0].len()), |(i, j)| obs[i % obs.len()][j]);
        let a = Array2::from_shape_fn((n, act[0].len()), |(i, j)| act[i % act.len()][j]);
        DemoDataset::new(o, a).unwrap()
    }

    #[test]
    fn mse_fits_a_single_target() {
        // Two distinct actions in different dims keep the normaliser non-degenerate.
        let data = repeated(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![0.2, 0.7], vec![0.6, 0.1]], 64);
        let (m, curve) = train_baseline(BaselineKind::Mse, &data, &cfg(60), &SeedTree::new(1)).unwrap();
        let a = sample_baseline(&m, &[1.0, 0.0], &mut seeded(0)).unwrap();
        assert!((a[0] - 0.2).abs() < 0.02 && (a[1] - 0.7).abs() < 0.02, "{a:?}");
        assert!(curve.last().unwrap() < &curve[0]);
        let again = sample_baseline(&m, &[1.0, 0.0], &mut seeded(99)).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn mse_averages_symmetric_modes() {
        let data = repeated(&[vec![1.0], vec![1.0]], &[vec![-0.8], vec![0.8]], 128);
        let (m, _) = train_baseline(BaselineKind::Mse, &data, &cfg(40), &SeedTree::new(2)).unwrap();
        let a = sample_baseline(&m, &[1.0], &mut seeded(0)).unwrap();
        assert!(a[0].abs() < 0.08, "{a:?}");
    }

    #[test]
    fn discretised_separable_toy() {
        let data = repeated(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![-0.9, 0.55], vec![0.33, -0.71]], 64);
        let (m, _) = train_baseline(BaselineKind::Discretised, &data, &cfg(40), &SeedTree::new(3)).unwrap();
        let BaselineHead::Discretised { edges } = &m.head else { panic!() };
        let mut correct = 0;
        let mut total = 0;
        for i in 0..data.len() {
            let HeadOutputs::PerDim(l) = m.head_outputs(data.observation(i)).unwrap() else { panic!() };
            let t = m.normalizer.normalize(data.action(i));
            for (j, lj) in l.iter().enumerate() {
                total += 1;
                if crate::samplers::argmax_first(lj) == Some(bin_of(&edges[j], t[j])) {
                    correct += 1;
                }
            }
        }
        assert!(correct as f64 / total as f64 >= 0.99);
    }

    #[test]
    fn bin_edges_and_lookup() {
        let e = &uniform_edges(20, 1)[0];
        assert_eq!(e.len(), 21);
        assert_eq!(e[0], -1.0);
        assert_eq!(e[20], 1.0);
        assert_eq!(bin_of(e, -1.0), 0);
        assert_eq!(bin_of(e, 1.0), 19);
        assert_eq!(bin_of(e, 0.0), 10);
        assert_eq!(bin_of(e, -0.95), 0);
        assert_eq!(bin_of(e, -0.9), 1);
    }

    fn fixed_model(kind: BaselineKind, head: BaselineHead, out: usize) -> BaselineModel {
        let mut rng = seeded(8);
        let trunk = Mlp::build(&[2, 6, out], Activation::Gelu, &mut rng).unwrap();
        BaselineModel {
            kind,
            trunk,
            head,
            normalizer: Normalizer::identity(2),
        }
    }

    #[test]
    fn discretised_frequencies_follow_softmax() {
        let m = fixed_model(BaselineKind::Discretised, BaselineHead::Discretised { edges: uniform_edges(4, 2) }, 8);
        m.validate().unwrap();
        let obs = [0.3, -0.6];
        let HeadOutputs::PerDim(l) = m.head_outputs(&obs).unwrap() else { panic!() };
        let p0 = softmax(ArrayView1::from(&l[0]));
        let p1 = softmax(ArrayView1::from(&l[1]));
        let centers = [-0.75, -0.25, 0.25, 0.75];
        let mut c0 = [0usize; 4];
        let mut c1 = [0usize; 4];
        let mut rng = seeded(1);
        let n = 10_000;
        for _ in 0..n {
            let a = m.sample_normalized(&obs, &mut rng).unwrap();
            c0[centers.iter().position(|&c| c == a[0]).unwrap()] += 1;
            c1[centers.iter().position(|&c| c == a[1]).unwrap()] += 1;
        }
        for (counts, p) in [(c0, p0), (c1, p1)] {
            let chi2: f64 = counts
                .iter()
                .zip(&p)
                .map(|(&c, &pi)| {
                    let e = pi * n as f64;
                    (c as f64 - e).powi(2) / e
                })
                .sum();
            // 3 degrees of freedom, 99.9% quantile.
            assert!(chi2 < 16.27, "chi2 {chi2}");
        }
    }

    #[test]
    fn residual_sample_is_centroid_plus_residual() {
        let centroids = vec![vec![-0.5, -0.5], vec![0.5, 0.5], vec![0.0, 0.9]];
        let m = fixed_model(BaselineKind::KmeansResidual, BaselineHead::KmeansResidual { centroids: centroids.clone() }, 9);
        m.validate().unwrap();
        let obs = [0.2, 0.1];
        let HeadOutputs::Clusters { logits, residuals } = m.head_outputs(&obs).unwrap() else { panic!() };
        let residuals = residuals.unwrap();
        let mut r1 = seeded(4);
        let a = m.sample_normalized(&obs, &mut r1).unwrap();
        let mut r2 = seeded(4);
        let k = categorical(&softmax(ArrayView1::from(&logits)), &mut r2);
        for j in 0..2 {
            assert_eq!(a[j], centroids[k][j] + residuals[[k, j]]);
        }
    }

    #[test]
    fn zero_residual_head_reduces_to_kmeans() {
        let centroids = vec![vec![-0.5, -0.5], vec![0.5, 0.5], vec![0.0, 0.9]];
        let mut res = fixed_model(BaselineKind::KmeansResidual, BaselineHead::KmeansResidual { centroids: centroids.clone() }, 9);
        let last = res.trunk.dense_mut().last_mut().unwrap();
        last.weight.slice_mut(s![3.., ..]).fill(0.0);
        last.bias.slice_mut(s![3..]).fill(0.0);
        let hidden = res.trunk.dense()[0].clone();
        let out = res.trunk.dense()[1].clone();
        let logit_layer = Dense::from_parts(out.weight.slice(s![..3, ..]).to_owned(), out.bias.slice(s![..3]).to_owned(), out.activation).unwrap();
        let km = BaselineModel {
            kind: BaselineKind::Kmeans,
            trunk: Mlp::new(vec![hidden, logit_layer]).unwrap(),
            head: BaselineHead::Kmeans { centroids },
            normalizer: Normalizer::identity(2),
        };
        km.validate().unwrap();
        let mut ra = seeded(12);
        let mut rb = seeded(12);
        for _ in 0..200 {
            let a = res.sample_normalized(&[0.4, -0.2], &mut ra).unwrap();
            let b = km.sample_normalized(&[0.4, -0.2], &mut rb).unwrap();
            assert_eq!(a, b);
        }
        res.validate().unwrap();
    }

    #[test]
    fn kmeans_baseline_trains() {
        let data = repeated(&[vec![1.0, 0.0], vec![0.0, 1.0]], &[vec![0.1, 0.1], vec![0.9, 0.9], vec![0.1, 0.9], vec![0.9, 0.1]], 32);
        let (m, curve) = train_baseline(BaselineKind::KmeansResidual, &data, &cfg(30), &SeedTree::new(5)).unwrap();
        m.validate().unwrap();
        assert!(curve.last().unwrap() < &curve[0]);
        let (m2, _) = train_baseline(BaselineKind::KmeansResidual, &data, &cfg(30), &SeedTree::new(5)).unwrap();
        assert_eq!(m, m2);
    }
}
