//! Noise-prediction networks.
//!
//! Two wirings are provided:
//!
//! * `BasicMlp` feeds `[a_tau, o, sin(tau)]` straight into a GELU trunk.
//! * `MlpSieve` encodes observation, timestep and action separately into
//!   `embed_dim` vectors, runs the concatenation through a GELU trunk whose
//!   hidden layers after the first are residual (`h <- h + gelu(W [h, tau/T, a_tau] + b)`),
//!   and re-appends the raw `tau/T` and `a_tau` before every layer after the first
//!   and before the output head.
//!
//! Conditioning dropout zeroes the observation code: the raw observation for
//! `BasicMlp`, the observation embedding for `MlpSieve`.

use ndarray::{concatenate, s, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nnet::{Activation, Dense, DenseTape, Mlp, MlpTape, Parameterized, TimeEmbedding};

pub const TIME_EMBED_BASE: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Architecture {
    BasicMlp,
    MlpSieve,
}

impl std::str::FromStr for Architecture {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "basic_mlp" => Ok(Architecture::BasicMlp),
            "mlp_sieve" => Ok(Architecture::MlpSieve),
            _ => Err(Error::config("architecture", format!("unknown architecture `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenoiserSpec {
    pub architecture: Architecture,
    pub obs_dim: usize,
    pub action_dim: usize,
    pub hidden_width: usize,
    pub hidden_layers: usize,
    pub embed_dim: usize,
    pub time_embed_dim: usize,
    /// Number of denoising steps; the raw timestep is fed as `tau / steps`.
    pub steps: usize,
}

impl DenoiserSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("obs_dim", self.obs_dim),
            ("action_dim", self.action_dim),
            ("model.hidden_width", self.hidden_width),
            ("model.hidden_layers", self.hidden_layers),
            ("model.embed_dim", self.embed_dim),
            ("diffusion.steps", self.steps),
        ];
        for (k, v) in positive {
            if v == 0 {
                return Err(Error::config(k, "must be positive"));
            }
        }
        TimeEmbedding::new(self.time_embed_dim, TIME_EMBED_BASE)?;
        Ok(())
    }
}

/// Per-call timestep input: one step shared by all rows, or one per row.
#[derive(Debug, Clone, Copy)]
pub enum Taus<'a> {
    Shared(usize),
    PerRow(&'a [usize]),
}

/// Something that predicts the noise added to a batch of actions.
///
/// Implemented by [`Denoiser`]; tests implement it with closed-form predictors.
pub trait NoiseModel {
    fn obs_dim(&self) -> usize;
    fn action_dim(&self) -> usize;

    /// Encodes one observation once so it can be reused across denoising steps.
    fn condition(&self, obs: &[f64]) -> Result<Vec<f64>>;

    /// Noise prediction for every row of `actions` at step `tau`.
    /// With `masked` the observation code is replaced by zeros.
    fn epsilon(&self, cond: &[f64], actions: ArrayView2<f64>, tau: usize, masked: bool) -> Result<Array2<f64>>;
}

#[derive(Debug, Clone, PartialEq)]
struct Sieve {
    obs_enc: Mlp,
    time_enc: Mlp,
    act_enc: Mlp,
    trunk: Vec<Dense>,
    head: Dense,
}

#[derive(Debug, Clone, PartialEq)]
enum Net {
    Basic(Mlp),
    Sieve(Sieve),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Denoiser {
    spec: DenoiserSpec,
    time: TimeEmbedding,
    net: Net,
}

/// Cached activations for one training batch.
#[derive(Debug)]
pub struct DenoiserTape {
    rows: usize,
    inner: TapeInner,
}

#[derive(Debug)]
enum TapeInner {
    Basic(MlpTape),
    Sieve {
        masked: Vec<bool>,
        obs: MlpTape,
        time: MlpTape,
        act: MlpTape,
        trunk: Vec<DenseTape>,
        head: DenseTape,
    },
}

fn broadcast_rows(x: ArrayView2<f64>, rows: usize) -> Result<Array2<f64>> {
    if x.nrows() == rows {
        return Ok(x.to_owned());
    }
    if x.nrows() != 1 {
        return Err(Error::Shape(format!("cannot broadcast {} rows to {rows}", x.nrows())));
    }
    Ok(x.broadcast((rows, x.ncols())).expect("row broadcast").to_owned())
}

fn row(v: &[f64]) -> ArrayView2<'_, f64> {
    ArrayView2::from_shape((1, v.len()), v).expect("row view")
}

impl Denoiser {
    pub fn new<R: Rng + ?Sized>(spec: DenoiserSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let time = TimeEmbedding::new(spec.time_embed_dim, TIME_EMBED_BASE)?;
        let h = spec.hidden_width;
        let net = match spec.architecture {
            Architecture::BasicMlp => {
                let mut widths = vec![spec.action_dim + spec.obs_dim + spec.time_embed_dim];
                widths.extend(std::iter::repeat_n(h, spec.hidden_layers));
                widths.push(spec.action_dim);
                Net::Basic(Mlp::build(&widths, Activation::Gelu, rng)?)
            }
            Architecture::MlpSieve => {
                let e = spec.embed_dim;
                let obs_enc = Mlp::build(&[spec.obs_dim, e, e], Activation::LeakyRelu, rng)?;
                let time_enc = Mlp::build(&[spec.time_embed_dim, e, e], Activation::LeakyRelu, rng)?;
                let act_enc = Mlp::build(&[spec.action_dim, e, e], Activation::LeakyRelu, rng)?;
                let skip = h + 1 + spec.action_dim;
                let mut trunk = vec![Dense::init(3 * e, h, Activation::Gelu, rng)];
                for _ in 1..spec.hidden_layers {
                    trunk.push(Dense::init(skip, h, Activation::Gelu, rng));
                }
                let head = Dense::init(skip, spec.action_dim, Activation::Identity, rng);
                Net::Sieve(Sieve {
                    obs_enc,
                    time_enc,
                    act_enc,
                    trunk,
                    head,
                })
            }
        };
        Ok(Self { spec, time, net })
    }

    /// Rebuilds a denoiser from layers in [`Parameterized::layers`] order.
    pub fn from_layers(spec: DenoiserSpec, layers: Vec<Dense>) -> Result<Self> {
        let mut model = Self::new(spec, &mut crate::rng::seeded(0))?;
        {
            let slots = model.layers_mut();
            if slots.len() != layers.len() {
                return Err(Error::Shape(format!(
                    "architecture has {} layers, got {}",
                    slots.len(),
                    layers.len()
                )));
            }
            for (i, (slot, l)) in slots.into_iter().zip(layers).enumerate() {
                if slot.weight.dim() != l.weight.dim() || slot.activation != l.activation {
                    return Err(Error::Shape(format!(
                        "layer {i}: expected {:?} {:?}, got {:?} {:?}",
                        slot.weight.dim(),
                        slot.activation,
                        l.weight.dim(),
                        l.activation
                    )));
                }
                *slot = l;
            }
        }
        Ok(model)
    }

    pub fn spec(&self) -> &DenoiserSpec {
        &self.spec
    }

    fn time_features(&self, taus: Taus<'_>, rows: usize) -> Result<(Array2<f64>, Array2<f64>)> {
        let d = self.time.dim();
        let steps = self.spec.steps as f64;
        match taus {
            Taus::Shared(t) => {
                let feats = Array2::from_shape_vec((1, d), self.time.embed(t)).expect("shape");
                let col = Array2::from_elem((1, 1), t as f64 / steps);
                Ok((feats, col))
            }
            Taus::PerRow(ts) => {
                if ts.len() != rows {
                    return Err(Error::Shape(format!("{} timesteps for {rows} rows", ts.len())));
                }
                let mut feats = Array2::zeros((rows, d));
                for (mut r, &t) in feats.rows_mut().into_iter().zip(ts) {
                    self.time.embed_into(t, r.as_slice_mut().expect("contiguous"));
                }
                let col = Array2::from_shape_fn((rows, 1), |(i, _)| ts[i] as f64 / steps);
                Ok((feats, col))
            }
        }
    }

    fn check_actions(&self, a: &ArrayView2<f64>) -> Result<()> {
        if a.ncols() != self.spec.action_dim {
            return Err(Error::Shape(format!(
                "expected {} action dims, got {}",
                self.spec.action_dim,
                a.ncols()
            )));
        }
        crate::nnet::mlp::check_finite(a)
    }

    /// Forward pass on an already-encoded (and already-masked) observation code.
    fn run(&self, code: ArrayView2<f64>, taus: Taus<'_>, a: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_actions(&a)?;
        let n = a.nrows();
        let (feats, col) = self.time_features(taus, n)?;
        match &self.net {
            Net::Basic(mlp) => {
                let x = concatenate![
                    Axis(1),
                    a,
                    broadcast_rows(code, n)?,
                    broadcast_rows(feats.view(), n)?
                ];
                mlp.forward(x.view())
            }
            Net::Sieve(sv) => {
                let te = sv.time_enc.forward(feats.view())?;
                let ae = sv.act_enc.forward(a)?;
                let col = broadcast_rows(col.view(), n)?;
                let x0 = concatenate![
                    Axis(1),
                    broadcast_rows(code, n)?,
                    broadcast_rows(te.view(), n)?,
                    ae
                ];
                let mut h = sv.trunk[0].forward(x0.view())?;
                for layer in &sv.trunk[1..] {
                    let inp = concatenate![Axis(1), h, col, a];
                    h += &layer.forward(inp.view())?;
                }
                let inp = concatenate![Axis(1), h, col, a];
                sv.head.forward(inp.view())
            }
        }
    }

    fn encode(&self, obs: ArrayView2<f64>) -> Result<Array2<f64>> {
        if obs.ncols() != self.spec.obs_dim {
            return Err(Error::Shape(format!(
                "expected {} observation dims, got {}",
                self.spec.obs_dim,
                obs.ncols()
            )));
        }
        match &self.net {
            Net::Basic(_) => {
                crate::nnet::mlp::check_finite(&obs)?;
                Ok(obs.to_owned())
            }
            Net::Sieve(sv) => sv.obs_enc.forward(obs),
        }
    }

    fn code_dim(&self) -> usize {
        match self.net {
            Net::Basic(_) => self.spec.obs_dim,
            Net::Sieve(_) => self.spec.embed_dim,
        }
    }

    /// Evaluation-mode prediction with per-row observations, steps and masks.
    pub fn predict(&self, obs: ArrayView2<f64>, a: ArrayView2<f64>, taus: &[usize], masked: &[bool]) -> Result<Array2<f64>> {
        if obs.nrows() != a.nrows() || masked.len() != a.nrows() {
            return Err(Error::Shape("batch fields disagree on row count".into()));
        }
        let mut code = self.encode(obs)?;
        zero_masked_rows(&mut code, masked);
        self.run(code.view(), Taus::PerRow(taus), a)
    }

    /// Training-mode forward pass; keep the tape for [`Denoiser::backward`].
    pub fn forward_train(
        &self,
        obs: ArrayView2<f64>,
        a: ArrayView2<f64>,
        taus: &[usize],
        masked: &[bool],
    ) -> Result<(Array2<f64>, DenoiserTape)> {
        let n = a.nrows();
        if obs.nrows() != n || masked.len() != n {
            return Err(Error::Shape("batch fields disagree on row count".into()));
        }
        if obs.ncols() != self.spec.obs_dim {
            return Err(Error::Shape(format!(
                "expected {} observation dims, got {}",
                self.spec.obs_dim,
                obs.ncols()
            )));
        }
        self.check_actions(&a)?;
        let (feats, col) = self.time_features(Taus::PerRow(taus), n)?;
        match &self.net {
            Net::Basic(mlp) => {
                let mut o = obs.to_owned();
                zero_masked_rows(&mut o, masked);
                let x = concatenate![Axis(1), a, o, feats];
                let (out, tape) = mlp.forward_train(x.view())?;
                Ok((
                    out,
                    DenoiserTape {
                        rows: n,
                        inner: TapeInner::Basic(tape),
                    },
                ))
            }
            Net::Sieve(sv) => {
                let (mut oe, obs_tape) = sv.obs_enc.forward_train(obs)?;
                zero_masked_rows(&mut oe, masked);
                let (te, time_tape) = sv.time_enc.forward_train(feats.view())?;
                let (ae, act_tape) = sv.act_enc.forward_train(a)?;
                let x0 = concatenate![Axis(1), oe, te, ae];
                let (mut h, t0) = sv.trunk[0].forward_train(x0.view())?;
                let mut trunk = vec![t0];
                for layer in &sv.trunk[1..] {
                    let inp = concatenate![Axis(1), h, col, a];
                    let (z, t) = layer.forward_train(inp.view())?;
                    trunk.push(t);
                    h += &z;
                }
                let inp = concatenate![Axis(1), h, col, a];
                let (out, head) = sv.head.forward_train(inp.view())?;
                Ok((
                    out,
                    DenoiserTape {
                        rows: n,
                        inner: TapeInner::Sieve {
                            masked: masked.to_vec(),
                            obs: obs_tape,
                            time: time_tape,
                            act: act_tape,
                            trunk,
                            head,
                        },
                    },
                ))
            }
        }
    }

    /// Accumulates parameter gradients for `upstream = d(loss)/d(output)`.
    pub fn backward(&mut self, tape: &DenoiserTape, upstream: ArrayView2<f64>) -> Result<()> {
        if upstream.dim() != (tape.rows, self.spec.action_dim) {
            return Err(Error::State(format!(
                "upstream {:?} does not match tape of {} rows",
                upstream.dim(),
                tape.rows
            )));
        }
        let h = self.spec.hidden_width;
        let e = self.spec.embed_dim;
        match (&mut self.net, &tape.inner) {
            (Net::Basic(mlp), TapeInner::Basic(t)) => {
                mlp.backward(t, upstream)?;
            }
            (
                Net::Sieve(sv),
                TapeInner::Sieve {
                    masked,
                    obs,
                    time,
                    act,
                    trunk,
                    head,
                },
            ) => {
                if trunk.len() != sv.trunk.len() {
                    return Err(Error::State("tape depth does not match trunk".into()));
                }
                let g = sv.head.backward(head, upstream)?;
                let mut gh = g.slice(s![.., ..h]).to_owned();
                for (layer, t) in sv.trunk.iter_mut().zip(trunk).skip(1).rev() {
                    let g = layer.backward(t, gh.view())?;
                    gh += &g.slice(s![.., ..h]);
                }
                let gx0 = sv.trunk[0].backward(&trunk[0], gh.view())?;
                let mut g_oe = gx0.slice(s![.., ..e]).to_owned();
                zero_masked_rows(&mut g_oe, masked);
                sv.obs_enc.backward(obs, g_oe.view())?;
                sv.time_enc.backward(time, gx0.slice(s![.., e..2 * e]))?;
                sv.act_enc.backward(act, gx0.slice(s![.., 2 * e..]))?;
            }
            _ => return Err(Error::State("tape was produced by a different architecture".into())),
        }
        Ok(())
    }
}

fn zero_masked_rows(x: &mut Array2<f64>, masked: &[bool]) {
    for (mut r, &m) in x.rows_mut().into_iter().zip(masked) {
        if m {
            r.fill(0.0);
        }
    }
}

impl NoiseModel for Denoiser {
    fn obs_dim(&self) -> usize {
        self.spec.obs_dim
    }

    fn action_dim(&self) -> usize {
        self.spec.action_dim
    }

    fn condition(&self, obs: &[f64]) -> Result<Vec<f64>> {
        Ok(self.encode(row(obs))?.into_raw_vec_and_offset().0)
    }

    fn epsilon(&self, cond: &[f64], actions: ArrayView2<f64>, tau: usize, masked: bool) -> Result<Array2<f64>> {
        if cond.len() != self.code_dim() {
            return Err(Error::Shape(format!(
                "observation code has {} dims, expected {}",
                cond.len(),
                self.code_dim()
            )));
        }
        if masked {
            let zeros = vec![0.0; cond.len()];
            self.run(row(&zeros), Taus::Shared(tau), actions)
        } else {
            self.run(row(cond), Taus::Shared(tau), actions)
        }
    }
}

impl Parameterized for Denoiser {
    fn layers(&self) -> Vec<&Dense> {
        match &self.net {
            Net::Basic(m) => m.dense().iter().collect(),
            Net::Sieve(sv) => sv
                .obs_enc
                .dense()
                .iter()
                .chain(sv.time_enc.dense())
                .chain(sv.act_enc.dense())
                .chain(&sv.trunk)
                .chain(std::iter::once(&sv.head))
                .collect(),
        }
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        match &mut self.net {
            Net::Basic(m) => m.dense_mut().iter_mut().collect(),
            Net::Sieve(sv) => sv
                .obs_enc
                .dense_mut()
                .iter_mut()
                .chain(sv.time_enc.dense_mut().iter_mut())
                .chain(sv.act_enc.dense_mut().iter_mut())
                .chain(sv.trunk.iter_mut())
                .chain(std::iter::once(&mut sv.head))
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use ndarray::array;

    pub(crate) fn spec(arch: Architecture) -> DenoiserSpec {
        DenoiserSpec {
            architecture: arch,
            obs_dim: 3,
            action_dim: 2,
            hidden_width: 8,
            hidden_layers: 3,
            embed_dim: 6,
            time_embed_dim: 4,
            steps: 10,
        }
    }

    #[test]
    fn layer_counts() {
        let b = Denoiser::new(spec(Architecture::BasicMlp), &mut seeded(0)).unwrap();
        assert_eq!(b.layers().len(), 4);
        let s = Denoiser::new(spec(Architecture::MlpSieve), &mut seeded(0)).unwrap();
        assert_eq!(s.layers().len(), 2 + 2 + 2 + 3 + 1);
    }

    #[test]
    fn mask_removes_observation_influence() {
        for arch in [Architecture::BasicMlp, Architecture::MlpSieve] {
            let m = Denoiser::new(spec(arch), &mut seeded(4)).unwrap();
            let a = array![[0.1, -0.4], [0.9, 0.2]];
            let c1 = m.condition(&[1.0, 0.0, 0.0]).unwrap();
            let c2 = m.condition(&[0.0, 0.0, 1.0]).unwrap();
            let u1 = m.epsilon(&c1, a.view(), 3, true).unwrap();
            let u2 = m.epsilon(&c2, a.view(), 3, true).unwrap();
            assert_eq!(u1, u2);
            let k1 = m.epsilon(&c1, a.view(), 3, false).unwrap();
            let k2 = m.epsilon(&c2, a.view(), 3, false).unwrap();
            assert_ne!(k1, k2);
        }
    }

    #[test]
    fn batched_prediction_agrees_with_shared_path() {
        for arch in [Architecture::BasicMlp, Architecture::MlpSieve] {
            let m = Denoiser::new(spec(arch), &mut seeded(9)).unwrap();
            let obs = array![[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]];
            let a = array![[0.3, 0.1], [-0.7, 0.5]];
            let p = m.predict(obs.view(), a.view(), &[5, 5], &[false, false]).unwrap();
            let c = m.condition(&[0.0, 1.0, 0.0]).unwrap();
            let q = m.epsilon(&c, a.view(), 5, false).unwrap();
            for (x, y) in p.iter().zip(q.iter()) {
                assert!((x - y).abs() < 1e-12);
            }
            let (t, _) = m.forward_train(obs.view(), a.view(), &[5, 5], &[false, true]).unwrap();
            let p2 = m.predict(obs.view(), a.view(), &[5, 5], &[false, true]).unwrap();
            assert_eq!(t, p2);
        }
    }

    #[test]
    fn from_layers_round_trips_and_checks_shapes() {
        let m = Denoiser::new(spec(Architecture::MlpSieve), &mut seeded(2)).unwrap();
        let layers: Vec<Dense> = m.layers().into_iter().cloned().collect();
        let back = Denoiser::from_layers(m.spec().clone(), layers.clone()).unwrap();
        assert_eq!(back, m);
        assert!(Denoiser::from_layers(spec(Architecture::BasicMlp), layers).is_err());
    }
}
