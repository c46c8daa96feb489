use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Parameterized;
use crate::error::{Error, Result};

const LEAKY_SLOPE: f64 = 0.01;
const INV_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Gelu,
    LeakyRelu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => 0.5 * x * (1.0 + libm::erf(x * INV_SQRT_2)),
            Activation::LeakyRelu => {
                if x > 0.0 {
                    x
                } else {
                    LEAKY_SLOPE * x
                }
            }
            Activation::Identity => x,
        }
    }

    #[inline]
    pub fn derivative(self, x: f64) -> f64 {
        match self {
            Activation::Gelu => {
                let cdf = 0.5 * (1.0 + libm::erf(x * INV_SQRT_2));
                let pdf = INV_SQRT_2PI * (-0.5 * x * x).exp();
                cdf + x * pdf
            }
            Activation::LeakyRelu => {
                if x > 0.0 {
                    1.0
                } else {
                    LEAKY_SLOPE
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            Activation::Gelu => 0,
            Activation::LeakyRelu => 1,
            Activation::Identity => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Activation::Gelu),
            1 => Some(Activation::LeakyRelu),
            2 => Some(Activation::Identity),
            _ => None,
        }
    }
}

/// A fully connected layer `y = act(W x + b)` with `W` stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
    pub activation: Activation,
    pub grad_weight: Array2<f64>,
    pub grad_bias: Array1<f64>,
}

/// Cached intermediates of one dense forward pass.
#[derive(Debug, Clone)]
pub struct DenseTape {
    input: Array2<f64>,
    pre: Array2<f64>,
}

impl Dense {
    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: Array2::zeros((output, input)),
            bias: Array1::zeros(output),
            activation,
            grad_weight: Array2::zeros((output, input)),
            grad_bias: Array1::zeros(output),
        }
    }

    /// Uniform init in ±sqrt(6 / (in + out)), zero bias.
    pub fn init<R: Rng + ?Sized>(input: usize, output: usize, activation: Activation, rng: &mut R) -> Self {
        let mut layer = Self::zeros(input, output, activation);
        let limit = (6.0 / (input + output) as f64).sqrt();
        layer
            .weight
            .mapv_inplace(|_| rng.gen_range(-limit..=limit));
        layer
    }

    pub fn from_parts(weight: Array2<f64>, bias: Array1<f64>, activation: Activation) -> Result<Self> {
        if weight.nrows() != bias.len() {
            return Err(Error::Shape(format!(
                "weight has {} rows but bias has {} entries",
                weight.nrows(),
                bias.len()
            )));
        }
        let (o, i) = weight.dim();
        Ok(Self {
            weight: weight.as_standard_layout().to_owned(),
            bias,
            activation,
            grad_weight: Array2::zeros((o, i)),
            grad_bias: Array1::zeros(o),
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.nrows()
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len()
    }

    pub fn zero_grad(&mut self) {
        self.grad_weight.fill(0.0);
        self.grad_bias.fill(0.0);
    }

    fn check_input(&self, x: &ArrayView2<f64>) -> Result<()> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "layer expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        Ok(())
    }

    fn pre_activation(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        let mut z = x.dot(&self.weight.t());
        z += &self.bias;
        z
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&x)?;
        let mut z = self.pre_activation(&x);
        if self.activation != Activation::Identity {
            let act = self.activation;
            z.mapv_inplace(|v| act.apply(v));
        }
        Ok(z)
    }

    pub fn forward_train(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, DenseTape)> {
        self.check_input(&x)?;
        let pre = self.pre_activation(&x);
        let act = self.activation;
        let out = if act == Activation::Identity {
            pre.clone()
        } else {
            pre.mapv(|v| act.apply(v))
        };
        Ok((
            out,
            DenseTape {
                input: x.to_owned(),
                pre,
            },
        ))
    }

    /// Accumulates parameter gradients and returns the gradient w.r.t. the input.
    pub fn backward(&mut self, tape: &DenseTape, upstream: ArrayView2<f64>) -> Result<Array2<f64>> {
        if tape.pre.dim() != upstream.dim() || tape.input.ncols() != self.input_dim() {
            return Err(Error::State(format!(
                "tape of shape {:?} does not match upstream {:?} for layer {}x{}",
                tape.pre.dim(),
                upstream.dim(),
                self.output_dim(),
                self.input_dim()
            )));
        }
        let act = self.activation;
        let delta = if act == Activation::Identity {
            upstream.to_owned()
        } else {
            let mut d = upstream.to_owned();
            d.zip_mut_with(&tape.pre, |g, &z| *g *= act.derivative(z));
            d
        };
        self.grad_weight += &delta.t().dot(&tape.input);
        self.grad_bias += &delta.sum_axis(Axis(0));
        Ok(delta.dot(&self.weight))
    }
}

/// A plain feed-forward stack of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Dense>,
}

/// Per-layer cached activations of an [`Mlp`] forward pass.
#[derive(Debug, Clone)]
pub struct MlpTape {
    layers: Vec<DenseTape>,
}

impl Mlp {
    pub fn new(layers: Vec<Dense>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("an MLP needs at least one layer".into()));
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].output_dim() != pair[1].input_dim() {
                return Err(Error::Shape(format!(
                    "layer {} outputs {} but layer {} expects {}",
                    i,
                    pair[0].output_dim(),
                    i + 1,
                    pair[1].input_dim()
                )));
            }
        }
        Ok(Self { layers })
    }

    /// `widths = [in, h1, ..., out]`; hidden layers use `hidden`, the last is linear.
    pub fn build<R: Rng + ?Sized>(widths: &[usize], hidden: Activation, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 || widths.contains(&0) {
            return Err(Error::config("widths", format!("invalid layer widths {widths:?}")));
        }
        let n = widths.len() - 1;
        let layers = (0..n)
            .map(|i| {
                let act = if i + 1 == n { Activation::Identity } else { hidden };
                Dense::init(widths[i], widths[i + 1], act, rng)
            })
            .collect();
        Self::new(layers)
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].output_dim()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn dense(&self) -> &[Dense] {
        &self.layers
    }

    pub fn dense_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn forward(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        check_finite(&x)?;
        let mut h = self.layers[0].forward(x)?;
        for l in &self.layers[1..] {
            h = l.forward(h.view())?;
        }
        Ok(h)
    }

    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        let view = ArrayView2::from_shape((1, x.len()), x).expect("row view");
        Ok(self.forward(view)?.into_raw_vec_and_offset().0)
    }

    pub fn forward_train(&self, x: ArrayView2<f64>) -> Result<(Array2<f64>, MlpTape)> {
        check_finite(&x)?;
        let mut tapes = Vec::with_capacity(self.layers.len());
        let (mut h, t) = self.layers[0].forward_train(x)?;
        tapes.push(t);
        for l in &self.layers[1..] {
            let (next, t) = l.forward_train(h.view())?;
            tapes.push(t);
            h = next;
        }
        Ok((h, MlpTape { layers: tapes }))
    }

    /// Accumulates into the gradient buffers and returns d(loss)/d(input).
    pub fn backward(&mut self, tape: &MlpTape, upstream: ArrayView2<f64>) -> Result<Array2<f64>> {
        if tape.layers.len() != self.layers.len() {
            return Err(Error::State(format!(
                "tape holds {} layers, model has {}",
                tape.layers.len(),
                self.layers.len()
            )));
        }
        let mut g = upstream.to_owned();
        for (layer, t) in self.layers.iter_mut().zip(&tape.layers).rev() {
            g = layer.backward(t, g.view())?;
        }
        Ok(g)
    }
}

impl Parameterized for Mlp {
    fn layers(&self) -> Vec<&Dense> {
        self.layers.iter().collect()
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        self.layers.iter_mut().collect()
    }
}

pub(crate) fn check_finite(x: &ArrayView2<f64>) -> Result<()> {
    if let Some(pos) = x.iter().position(|v| !v.is_finite()) {
        return Err(Error::Domain(format!("input element {pos} is not finite")));
    }
    Ok(())
}
