//! Feed-forward dual encoder with a hand-written backward pass.
//!
//! Queries and documents go through the same [`Encoder`]; the score of a
//! pair is the dot product of their embeddings.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::{Mat, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation value.
    fn derivative(self, pre: f64, post: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - post * post,
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `out × in`
    pub weight: Mat,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Encoder {
    layers: Vec<Layer>,
    /// Applied after every layer except the last.
    activation: Activation,
}

/// Activations recorded by [`Encoder::encode`] for the backward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    /// Input to each layer; `inputs[0]` is the feature vector.
    inputs: Vec<Vec<f64>>,
    /// Pre-activation of each hidden layer.
    pre: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderGrad {
    pub weights: Vec<Mat>,
    pub biases: Vec<Vec<f64>>,
    /// Number of backprop calls accumulated since the last reset.
    pub count: usize,
}

impl Encoder {
    pub fn from_layers(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("encoder needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.rows() {
                return Err(Error::Shape(format!("layer {i}: bias length != weight rows")));
            }
            if i > 0 && layers[i - 1].weight.rows() != l.weight.cols() {
                return Err(Error::Shape(format!("layer {i}: input dim does not match previous output")));
            }
        }
        Ok(Self { layers, activation })
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(dims: &[usize], activation: Activation, rng: &mut Rng) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(Error::Config(format!("invalid encoder dims {dims:?}")));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let values = (0..fan_in * fan_out)
                    .map(|_| rng.uniform_range(-bound, bound))
                    .collect();
                Layer {
                    weight: Mat::from_vec(fan_out, fan_in, values).expect("shape by construction"),
                    bias: vec![0.0; fan_out],
                }
            })
            .collect();
        Self::from_layers(layers, activation)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.rows()
    }

    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weight.rows()))
            .collect()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.values().len() + l.bias.len()).sum()
    }

    /// Forward pass without recording a tape.
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.input_dim(), "encode: input dimension mismatch");
        let last = self.layers.len() - 1;
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weight.matvec(&h);
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
            }
            if i < last {
                for zi in &mut z {
                    *zi = self.activation.apply(*zi);
                }
            }
            h = z;
        }
        h
    }

    pub fn encode(&self, x: &[f64]) -> (Vec<f64>, Tape) {
        assert_eq!(x.len(), self.input_dim(), "encode: input dimension mismatch");
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(last);
        let mut h = x.to_vec();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut z = layer.weight.matvec(&h);
            for (zi, b) in z.iter_mut().zip(&layer.bias) {
                *zi += b;
            }
            inputs.push(h);
            if i < last {
                let post = z.iter().map(|&v| self.activation.apply(v)).collect();
                pre.push(z);
                h = post;
            } else {
                h = z;
            }
        }
        (h, Tape { inputs, pre })
    }

    /// Accumulates `∂(upstream · g(x))/∂θ` into `grad` and returns the
    /// gradient with respect to `x`.
    pub fn backprop(&self, tape: &Tape, upstream: &[f64], grad: &mut EncoderGrad) -> Vec<f64> {
        assert_eq!(tape.inputs.len(), self.layers.len(), "backprop: tape from a different encoder");
        assert_eq!(upstream.len(), self.output_dim(), "backprop: upstream dimension mismatch");
        assert_eq!(grad.weights.len(), self.layers.len(), "backprop: gradient shape mismatch");
        grad.count += 1;
        let mut delta = upstream.to_vec();
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            let input = &tape.inputs[i];
            grad.weights[i].add_outer(1.0, &delta, input);
            for (gb, d) in grad.biases[i].iter_mut().zip(&delta) {
                *gb += d;
            }
            let mut back = layer.weight.matvec_t(&delta);
            if i > 0 {
                let pre = &tape.pre[i - 1];
                for ((b, &p), &post) in back.iter_mut().zip(pre).zip(input) {
                    *b *= self.activation.derivative(p, post);
                }
            }
            delta = back;
        }
        delta
    }

    pub fn zero_grad(&self) -> EncoderGrad {
        EncoderGrad {
            weights: self
                .layers
                .iter()
                .map(|l| Mat::zeros(l.weight.rows(), l.weight.cols()))
                .collect(),
            biases: self.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect(),
            count: 0,
        }
    }

    /// Parameters as mutable slices, in a fixed order (w0, b0, w1, b1, ...).
    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(2 * self.layers.len());
        for l in &mut self.layers {
            out.push(l.weight.values_mut());
            out.push(l.bias.as_mut_slice());
        }
        out
    }

    /// Lengths of the slices returned by [`Encoder::param_slices_mut`].
    pub fn slice_lens(&self) -> Vec<usize> {
        self.layers
            .iter()
            .flat_map(|l| [l.weight.values().len(), l.bias.len()])
            .collect()
    }

    pub fn flat_params(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.values());
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn set_flat_params(&mut self, params: &[f64]) {
        assert_eq!(params.len(), self.param_count(), "set_flat_params: length mismatch");
        let mut it = params.iter().copied();
        for s in self.param_slices_mut() {
            for v in s.iter_mut() {
                *v = it.next().expect("length checked");
            }
        }
    }

    /// SHA-256 over the parameter bit patterns.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for v in self.flat_params() {
            h.update(v.to_bits().to_le_bytes());
        }
        hex_digest(h)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&EncoderFile::from(self))?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let f: EncoderFile = serde_json::from_str(s)?;
        f.into_encoder()
    }
}

pub(crate) fn hex_digest(h: Sha256) -> String {
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

impl EncoderGrad {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(2 * self.weights.len());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.push(w.values());
            out.push(b.as_slice());
        }
        out
    }

    pub fn flat(&self) -> Vec<f64> {
        self.slices().concat()
    }

    pub fn reset(&mut self) {
        for w in &mut self.weights {
            w.values_mut().fill(0.0);
        }
        for b in &mut self.biases {
            b.fill(0.0);
        }
        self.count = 0;
    }

    pub fn is_zero(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|&v| v == 0.0))
    }
}

pub const ENCODER_FORMAT_VERSION: u32 = 1;

/// Versioned on-disk form of an encoder.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderFile {
    pub version: u32,
    pub dims: Vec<usize>,
    pub activation: Activation,
    pub layers: Vec<LayerFile>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

impl From<&Encoder> for EncoderFile {
    fn from(e: &Encoder) -> Self {
        Self {
            version: ENCODER_FORMAT_VERSION,
            dims: e.dims(),
            activation: e.activation,
            layers: e
                .layers
                .iter()
                .map(|l| LayerFile {
                    weight: l.weight.values().to_vec(),
                    bias: l.bias.clone(),
                })
                .collect(),
        }
    }
}

impl EncoderFile {
    pub fn into_encoder(self) -> Result<Encoder> {
        if self.version != ENCODER_FORMAT_VERSION {
            return Err(Error::Usage(format!("unsupported encoder version {}", self.version)));
        }
        if self.dims.len() != self.layers.len() + 1 {
            return Err(Error::Shape("dims do not match layer count".into()));
        }
        let layers = self
            .layers
            .into_iter()
            .zip(self.dims.windows(2))
            .map(|(l, w)| {
                Ok(Layer {
                    weight: Mat::from_vec(w[1], w[0], l.weight)?,
                    bias: l.bias,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Encoder::from_layers(layers, self.activation)
    }
}
