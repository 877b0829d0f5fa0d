//! Dense feed-forward networks with hand-written reverse-mode gradients.
//!
//! A [`DenseNet`] is a fixed MLP topology: ReLU on every hidden layer and a
//! configurable output activation (identity for critics, tanh for policies).
//! Weights are stored `[fan_in × fan_out]` so a batch forward pass is
//! `X · W + b` with one sample per row.

mod adam;
mod serial;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::{Error, Result};

pub use adam::{Adam, AdamConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputActivation {
    Identity,
    Tanh,
}

impl OutputActivation {
    fn code(self) -> u8 {
        match self {
            OutputActivation::Identity => 0,
            OutputActivation::Tanh => 1,
        }
    }

    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(OutputActivation::Identity),
            1 => Some(OutputActivation::Tanh),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weights: Array2<f64>,
    pub bias: Array1<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseNet {
    sizes: Vec<usize>,
    layers: Vec<Layer>,
    output: OutputActivation,
}

/// Per-layer gradient buffers, shape-congruent with the owning network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    pub fn flatten(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }
}

/// Forward-pass context required by [`DenseNet::backward`].
///
/// Holds the input of every layer (the batch itself for layer 0) plus the
/// network output. ReLU masks are recovered from the stored activations.
#[derive(Debug, Clone)]
pub struct Tape {
    sizes: Vec<usize>,
    layer_inputs: Vec<Array2<f64>>,
    output: Array2<f64>,
}

impl Tape {
    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }
}

#[derive(Debug, Clone)]
pub struct Backward {
    pub grads: Gradients,
    pub input_grad: Array2<f64>,
}

impl DenseNet {
    /// Builds a network with weights and biases drawn from
    /// `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn new<R: Rng + ?Sized>(
        sizes: &[usize],
        output: OutputActivation,
        rng: &mut R,
    ) -> Result<Self> {
        validate_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let weights = Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(rng));
                let bias = Array1::from_shape_simple_fn(fan_out, || dist.sample(rng));
                Layer { weights, bias }
            })
            .collect();
        Ok(DenseNet {
            sizes: sizes.to_vec(),
            layers,
            output,
        })
    }

    pub fn zeros(sizes: &[usize], output: OutputActivation) -> Result<Self> {
        validate_sizes(sizes)?;
        let layers = sizes
            .windows(2)
            .map(|w| Layer {
                weights: Array2::zeros((w[0], w[1])),
                bias: Array1::zeros(w[1]),
            })
            .collect();
        Ok(DenseNet {
            sizes: sizes.to_vec(),
            layers,
            output,
        })
    }

    pub fn from_layers(layers: Vec<Layer>, output: OutputActivation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Shape("network needs at least one layer".into()));
        }
        let mut sizes = vec![layers[0].weights.nrows()];
        for (i, layer) in layers.iter().enumerate() {
            let (fan_in, fan_out) = layer.weights.dim();
            if fan_in != *sizes.last().unwrap() {
                return Err(Error::Shape(format!(
                    "layer {i} expects {fan_in} inputs, previous layer yields {}",
                    sizes.last().unwrap()
                )));
            }
            if layer.bias.len() != fan_out {
                return Err(Error::Shape(format!(
                    "layer {i} bias has {} entries, expected {fan_out}",
                    layer.bias.len()
                )));
            }
            sizes.push(fan_out);
        }
        validate_sizes(&sizes)?;
        Ok(DenseNet {
            sizes,
            layers,
            output,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn output_activation(&self) -> OutputActivation {
        self.output
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn num_params(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    pub fn same_architecture(&self, other: &DenseNet) -> bool {
        self.sizes == other.sizes && self.output == other.output
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| {
            l.weights.iter().all(|v| v.is_finite()) && l.bias.iter().all(|v| v.is_finite())
        })
    }

    /// All parameters in layer order, each layer as row-major weights then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        flatten_layers(&self.layers)
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.num_params(),
                params.len()
            )));
        }
        let mut it = params.iter().copied();
        for layer in &mut self.layers {
            layer.weights.iter_mut().for_each(|w| *w = it.next().unwrap());
            layer.bias.iter_mut().for_each(|b| *b = it.next().unwrap());
        }
        Ok(())
    }

    fn check_input(&self, inputs: &ArrayView2<f64>) -> Result<()> {
        if inputs.ncols() != self.input_dim() {
            return Err(Error::Shape(format!(
                "network expects {} input columns, got {}",
                self.input_dim(),
                inputs.ncols()
            )));
        }
        Ok(())
    }

    pub fn forward(&self, inputs: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.check_input(&inputs)?;
        let mut act = affine(inputs, &self.layers[0]);
        for layer in &self.layers[1..] {
            relu_inplace(&mut act);
            act = affine(act.view(), layer);
        }
        self.apply_output(&mut act);
        Ok(act)
    }

    /// Forward pass that records the context needed for [`DenseNet::backward`].
    pub fn forward_tape(&self, inputs: ArrayView2<f64>) -> Result<Tape> {
        self.check_input(&inputs)?;
        let mut layer_inputs = Vec::with_capacity(self.layers.len());
        let mut act = inputs.to_owned();
        for (i, layer) in self.layers.iter().enumerate() {
            let mut next = affine(act.view(), layer);
            if i + 1 < self.layers.len() {
                relu_inplace(&mut next);
            } else {
                self.apply_output(&mut next);
            }
            layer_inputs.push(act);
            act = next;
        }
        Ok(Tape {
            sizes: self.sizes.clone(),
            layer_inputs,
            output: act,
        })
    }

    /// Reverse pass: parameter gradients (summed over the batch) and the
    /// gradient with respect to the inputs.
    pub fn backward(&self, tape: &Tape, upstream: ArrayView2<f64>) -> Result<Backward> {
        if tape.sizes != self.sizes {
            return Err(Error::Usage(format!(
                "tape was recorded for layer sizes {:?}, network has {:?}",
                tape.sizes, self.sizes
            )));
        }
        if upstream.dim() != tape.output.dim() {
            return Err(Error::Shape(format!(
                "upstream gradient is {:?}, forward output was {:?}",
                upstream.dim(),
                tape.output.dim()
            )));
        }
        let mut delta = upstream.to_owned();
        if self.output == OutputActivation::Tanh {
            delta.zip_mut_with(&tape.output, |d, &y| *d *= 1.0 - y * y);
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let input = &tape.layer_inputs[i];
            let g_w = input.t().dot(&delta);
            let g_b = delta.sum_axis(Axis(0));
            grads.push(Layer {
                weights: g_w,
                bias: g_b,
            });
            let mut back = delta.dot(&layer.weights.t());
            if i > 0 {
                // layer input is a ReLU output; its mask is (value > 0)
                back.zip_mut_with(input, |d, &a| {
                    if a <= 0.0 {
                        *d = 0.0
                    }
                });
            }
            delta = back;
        }
        grads.reverse();
        Ok(Backward {
            grads: Gradients { layers: grads },
            input_grad: delta,
        })
    }

    fn apply_output(&self, act: &mut Array2<f64>) {
        if self.output == OutputActivation::Tanh {
            act.mapv_inplace(f64::tanh);
        }
    }
}

/// Soft target update: `target ← τ·source + (1−τ)·target`.
pub fn polyak_update(target: &mut DenseNet, source: &DenseNet, tau: f64) -> Result<()> {
    if !target.same_architecture(source) {
        return Err(Error::Shape(format!(
            "polyak update between {:?} and {:?}",
            target.sizes, source.sizes
        )));
    }
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Error::Usage(format!("tau must lie in (0, 1], got {tau}")));
    }
    for (t, s) in target.layers.iter_mut().zip(&source.layers) {
        if tau == 1.0 {
            t.weights.assign(&s.weights);
            t.bias.assign(&s.bias);
        } else {
            t.weights
                .zip_mut_with(&s.weights, |t, &s| *t = tau * s + (1.0 - tau) * *t);
            t.bias
                .zip_mut_with(&s.bias, |t, &s| *t = tau * s + (1.0 - tau) * *t);
        }
    }
    Ok(())
}

/// `[a | b]` column concatenation, row counts must match.
pub fn concat_columns(a: ArrayView2<f64>, b: ArrayView2<f64>) -> Result<Array2<f64>> {
    if a.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "cannot concatenate {} rows with {} rows",
            a.nrows(),
            b.nrows()
        )));
    }
    let (n, ca, cb) = (a.nrows(), a.ncols(), b.ncols());
    let mut out = Array2::zeros((n, ca + cb));
    out.slice_mut(ndarray::s![.., ..ca]).assign(&a);
    out.slice_mut(ndarray::s![.., ca..]).assign(&b);
    Ok(out)
}

fn affine(inputs: ArrayView2<f64>, layer: &Layer) -> Array2<f64> {
    let mut out = inputs.dot(&layer.weights);
    out += &layer.bias;
    out
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

fn flatten_layers(layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::new();
    for l in layers {
        out.extend(l.weights.iter().copied());
        out.extend(l.bias.iter().copied());
    }
    out
}

fn validate_sizes(sizes: &[usize]) -> Result<()> {
    if sizes.len() < 2 {
        return Err(Error::Shape(format!(
            "layer_sizes needs input and output dims, got {sizes:?}"
        )));
    }
    if sizes.contains(&0) {
        return Err(Error::Shape(format!(
            "layer sizes must be positive, got {sizes:?}"
        )));
    }
    Ok(())
}
