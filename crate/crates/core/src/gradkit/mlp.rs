//! Small fully connected networks with exact reverse-mode gradients.
//!
//! Parameters live in one flat buffer. Layer `l` stores its weights as a
//! row-major `(out, in)` block followed by its `out` biases, so the flat
//! layout is `[W0, b0, W1, b1, ...]`. Hidden layers apply the activation;
//! the output layer is always the identity.

use rand::Rng;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::array::NumArray;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            // NaN passes through so non-finite inputs surface in the loss.
            Activation::Relu => {
                if x < 0.0 {
                    0.0
                } else {
                    x
                }
            }
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative given the pre-activation `z` and the output `a = f(z)`.
    #[inline]
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Parse(format!("unknown activation `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LayerSpan {
    in_dim: usize,
    out_dim: usize,
    w_off: usize,
    b_off: usize,
}

/// A dense feed-forward network.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
    spans: Vec<LayerSpan>,
    params: Vec<f64>,
}

/// Intermediate values recorded by [`Mlp::forward_trace`], consumed by
/// [`Mlp::backward`].
#[derive(Debug, Clone)]
pub struct Trace {
    rows: usize,
    /// `inputs[l]` is the input to layer `l`; the last entry is the output.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations for each layer.
    pre: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.inputs.last().map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    /// Input to layer `l` (the backbone's hidden features for `l == layers`).
    pub fn layer_input(&self, l: usize) -> &[f64] {
        &self.inputs[l]
    }
}

fn build_spans(widths: &[usize]) -> (Vec<LayerSpan>, usize) {
    let mut spans = Vec::with_capacity(widths.len().saturating_sub(1));
    let mut off = 0;
    for pair in widths.windows(2) {
        let (i, o) = (pair[0], pair[1]);
        spans.push(LayerSpan {
            in_dim: i,
            out_dim: o,
            w_off: off,
            b_off: off + i * o,
        });
        off += i * o + o;
    }
    (spans, off)
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::InvalidParameter(
            "an Mlp needs at least an input and an output width".into(),
        ));
    }
    if widths.contains(&0) {
        return Err(Error::InvalidParameter("layer widths must be positive".into()));
    }
    Ok(())
}

impl Mlp {
    /// A network with all parameters zero.
    pub fn zeros(widths: &[usize], activation: Activation) -> Result<Self> {
        validate_widths(widths)?;
        let (spans, n) = build_spans(widths);
        Ok(Self {
            widths: widths.to_vec(),
            activation,
            spans,
            params: vec![0.0; n],
        })
    }

    /// Uniform He (relu) or Xavier (tanh, identity) weights, zero biases.
    pub fn new<R: Rng + ?Sized>(widths: &[usize], activation: Activation, rng: &mut R) -> Result<Self> {
        let mut net = Self::zeros(widths, activation)?;
        for s in net.spans.clone() {
            let limit = match activation {
                Activation::Relu => (6.0 / s.in_dim as f64).sqrt(),
                _ => (6.0 / (s.in_dim + s.out_dim) as f64).sqrt(),
            };
            let dist = Uniform::new_inclusive(-limit, limit).map_err(|e| Error::InvalidParameter(e.to_string()))?;
            for w in &mut net.params[s.w_off..s.b_off] {
                *w = dist.sample(rng);
            }
        }
        Ok(net)
    }

    pub fn from_params(widths: &[usize], activation: Activation, params: Vec<f64>) -> Result<Self> {
        let mut net = Self::zeros(widths, activation)?;
        if params.len() != net.params.len() {
            return Err(Error::dim("Mlp::from_params", net.params.len(), params.len()));
        }
        net.params = params;
        Ok(net)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn num_layers(&self) -> usize {
        self.spans.len()
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn set_params(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.params.len() {
            return Err(Error::dim("Mlp::set_params", self.params.len(), params.len()));
        }
        self.params.copy_from_slice(params);
        Ok(())
    }

    /// Weight matrix `(out, in)` of layer `l`.
    pub fn layer_weights(&self, l: usize) -> NumArray {
        let s = self.spans[l];
        NumArray::matrix(s.out_dim, s.in_dim, self.params[s.w_off..s.b_off].to_vec())
            .expect("span sizes are consistent")
    }

    pub fn layer_biases(&self, l: usize) -> NumArray {
        let s = self.spans[l];
        NumArray::vector(self.params[s.b_off..s.b_off + s.out_dim].to_vec())
    }

    fn check_input(&self, input: &NumArray) -> Result<()> {
        if input.last_dim() != self.input_dim() {
            return Err(Error::dim("Mlp input", self.input_dim(), input.last_dim()));
        }
        Ok(())
    }

    fn output_shape(&self, input: &NumArray) -> Vec<usize> {
        let mut shape = input.shape().to_vec();
        *shape.last_mut().expect("non-empty shape") = self.output_dim();
        shape
    }

    /// Evaluates the network on a vector or on a batch of row vectors.
    pub fn forward(&self, input: &NumArray) -> Result<NumArray> {
        self.check_input(input)?;
        let out = self.forward_rows(input.data(), input.rows());
        NumArray::new(self.output_shape(input), out)
    }

    /// Evaluates one input vector.
    pub fn forward_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::dim("Mlp input", self.input_dim(), x.len()));
        }
        Ok(self.forward_rows(x, 1))
    }

    fn forward_rows(&self, x: &[f64], rows: usize) -> Vec<f64> {
        let mut cur = x.to_vec();
        let last = self.spans.len() - 1;
        for (l, s) in self.spans.iter().enumerate() {
            let mut z = self.affine(s, &cur, rows);
            if l != last {
                for v in &mut z {
                    *v = self.activation.apply(*v);
                }
            }
            cur = z;
        }
        cur
    }

    fn affine(&self, s: &LayerSpan, x: &[f64], rows: usize) -> Vec<f64> {
        let w = &self.params[s.w_off..s.b_off];
        let b = &self.params[s.b_off..s.b_off + s.out_dim];
        let mut z = vec![0.0; rows * s.out_dim];
        for r in 0..rows {
            let xr = &x[r * s.in_dim..(r + 1) * s.in_dim];
            let zr = &mut z[r * s.out_dim..(r + 1) * s.out_dim];
            for (o, zo) in zr.iter_mut().enumerate() {
                let wo = &w[o * s.in_dim..(o + 1) * s.in_dim];
                let mut acc = b[o];
                for (wi, xi) in wo.iter().zip(xr) {
                    acc += wi * xi;
                }
                *zo = acc;
            }
        }
        z
    }

    /// Forward pass that records what [`Mlp::backward`] needs.
    pub fn forward_trace(&self, input: &NumArray) -> Result<Trace> {
        self.check_input(input)?;
        let rows = input.rows();
        let mut inputs = Vec::with_capacity(self.spans.len() + 1);
        let mut pre = Vec::with_capacity(self.spans.len());
        inputs.push(input.data().to_vec());
        let last = self.spans.len() - 1;
        for (l, s) in self.spans.iter().enumerate() {
            let z = self.affine(s, inputs.last().expect("pushed"), rows);
            let a = if l == last {
                z.clone()
            } else {
                z.iter().map(|&v| self.activation.apply(v)).collect()
            };
            pre.push(z);
            inputs.push(a);
        }
        Ok(Trace { rows, inputs, pre })
    }

    /// Back-propagates `grad_out` (same layout as the traced output).
    ///
    /// Returns the gradient with respect to the flat parameter vector and
    /// the gradient with respect to the input batch.
    pub fn backward(&self, trace: &Trace, grad_out: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let rows = trace.rows;
        if grad_out.len() != rows * self.output_dim() {
            return Err(Error::dim(
                "Mlp::backward grad_out",
                rows * self.output_dim(),
                grad_out.len(),
            ));
        }
        let mut grads = vec![0.0; self.params.len()];
        let mut delta = grad_out.to_vec();
        for l in (0..self.spans.len()).rev() {
            let s = self.spans[l];
            let a_in = &trace.inputs[l];
            {
                let (gw, gb) = grads[s.w_off..s.b_off + s.out_dim].split_at_mut(s.in_dim * s.out_dim);
                for r in 0..rows {
                    let dr = &delta[r * s.out_dim..(r + 1) * s.out_dim];
                    let ar = &a_in[r * s.in_dim..(r + 1) * s.in_dim];
                    for (o, &d) in dr.iter().enumerate() {
                        if d == 0.0 {
                            continue;
                        }
                        gb[o] += d;
                        let row = &mut gw[o * s.in_dim..(o + 1) * s.in_dim];
                        for (g, &a) in row.iter_mut().zip(ar) {
                            *g += d * a;
                        }
                    }
                }
            }
            let w = &self.params[s.w_off..s.b_off];
            let mut grad_in = vec![0.0; rows * s.in_dim];
            for r in 0..rows {
                let dr = &delta[r * s.out_dim..(r + 1) * s.out_dim];
                let gr = &mut grad_in[r * s.in_dim..(r + 1) * s.in_dim];
                for (o, &d) in dr.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    let wo = &w[o * s.in_dim..(o + 1) * s.in_dim];
                    for (g, &wi) in gr.iter_mut().zip(wo) {
                        *g += d * wi;
                    }
                }
            }
            if l > 0 {
                let z = &trace.pre[l - 1];
                let a = &trace.inputs[l];
                for ((g, &zv), &av) in grad_in.iter_mut().zip(z).zip(a) {
                    *g *= self.activation.derivative(zv, av);
                }
            }
            delta = grad_in;
        }
        Ok((grads, delta))
    }
}
