//! Dense layers, softmax cross-entropy, and their gradients.

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Activation::Identity => x,
        }
    }

    /// Derivative w.r.t. the pre-activation. ReLU uses 0 at exactly 0.
    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
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

/// Fully connected layer. `weights` is `out_dim × in_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor2,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGrads {
    pub d_weights: Tensor2,
    pub d_bias: Vec<f64>,
    pub d_input: Tensor2,
}

/// Values cached by a forward pass for the matching backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerOutput {
    pub pre_activation: Tensor2,
    pub output: Tensor2,
}

impl DenseLayer {
    pub fn new(weights: Tensor2, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(Error::dim(format!(
                "bias length {} does not match {} output units",
                bias.len(),
                weights.rows()
            )));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot(in_dim: usize, out_dim: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let data = (0..in_dim * out_dim)
            .map(|_| rng.uniform_range(-limit, limit))
            .collect();
        Self {
            weights: Tensor2::from_vec(out_dim, in_dim, data).expect("sized buffer"),
            bias: vec![0.0; out_dim],
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.bias.len()
    }

    pub fn forward_cached(&self, input: &Tensor2) -> Result<LayerOutput> {
        if input.cols() != self.in_dim() {
            return Err(Error::dim(format!(
                "layer expects {} input features, got {}",
                self.in_dim(),
                input.cols()
            )));
        }
        let mut pre = input.matmul_transposed(&self.weights)?;
        for r in 0..pre.rows() {
            for (v, b) in pre.row_mut(r).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        let act = self.activation;
        let output = pre.map(|x| act.apply(x));
        Ok(LayerOutput {
            pre_activation: pre,
            output,
        })
    }

    pub fn backward(
        &self,
        input: &Tensor2,
        pre_activation: &Tensor2,
        upstream: &Tensor2,
    ) -> Result<LayerGrads> {
        let batch = input.rows();
        input.ensure_shape((batch, self.in_dim()), "backward input")?;
        pre_activation.ensure_shape((batch, self.out_dim()), "backward pre-activation")?;
        upstream.ensure_shape((batch, self.out_dim()), "backward upstream")?;

        let act = self.activation;
        let d_pre = upstream.zip_map(pre_activation, |u, p| u * act.derivative(p))?;
        let d_weights = d_pre.transposed_matmul(input)?;
        let mut d_bias = vec![0.0; self.out_dim()];
        for r in 0..batch {
            for (db, g) in d_bias.iter_mut().zip(d_pre.row(r)) {
                *db += g;
            }
        }
        let d_input = d_pre.matmul(&self.weights)?;
        Ok(LayerGrads {
            d_weights,
            d_bias,
            d_input,
        })
    }

    /// Plain SGD step `w ← w − η·g` on weights and bias.
    pub fn sgd_step(&mut self, grads: &LayerGrads, eta: f64) -> Result<()> {
        grads
            .d_weights
            .ensure_shape(self.weights.shape(), "weight gradient")?;
        if grads.d_bias.len() != self.bias.len() {
            return Err(Error::dim("bias gradient length"));
        }
        for (w, g) in self.weights.data_mut().iter_mut().zip(grads.d_weights.data()) {
            *w -= eta * g;
        }
        for (b, g) in self.bias.iter_mut().zip(&grads.d_bias) {
            *b -= eta * g;
        }
        Ok(())
    }
}

/// `activation(input · weightsᵀ + bias)`.
pub fn dense_forward(layer: &DenseLayer, input: &Tensor2) -> Result<Tensor2> {
    Ok(layer.forward_cached(input)?.output)
}

pub fn dense_backward(
    layer: &DenseLayer,
    input: &Tensor2,
    pre_activation: &Tensor2,
    upstream: &Tensor2,
) -> Result<LayerGrads> {
    layer.backward(input, pre_activation, upstream)
}

/// Mean softmax cross-entropy over the batch and its gradient w.r.t. logits.
pub fn softmax_cross_entropy(logits: &Tensor2, labels: &[usize]) -> Result<(f64, Tensor2)> {
    let (batch, classes) = logits.shape();
    if labels.len() != batch {
        return Err(Error::dim(format!(
            "{} labels for a batch of {}",
            labels.len(),
            batch
        )));
    }
    if batch == 0 {
        return Err(Error::input("empty batch"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::input(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let inv_batch = 1.0 / batch as f64;
    let mut loss = 0.0;
    let mut grad = Tensor2::zeros(batch, classes);
    for (r, &label) in labels.iter().enumerate() {
        let row = logits.row(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let sum_exp: f64 = row.iter().map(|&z| (z - max).exp()).sum();
        let log_sum = sum_exp.ln();
        loss += log_sum - (row[label] - max);
        let g = grad.row_mut(r);
        for (c, (&z, gc)) in row.iter().zip(g.iter_mut()).enumerate() {
            let p = (z - max).exp() / sum_exp;
            let onehot = if c == label { 1.0 } else { 0.0 };
            *gc = (p - onehot) * inv_batch;
        }
    }
    Ok((loss * inv_batch, grad))
}

/// Forward record of a layer stack.
#[derive(Debug, Clone)]
pub struct StackTrace {
    /// `inputs[i]` is the input to layer `i`.
    pub inputs: Vec<Tensor2>,
    pub pre_activations: Vec<Tensor2>,
    pub output: Tensor2,
}

/// Runs `layers` in order on `input`, keeping what backward needs.
pub fn stack_forward(layers: &[DenseLayer], input: &Tensor2) -> Result<StackTrace> {
    let mut inputs = Vec::with_capacity(layers.len());
    let mut pre_activations = Vec::with_capacity(layers.len());
    let mut current = input.clone();
    for layer in layers {
        let out = layer.forward_cached(&current)?;
        inputs.push(current);
        pre_activations.push(out.pre_activation);
        current = out.output;
    }
    Ok(StackTrace {
        inputs,
        pre_activations,
        output: current,
    })
}

/// Backpropagates `upstream` (gradient w.r.t. the stack output) through the
/// stack. Returns per-layer gradients and the gradient w.r.t. the stack input.
pub fn stack_backward(
    layers: &[DenseLayer],
    trace: &StackTrace,
    upstream: &Tensor2,
) -> Result<(Vec<LayerGrads>, Tensor2)> {
    if trace.inputs.len() != layers.len() {
        return Err(Error::dim("trace does not match layer stack"));
    }
    let mut grads = Vec::with_capacity(layers.len());
    let mut g = upstream.clone();
    for (i, layer) in layers.iter().enumerate().rev() {
        let lg = layer.backward(&trace.inputs[i], &trace.pre_activations[i], &g)?;
        g = lg.d_input.clone();
        grads.push(lg);
    }
    grads.reverse();
    Ok((grads, g))
}

/// Builds the layer stack for `dims` (input width first). Hidden layers use
/// ReLU, the last layer emits logits.
pub fn init_stack(dims: &[usize], rng: &mut Rng) -> Vec<DenseLayer> {
    let n = dims.len().saturating_sub(1);
    (0..n)
        .map(|i| {
            let act = if i + 1 == n {
                Activation::Identity
            } else {
                Activation::Relu
            };
            DenseLayer::glorot(dims[i], dims[i + 1], act, rng)
        })
        .collect()
}

/// Fraction of correct argmax predictions.
pub fn accuracy(logits: &Tensor2, labels: &[usize]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let correct = labels
        .iter()
        .enumerate()
        .filter(|&(r, &l)| {
            let row = logits.row(r);
            let mut best = 0;
            for c in 1..row.len() {
                if row[c] > row[best] {
                    best = c;
                }
            }
            best == l
        })
        .count();
    correct as f64 / labels.len() as f64
}
