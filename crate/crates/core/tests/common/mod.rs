//! Reference implementations used by the integration tests. Nothing here
//! calls into the forward/backward code it is compared against.

#![allow(dead_code)]

use fedsl::nn::{Activation, DenseLayer};
use fedsl::Tensor2;

/// Triple-loop `act(x · Wᵀ + b)`.
pub fn naive_dense(layer: &DenseLayer, x: &Tensor2) -> Vec<Vec<f64>> {
    let (out_dim, in_dim) = layer.weights.shape();
    (0..x.rows())
        .map(|r| {
            (0..out_dim)
                .map(|o| {
                    let mut s = layer.bias[o];
                    for i in 0..in_dim {
                        s += x.get(r, i) * layer.weights.get(o, i);
                    }
                    match layer.activation {
                        Activation::Relu => s.max(0.0),
                        Activation::Identity => s,
                    }
                })
                .collect()
        })
        .collect()
}

fn to_tensor(rows: Vec<Vec<f64>>) -> Tensor2 {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    Tensor2::from_vec(r, c, rows.into_iter().flatten().collect()).unwrap()
}

pub fn naive_stack(layers: &[DenseLayer], x: &Tensor2) -> Tensor2 {
    layers
        .iter()
        .fold(x.clone(), |h, l| to_tensor(naive_dense(l, &h)))
}

/// Mean cross-entropy computed with a log-sum-exp per row.
pub fn naive_loss(logits: &Tensor2, labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (r, &y) in labels.iter().enumerate() {
        let row = logits.row(r);
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|z| (z - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
    }
    total / labels.len() as f64
}

/// Loss of a split network with a fixed per-row dropout mask applied to the
/// split activations.
pub fn split_loss(
    client: &[DenseLayer],
    server: &[DenseLayer],
    x: &Tensor2,
    labels: &[usize],
    keep: &[bool],
    scale: f64,
) -> f64 {
    let mut h = naive_stack(client, x);
    for r in 0..h.rows() {
        let f = if keep[r] { scale } else { 0.0 };
        for v in h.row_mut(r) {
            *v *= f;
        }
    }
    naive_loss(&naive_stack(server, &h), labels)
}

/// Central-difference gradient of `f` with respect to every weight and
/// bias of `layers`, in layer order, weights then bias.
pub fn fd_grads(
    layers: &mut [DenseLayer],
    h: f64,
    mut f: impl FnMut(&[DenseLayer]) -> f64,
) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut out = Vec::new();
    for l in 0..layers.len() {
        let mut gw = Vec::new();
        for i in 0..layers[l].weights.len() {
            let orig = layers[l].weights.data()[i];
            layers[l].weights.data_mut()[i] = orig + h;
            let up = f(layers);
            layers[l].weights.data_mut()[i] = orig - h;
            let down = f(layers);
            layers[l].weights.data_mut()[i] = orig;
            gw.push((up - down) / (2.0 * h));
        }
        let mut gb = Vec::new();
        for i in 0..layers[l].bias.len() {
            let orig = layers[l].bias[i];
            layers[l].bias[i] = orig + h;
            let up = f(layers);
            layers[l].bias[i] = orig - h;
            let down = f(layers);
            layers[l].bias[i] = orig;
            gb.push((up - down) / (2.0 * h));
        }
        out.push((gw, gb));
    }
    out
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Smallest |pre-activation| over all ReLU units, computed naively.
pub fn min_relu_margin(layers: &[DenseLayer], x: &Tensor2) -> f64 {
    let mut h = x.clone();
    let mut margin = f64::INFINITY;
    for l in layers {
        let lin = DenseLayer {
            weights: l.weights.clone(),
            bias: l.bias.clone(),
            activation: Activation::Identity,
        };
        let pre = to_tensor(naive_dense(&lin, &h));
        if l.activation == Activation::Relu {
            margin = pre.data().iter().fold(margin, |m, v| m.min(v.abs()));
        }
        h = to_tensor(naive_dense(l, &h));
    }
    margin
}

/// Unsplit minibatch SGD: full forward, softmax cross-entropy, backward, and
/// `w ← w − η·g` on every layer. Written out layer by layer with explicit
/// loops.
pub struct MonolithicSgd {
    pub layers: Vec<DenseLayer>,
    pub eta: f64,
}

impl MonolithicSgd {
    pub fn step(&mut self, x: &Tensor2, labels: &[usize]) -> f64 {
        let batch = x.rows();
        // Forward, keeping inputs and pre-activations.
        let mut inputs = Vec::new();
        let mut pres = Vec::new();
        let mut h = x.clone();
        for l in &self.layers {
            let (out_dim, in_dim) = l.weights.shape();
            let mut pre = Tensor2::zeros(batch, out_dim);
            for r in 0..batch {
                for o in 0..out_dim {
                    let mut s = 0.0;
                    for i in 0..in_dim {
                        s += h.get(r, i) * l.weights.get(o, i);
                    }
                    pre.set(r, o, s + l.bias[o]);
                }
            }
            let out = pre.map(|v| match l.activation {
                Activation::Relu => if v > 0.0 { v } else { 0.0 },
                Activation::Identity => v,
            });
            inputs.push(h);
            pres.push(pre);
            h = out;
        }
        // Softmax cross-entropy gradient, averaged over the batch.
        let classes = h.cols();
        let mut g = Tensor2::zeros(batch, classes);
        let mut loss = 0.0;
        let inv = 1.0 / batch as f64;
        for r in 0..batch {
            let row = h.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let s: f64 = row.iter().map(|z| (z - m).exp()).sum();
            loss += s.ln() - (row[labels[r]] - m);
            for c in 0..classes {
                let p = (row[c] - m).exp() / s;
                let y = if c == labels[r] { 1.0 } else { 0.0 };
                g.set(r, c, (p - y) * inv);
            }
        }
        // Backward and step, last layer first.
        for li in (0..self.layers.len()).rev() {
            let l = &self.layers[li];
            let (out_dim, in_dim) = l.weights.shape();
            let d_pre = g.zip_map(&pres[li], |u, p| match l.activation {
                Activation::Relu => if p > 0.0 { u } else { 0.0 },
                Activation::Identity => u,
            })
            .unwrap();
            let mut dw = Tensor2::zeros(out_dim, in_dim);
            for o in 0..out_dim {
                for i in 0..in_dim {
                    let mut s = 0.0;
                    for r in 0..batch {
                        s += d_pre.get(r, o) * inputs[li].get(r, i);
                    }
                    dw.set(o, i, s);
                }
            }
            let mut db = vec![0.0; out_dim];
            for r in 0..batch {
                for o in 0..out_dim {
                    db[o] += d_pre.get(r, o);
                }
            }
            let mut d_in = Tensor2::zeros(batch, in_dim);
            for r in 0..batch {
                for i in 0..in_dim {
                    let mut s = 0.0;
                    for o in 0..out_dim {
                        s += d_pre.get(r, o) * l.weights.get(o, i);
                    }
                    d_in.set(r, i, s);
                }
            }
            let l = &mut self.layers[li];
            for (w, d) in l.weights.data_mut().iter_mut().zip(dw.data()) {
                *w -= self.eta * d;
            }
            for (b, d) in l.bias.iter_mut().zip(&db) {
                *b -= self.eta * d;
            }
            g = d_in;
        }
        loss * inv
    }
}
