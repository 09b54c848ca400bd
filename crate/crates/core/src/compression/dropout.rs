use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::tensor::Tensor2;

/// Inverted dropout over whole feature vectors (rows of the split-layer batch).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutSpec {
    p: f64,
}

impl DropoutSpec {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::input(format!("dropout probability {p} not in [0, 1)")));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn scale(&self) -> f64 {
        1.0 / (1.0 - self.p)
    }
}

/// Per-row keep flags from one dropout draw.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeepMask(pub Vec<bool>);

impl KeepMask {
    pub fn all(rows: usize) -> Self {
        Self(vec![true; rows])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn kept_count(&self) -> usize {
        self.0.iter().filter(|&&k| k).count()
    }

    pub fn kept_indices(&self) -> Vec<usize> {
        self.0
            .iter()
            .enumerate()
            .filter_map(|(i, &k)| k.then_some(i))
            .collect()
    }
}

fn scale_rows(t: &Tensor2, keep: &KeepMask, scale: f64) -> Tensor2 {
    let mut out = t.clone();
    for (r, &k) in keep.0.iter().enumerate() {
        for v in out.row_mut(r) {
            *v = if k { *v * scale } else { 0.0 };
        }
    }
    out
}

/// Keeps each row with probability `1 − p`, scaling survivors by `1/(1 − p)`.
pub fn dropout_forward(activations: &Tensor2, spec: &DropoutSpec, rng: &mut Rng) -> (Tensor2, KeepMask) {
    let keep = KeepMask(
        (0..activations.rows())
            .map(|_| !rng.bernoulli(spec.p))
            .collect(),
    );
    (scale_rows(activations, &keep, spec.scale()), keep)
}

/// Adjoint of [`dropout_forward`] for a frozen keep mask.
pub fn dropout_backward(upstream: &Tensor2, keep: &KeepMask, spec: &DropoutSpec) -> Result<Tensor2> {
    if keep.len() != upstream.rows() {
        return Err(Error::dim(format!(
            "keep mask covers {} rows, gradient has {}",
            keep.len(),
            upstream.rows()
        )));
    }
    Ok(scale_rows(upstream, keep, spec.scale()))
}
