use crate::error::{Error, Result};
use crate::tensor::Tensor2;

/// Binary keep-mask over a weight tensor; `true` keeps the weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    rows: usize,
    cols: usize,
    keep: Vec<bool>,
}

impl PruneMask {
    pub fn ones(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            keep: vec![true; rows * cols],
        }
    }

    pub fn from_keep(rows: usize, cols: usize, keep: Vec<bool>) -> Result<Self> {
        if keep.len() != rows * cols {
            return Err(Error::dim(format!(
                "{} mask bits for a {rows}x{cols} tensor",
                keep.len()
            )));
        }
        Ok(Self { rows, cols, keep })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn is_kept(&self, flat: usize) -> bool {
        self.keep[flat]
    }

    pub fn zeros(&self) -> usize {
        self.keep.iter().filter(|&&k| !k).count()
    }

    /// Fraction of pruned positions.
    pub fn sparsity(&self) -> f64 {
        if self.keep.is_empty() {
            return 0.0;
        }
        self.zeros() as f64 / self.keep.len() as f64
    }
}

/// Per-weight first-order saliency `|w ⊙ g|`.
pub fn importance(weights: &Tensor2, grads: &Tensor2) -> Result<Tensor2> {
    weights.zip_map(grads, |w, g| (w * g).abs())
}

/// Prunes the `⌈target·N⌉` least important entries (ties broken by lower
/// flat index first) on top of the zero set already in `existing`.
pub fn build_mask(importance: &Tensor2, target: f64, existing: &PruneMask) -> Result<PruneMask> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::input(format!("target sparsity {target} not in [0, 1)")));
    }
    if existing.shape() != importance.shape() {
        return Err(Error::dim(format!(
            "mask is {:?} but importance is {:?}",
            existing.shape(),
            importance.shape()
        )));
    }
    let n = importance.len();
    let prune_count = ((target * n as f64).ceil() as usize).min(n);
    let mut keep = existing.keep.clone();
    if prune_count > 0 {
        let scores = importance.data();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
        for &i in &order[..prune_count] {
            keep[i] = false;
        }
    }
    Ok(PruneMask {
        rows: existing.rows,
        cols: existing.cols,
        keep,
    })
}

/// `mask ⊙ tensor`.
pub fn apply_mask(mask: &PruneMask, tensor: &Tensor2) -> Result<Tensor2> {
    if mask.shape() != tensor.shape() {
        return Err(Error::dim(format!(
            "mask is {:?} but tensor is {:?}",
            mask.shape(),
            tensor.shape()
        )));
    }
    let data = tensor
        .data()
        .iter()
        .zip(&mask.keep)
        .map(|(&x, &k)| if k { x } else { 0.0 })
        .collect();
    Tensor2::from_vec(tensor.rows(), tensor.cols(), data)
}
