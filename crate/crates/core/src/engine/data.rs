//! Synthetic Gaussian-blob classification data, IID partitioning, and
//! per-client minibatch order.

use crate::error::{Error, Result};
use crate::rng::{tag, Rng};
use crate::tensor::Tensor2;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Tensor2,
    pub labels: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Dataset> {
        Ok(Dataset {
            features: self.features.select_rows(indices)?,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlobSpec {
    pub classes: usize,
    pub dim: usize,
    pub train_samples: usize,
    pub test_samples: usize,
    pub spread: f64,
    pub center_scale: f64,
}

/// Draws class centres once, then balanced train and test sets around them.
pub fn gaussian_blobs(spec: &BlobSpec, seed: u64) -> Result<(Dataset, Dataset)> {
    if spec.classes == 0 || spec.dim == 0 {
        return Err(Error::input("blobs need at least one class and one feature"));
    }
    let mut rng = Rng::derive(seed, &[tag::DATA]);
    let centers: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| (0..spec.dim).map(|_| spec.center_scale * rng.normal()).collect())
        .collect();
    let draw = |n: usize, rng: &mut Rng| {
        let mut labels: Vec<usize> = (0..n).map(|i| i % spec.classes).collect();
        rng.shuffle(&mut labels);
        let mut data = Vec::with_capacity(n * spec.dim);
        for &c in &labels {
            data.extend(centers[c].iter().map(|&m| m + spec.spread * rng.normal()));
        }
        Dataset {
            features: Tensor2::from_vec(n, spec.dim, data).expect("sized buffer"),
            labels,
        }
    };
    let train = draw(spec.train_samples, &mut rng);
    let test = draw(spec.test_samples, &mut rng);
    Ok((train, test))
}

/// Shuffles once and deals samples round-robin so shard sizes differ by at
/// most one.
pub fn partition_iid(data: &Dataset, clients: usize, seed: u64) -> Result<Vec<Dataset>> {
    if clients == 0 {
        return Err(Error::input("need at least one client"));
    }
    let mut order: Vec<usize> = (0..data.len()).collect();
    Rng::derive(seed, &[tag::DATA, 1]).shuffle(&mut order);
    (0..clients)
        .map(|k| {
            let idx: Vec<usize> = order.iter().skip(k).step_by(clients).copied().collect();
            data.subset(&idx)
        })
        .collect()
}

/// Walks a shard in reshuffled epochs. A new permutation is drawn whenever
/// fewer than `batch` samples remain; the seed is derived from
/// `(global seed, client id, round)` of the round that starts the epoch.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    seed: u64,
    client_id: usize,
    shard_len: usize,
    batch: usize,
    order: Vec<usize>,
    cursor: usize,
}

impl BatchSampler {
    pub fn new(seed: u64, client_id: usize, shard_len: usize, batch: usize) -> Result<Self> {
        if batch == 0 || batch > shard_len {
            return Err(Error::input(format!(
                "batch {batch} does not fit a shard of {shard_len}"
            )));
        }
        Ok(Self {
            seed,
            client_id,
            shard_len,
            batch,
            order: Vec::new(),
            cursor: 0,
        })
    }

    pub fn next_batch(&mut self, round: u32) -> Vec<usize> {
        if self.cursor + self.batch > self.order.len() {
            self.order = (0..self.shard_len).collect();
            Rng::derive(self.seed, &[tag::BATCH, self.client_id as u64, round as u64])
                .shuffle(&mut self.order);
            self.cursor = 0;
        }
        let out = self.order[self.cursor..self.cursor + self.batch].to_vec();
        self.cursor += self.batch;
        out
    }
}
