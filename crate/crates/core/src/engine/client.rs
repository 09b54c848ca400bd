use crate::compression::{
    apply_mask, build_mask, dropout_backward, dropout_forward, importance, quantize_masked,
    DropoutSpec, KeepMask, PruneMask, QuantizerSpec, SparsitySchedule,
};
use crate::engine::data::{BatchSampler, Dataset};
use crate::engine::wire::{ActivationGrads, ParamBlock, SmashedData};
use crate::error::{Error, Result};
use crate::nn::{stack_backward, stack_forward, DenseLayer, StackTrace};
use crate::rng::{tag, Rng};

/// One client: the client-side layers, a pruning mask per layer, and its
/// data shard.
#[derive(Debug, Clone)]
pub struct ClientState {
    pub id: usize,
    pub layers: Vec<DenseLayer>,
    pub masks: Vec<PruneMask>,
    /// Cleared when an aggregated model is installed; the next pruning
    /// trigger rebuilds the masks from scratch.
    masks_active: bool,
    pub shard: Dataset,
    sampler: BatchSampler,
    seed: u64,
}

/// What the client keeps between its forward pass and its update.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub round: u32,
    pub trace: StackTrace,
    pub keep: KeepMask,
}

/// Hyperparameters of the client update step.
#[derive(Debug, Clone, Copy)]
pub struct UpdateSettings {
    pub schedule: SparsitySchedule,
    /// `None` disables quantization.
    pub quantizer: Option<QuantizerSpec>,
    pub dropout: DropoutSpec,
    pub eta: f64,
}

/// Outcome of one client update.
#[derive(Debug, Clone)]
pub struct UpdateReport {
    pub target_sparsity: f64,
    /// Per layer: did the sparsity check fire a mask rebuild.
    pub triggered: Vec<bool>,
    /// Per-layer weight sparsity after the update.
    pub layer_sparsity: Vec<f64>,
    /// Unmasked, unquantized gradients.
    pub raw_grads: Vec<ParamBlock>,
    /// Weights after masking, before the gradient step.
    pub pruned_weights: Vec<ParamBlock>,
}

pub fn param_blocks(layers: &[DenseLayer]) -> Vec<ParamBlock> {
    layers
        .iter()
        .map(|l| ParamBlock {
            weights: l.weights.clone(),
            bias: l.bias.clone(),
        })
        .collect()
}

impl ClientState {
    pub fn new(id: usize, layers: Vec<DenseLayer>, shard: Dataset, batch: usize, seed: u64) -> Result<Self> {
        if id > u16::MAX as usize {
            return Err(Error::input(format!("client id {id} does not fit the wire header")));
        }
        let masks = layers
            .iter()
            .map(|l| PruneMask::ones(l.weights.rows(), l.weights.cols()))
            .collect();
        let sampler = BatchSampler::new(seed, id, shard.len(), batch)?;
        Ok(Self {
            id,
            layers,
            masks,
            masks_active: true,
            shard,
            sampler,
            seed,
        })
    }

    pub fn masks_active(&self) -> bool {
        self.masks_active
    }

    /// Fraction of zero weights pooled over all client layers.
    pub fn sparsity(&self) -> f64 {
        let (zeros, total) = self.layers.iter().fold((0, 0), |(z, n), l| {
            (z + l.weights.count_zeros(), n + l.weights.len())
        });
        if total == 0 {
            0.0
        } else {
            zeros as f64 / total as f64
        }
    }

    pub fn params(&self) -> Vec<ParamBlock> {
        param_blocks(&self.layers)
    }

    /// Replaces weights and biases with an aggregated model. Masks are kept
    /// but stop being applied until the next pruning trigger.
    pub fn install(&mut self, blocks: &[ParamBlock]) -> Result<()> {
        if blocks.len() != self.layers.len() {
            return Err(Error::dim("aggregated model has the wrong number of layers"));
        }
        for (l, b) in self.layers.iter_mut().zip(blocks) {
            b.weights.ensure_shape(l.weights.shape(), "aggregated weights")?;
            if b.bias.len() != l.bias.len() {
                return Err(Error::dim("aggregated bias length"));
            }
            l.weights = b.weights.clone();
            l.bias = b.bias.clone();
        }
        self.masks_active = false;
        Ok(())
    }

    /// Draws the round's minibatch from the shard and runs [`forward_batch`](Self::forward_batch).
    pub fn client_forward(&mut self, round: u32, dropout: &DropoutSpec) -> Result<(ForwardCache, SmashedData)> {
        let idx = self.sampler.next_batch(round);
        let batch = self.shard.subset(&idx)?;
        self.forward_batch(round, &batch, dropout)
    }

    /// Forward through the client layers, dropout at the split layer, and
    /// sparse encoding of the surviving rows.
    pub fn forward_batch(
        &self,
        round: u32,
        batch: &Dataset,
        dropout: &DropoutSpec,
    ) -> Result<(ForwardCache, SmashedData)> {
        if batch.is_empty() {
            return Err(Error::input("empty batch"));
        }
        let trace = stack_forward(&self.layers, &batch.features)?;
        let mut rng = Rng::derive(self.seed, &[tag::DROPOUT, self.id as u64, round as u64]);
        let (dropped, keep) = dropout_forward(&trace.output, dropout, &mut rng);
        let kept = keep.kept_indices();
        let smashed = SmashedData::new(
            round,
            self.id as u16,
            kept.clone(),
            dropped.select_rows(&kept)?,
            batch.labels.clone(),
        )?;
        Ok((ForwardCache { round, trace, keep }, smashed))
    }

    /// Backpropagation from the returned activation gradients, conditional
    /// pruning, gradient quantization, and the gradient step.
    pub fn client_update(
        &mut self,
        cache: &ForwardCache,
        grads: &ActivationGrads,
        settings: &UpdateSettings,
    ) -> Result<UpdateReport> {
        let kept = cache.keep.kept_indices();
        if grads.kept_row_indices != kept {
            return Err(Error::Protocol(
                "activation gradient rows differ from the uplink kept rows".into(),
            ));
        }
        let batch_rows = cache.keep.len();
        let dense = crate::tensor::Tensor2::scatter_rows(&grads.rows, &kept, batch_rows)?;
        let d_split = dropout_backward(&dense, &cache.keep, &settings.dropout)?;
        let (layer_grads, _) = stack_backward(&self.layers, &cache.trace, &d_split)?;

        let target = settings.schedule.target(cache.round)?;
        let mut qrng = Rng::derive(self.seed, &[tag::QUANT, self.id as u64, cache.round as u64]);
        let mut triggered = Vec::with_capacity(self.layers.len());
        let mut raw_grads = Vec::with_capacity(self.layers.len());
        let mut pruned_weights = Vec::with_capacity(self.layers.len());

        for (l, g) in layer_grads.into_iter().enumerate() {
            let fire = self.layers[l].weights.sparsity() < target;
            if fire {
                let scores = importance(&self.layers[l].weights, &g.d_weights)?;
                let existing = if self.masks_active {
                    self.masks[l].clone()
                } else {
                    let (r, c) = self.layers[l].weights.shape();
                    PruneMask::ones(r, c)
                };
                self.masks[l] = build_mask(&scores, target, &existing)?;
            }
            triggered.push(fire);
            raw_grads.push(ParamBlock {
                weights: g.d_weights.clone(),
                bias: g.d_bias.clone(),
            });
            let layer = &mut self.layers[l];
            let use_mask = self.masks_active || fire;
            let (w_masked, g_masked) = if use_mask {
                (
                    apply_mask(&self.masks[l], &layer.weights)?,
                    apply_mask(&self.masks[l], &g.d_weights)?,
                )
            } else {
                (layer.weights.clone(), g.d_weights)
            };
            pruned_weights.push(ParamBlock {
                weights: w_masked.clone(),
                bias: layer.bias.clone(),
            });
            let g_step = match (&settings.quantizer, use_mask) {
                (Some(spec), true) => quantize_masked(&g_masked, &self.masks[l], spec, &mut qrng)?,
                (Some(spec), false) => crate::compression::quantize(&g_masked, spec, &mut qrng),
                (None, _) => g_masked,
            };
            let eta = settings.eta;
            layer.weights = w_masked.zip_map(&g_step, |w, q| w - eta * q)?;
            for (b, db) in layer.bias.iter_mut().zip(&g.d_bias) {
                *b -= eta * db;
            }
        }
        if triggered.iter().any(|&f| f) {
            self.masks_active = true;
        }
        let layer_sparsity = self.layers.iter().map(|l| l.weights.sparsity()).collect();
        Ok(UpdateReport {
            target_sparsity: target,
            triggered,
            layer_sparsity,
            raw_grads,
            pruned_weights,
        })
    }
}

/// Elementwise mean of client-side models. Masks are not averaged.
pub fn average_params(models: &[Vec<ParamBlock>]) -> Result<Vec<ParamBlock>> {
    let first = models
        .first()
        .ok_or_else(|| Error::input("cannot aggregate an empty client list"))?;
    let mut sum = first.clone();
    for m in &models[1..] {
        if m.len() != sum.len() {
            return Err(Error::dim("client models have different layer counts"));
        }
        for (acc, b) in sum.iter_mut().zip(m) {
            acc.weights = acc.weights.zip_map(&b.weights, |x, y| x + y)?;
            if acc.bias.len() != b.bias.len() {
                return Err(Error::dim("client models have different bias lengths"));
            }
            for (x, y) in acc.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }
    let k = models.len() as f64;
    for acc in &mut sum {
        acc.weights = acc.weights.map(|x| x / k);
        for x in &mut acc.bias {
            *x /= k;
        }
    }
    Ok(sum)
}

/// Averages all client models and installs the mean on every client.
pub fn aggregate_clients(clients: &mut [ClientState]) -> Result<Vec<ParamBlock>> {
    let models: Vec<_> = clients.iter().map(ClientState::params).collect();
    let mean = average_params(&models)?;
    for c in clients.iter_mut() {
        c.install(&mean)?;
    }
    Ok(mean)
}
