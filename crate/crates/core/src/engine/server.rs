use crate::engine::wire::{ActivationGrads, SmashedData};
use crate::error::{Error, Result};
use crate::nn::{softmax_cross_entropy, stack_backward, stack_forward, DenseLayer, LayerGrads};
use crate::tensor::Tensor2;

/// Server-side layers `L_c+1..L`. Per-client replicas only exist inside a
/// round and all start from these weights.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState {
    pub layers: Vec<DenseLayer>,
}

/// How the per-client server gradients become one update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ServerUpdate {
    /// `w ← w − (η/K)·Σ g_k`.
    #[default]
    Averaged,
    /// Each replica steps `w − η·g_k`, then the replicas are averaged.
    Replicas,
}

#[derive(Debug, Clone)]
pub struct ServerRoundOutput {
    /// Sparse activation gradients, one per input message, same order.
    pub grads: Vec<ActivationGrads>,
    /// Training loss per client batch, before the update.
    pub losses: Vec<f64>,
}

fn add_into(acc: &mut [LayerGrads], g: &[LayerGrads]) -> Result<()> {
    for (a, b) in acc.iter_mut().zip(g) {
        a.d_weights = a.d_weights.zip_map(&b.d_weights, |x, y| x + y)?;
        for (x, y) in a.d_bias.iter_mut().zip(&b.d_bias) {
            *x += y;
        }
    }
    Ok(())
}

impl ServerState {
    pub fn new(layers: Vec<DenseLayer>) -> Self {
        Self { layers }
    }

    fn client_pass(&self, smashed: &SmashedData) -> Result<(f64, Vec<LayerGrads>, ActivationGrads)> {
        let in_dim = self.layers.first().map_or(0, DenseLayer::in_dim);
        if smashed.feature_dim() != in_dim {
            return Err(Error::Protocol(format!(
                "client {} sent {}-wide activations, server expects {}",
                smashed.client_id,
                smashed.feature_dim(),
                in_dim
            )));
        }
        let acts = smashed.reconstruct()?;
        let trace = stack_forward(&self.layers, &acts)?;
        let (loss, d_logits) = softmax_cross_entropy(&trace.output, &smashed.labels)
            .map_err(|e| Error::Protocol(format!("client {}: {e}", smashed.client_id)))?;
        let (grads, d_acts) = stack_backward(&self.layers, &trace, &d_logits)?;
        let rows = d_acts.select_rows(&smashed.kept_row_indices)?;
        Ok((
            loss,
            grads,
            ActivationGrads {
                round: smashed.round,
                client_id: smashed.client_id,
                kept_row_indices: smashed.kept_row_indices.clone(),
                rows,
            },
        ))
    }

    /// Forward and backward for every client's smashed data on the current
    /// weights, then a single server update.
    pub fn server_round(
        &mut self,
        smashed: &[SmashedData],
        eta: f64,
        form: ServerUpdate,
    ) -> Result<ServerRoundOutput> {
        if smashed.is_empty() {
            return Err(Error::input("server round needs at least one client message"));
        }
        let k = smashed.len();
        let mut losses = Vec::with_capacity(k);
        let mut act_grads = Vec::with_capacity(k);
        let mut per_client = Vec::with_capacity(k);
        for s in smashed {
            let (loss, grads, ag) = self.client_pass(s)?;
            losses.push(loss);
            act_grads.push(ag);
            per_client.push(grads);
        }

        match form {
            ServerUpdate::Averaged => {
                let mut iter = per_client.into_iter();
                let mut sum = iter.next().expect("nonempty");
                for g in iter {
                    add_into(&mut sum, &g)?;
                }
                let step = eta / k as f64;
                for (layer, g) in self.layers.iter_mut().zip(&sum) {
                    layer.sgd_step(g, step)?;
                }
            }
            ServerUpdate::Replicas => {
                let mut replicas: Vec<Vec<DenseLayer>> = Vec::with_capacity(k);
                for g in &per_client {
                    let mut r = self.layers.clone();
                    for (layer, lg) in r.iter_mut().zip(g) {
                        layer.sgd_step(lg, eta)?;
                    }
                    replicas.push(r);
                }
                self.layers = average_layers(&replicas)?;
            }
        }
        Ok(ServerRoundOutput {
            grads: act_grads,
            losses,
        })
    }

    /// Server-side replicas for `k` clients; identical by construction.
    pub fn replicas(&self, k: usize) -> Vec<Vec<DenseLayer>> {
        vec![self.layers.clone(); k]
    }
}

fn average_layers(replicas: &[Vec<DenseLayer>]) -> Result<Vec<DenseLayer>> {
    let k = replicas.len() as f64;
    let mut sum = replicas[0].clone();
    for r in &replicas[1..] {
        for (a, b) in sum.iter_mut().zip(r) {
            a.weights = a.weights.zip_map(&b.weights, |x, y| x + y)?;
            for (x, y) in a.bias.iter_mut().zip(&b.bias) {
                *x += y;
            }
        }
    }
    for a in &mut sum {
        a.weights = a.weights.map(|x| x / k);
        for x in &mut a.bias {
            *x /= k;
        }
    }
    Ok(sum)
}

/// Runs `layers` on a batch and returns the logits.
pub fn logits(layers: &[DenseLayer], input: &Tensor2) -> Result<Tensor2> {
    Ok(stack_forward(layers, input)?.output)
}
