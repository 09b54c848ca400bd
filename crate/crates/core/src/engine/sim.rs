//! Round orchestration: forward on every client, one server round, client
//! updates, and periodic client-side aggregation.

use crate::compression::{DropoutSpec, QuantizerSpec, SparsitySchedule};
use crate::engine::artifacts::{RoundSnapshot, RunArtifacts};
use crate::engine::client::{aggregate_clients, param_blocks, ClientState, UpdateSettings};
use crate::engine::config::ExperimentConfig;
use crate::engine::data::{gaussian_blobs, partition_iid, BlobSpec, Dataset};
use crate::engine::metrics::RoundMetrics;
use crate::engine::server::{logits, ServerState, ServerUpdate};
use crate::engine::wire::model_message_len;
use crate::error::{Error, Result};
use crate::nn::{accuracy, init_stack, DenseLayer};
use crate::rng::{tag, Rng};
use crate::wireless::{latency, link_rate, LinkParams};

/// All state of one simulated deployment.
#[derive(Debug, Clone)]
pub struct Simulation {
    cfg: ExperimentConfig,
    clients: Vec<ClientState>,
    server: ServerState,
    test: Dataset,
    distances_km: Vec<f64>,
    uplink_rates: Vec<f64>,
    downlink_rates: Vec<f64>,
    settings: UpdateSettings,
    next_round: u32,
    cumulative_latency_s: f64,
    artifacts: Option<RunArtifacts>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub metrics: Vec<RoundMetrics>,
    pub artifacts: Option<RunArtifacts>,
}

/// Client distances in km: from config, or uniform in [0.1, 0.3] km.
pub fn client_distances_km(cfg: &ExperimentConfig) -> Vec<f64> {
    match cfg.d_meters.len() {
        0 => {
            let mut rng = Rng::derive(cfg.seed, &[tag::DISTANCE]);
            (0..cfg.clients).map(|_| rng.uniform_range(0.1, 0.3)).collect()
        }
        1 => vec![cfg.d_meters[0] / 1000.0; cfg.clients],
        _ => cfg.d_meters.iter().map(|d| d / 1000.0).collect(),
    }
}

/// Initial full-model layers for a config, before splitting.
pub fn initial_layers(cfg: &ExperimentConfig) -> Vec<DenseLayer> {
    init_stack(&cfg.model.layer_dims, &mut Rng::derive(cfg.seed, &[tag::INIT]))
}

/// Training shards (one per client) and the held-out set for a config.
pub fn build_data(cfg: &ExperimentConfig) -> Result<(Vec<Dataset>, Dataset)> {
    let spec = BlobSpec {
        classes: cfg.classes(),
        dim: cfg.model.input_dim(),
        train_samples: cfg.train_samples,
        test_samples: cfg.test_samples,
        spread: cfg.blob_spread,
        center_scale: cfg.blob_center_scale,
    };
    let (train, test) = gaussian_blobs(&spec, cfg.seed)?;
    Ok((partition_iid(&train, cfg.clients, cfg.seed)?, test))
}

impl Simulation {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let mut layers = initial_layers(cfg);
        let server_layers = layers.split_off(cfg.model.split);
        let (shards, test) = build_data(cfg)?;
        let clients = shards
            .into_iter()
            .enumerate()
            .map(|(k, shard)| ClientState::new(k, layers.clone(), shard, cfg.batch, cfg.seed))
            .collect::<Result<Vec<_>>>()?;

        let distances_km = client_distances_km(cfg);
        let rate = |d: f64, tx: f64| {
            link_rate(&LinkParams {
                distance_km: d,
                tx_power_dbm: tx,
                bandwidth_hz: cfg.bandwidth_hz,
                noise_dbm_per_hz: cfg.noise_dbm_per_hz,
            })
        };
        let uplink_rates = distances_km
            .iter()
            .map(|&d| rate(d, cfg.tx_power_client_dbm))
            .collect::<Result<Vec<_>>>()?;
        let downlink_rates = distances_km
            .iter()
            .map(|&d| rate(d, cfg.tx_power_server_dbm))
            .collect::<Result<Vec<_>>>()?;

        let settings = UpdateSettings {
            schedule: SparsitySchedule::new(cfg.rho_f, cfg.rounds)?,
            quantizer: if cfg.q == 0 {
                None
            } else {
                Some(QuantizerSpec::new(cfg.q)?)
            },
            dropout: DropoutSpec::new(cfg.p)?,
            eta: cfg.eta,
        };
        Ok(Self {
            cfg: cfg.clone(),
            clients,
            server: ServerState::new(server_layers),
            test,
            distances_km,
            uplink_rates,
            downlink_rates,
            settings,
            next_round: 1,
            cumulative_latency_s: 0.0,
            artifacts: (cfg.snapshot_every > 0).then(RunArtifacts::default),
        })
    }

    /// Turns snapshot recording on (every `snapshot_every` rounds, or every
    /// round if the config leaves it at 0).
    pub fn record_artifacts(&mut self) {
        if self.cfg.snapshot_every == 0 {
            self.cfg.snapshot_every = 1;
        }
        self.artifacts.get_or_insert_with(RunArtifacts::default);
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn clients(&self) -> &[ClientState] {
        &self.clients
    }

    pub fn server(&self) -> &ServerState {
        &self.server
    }

    pub fn distances_km(&self) -> &[f64] {
        &self.distances_km
    }

    pub fn uplink_rates(&self) -> &[f64] {
        &self.uplink_rates
    }

    pub fn downlink_rates(&self) -> &[f64] {
        &self.downlink_rates
    }

    pub fn artifacts(&self) -> Option<&RunArtifacts> {
        self.artifacts.as_ref()
    }

    /// Mean held-out accuracy across clients with dropout off.
    pub fn evaluate(&self) -> Result<f64> {
        let mut total = 0.0;
        for c in &self.clients {
            let split = logits(&c.layers, &self.test.features)?;
            let out = logits(&self.server.layers, &split)?;
            total += accuracy(&out, &self.test.labels);
        }
        Ok(total / self.clients.len() as f64)
    }

    fn client_model_bytes(&self) -> u64 {
        model_message_len(self.clients[0].layers.iter().map(|l| l.weights.shape()))
    }

    /// Executes round `t`; rounds must run in order starting at 1.
    pub fn run_round(&mut self, t: u32) -> Result<RoundMetrics> {
        if t != self.next_round || t > self.cfg.rounds {
            return Err(Error::input(format!(
                "expected round {} of {}, got {t}",
                self.next_round, self.cfg.rounds
            )));
        }
        let record = self.artifacts.is_some() && t % self.cfg.snapshot_every == 0;
        let start_weights: Vec<_> = if record {
            self.clients.iter().map(ClientState::params).collect()
        } else {
            Vec::new()
        };
        let start_server = if record {
            param_blocks(&self.server.layers)
        } else {
            Vec::new()
        };

        // Client forward + dropout, smashed data uplink.
        let mut caches = Vec::with_capacity(self.clients.len());
        let mut smashed = Vec::with_capacity(self.clients.len());
        for c in &mut self.clients {
            let (cache, s) = c.client_forward(t, &self.settings.dropout)?;
            caches.push(cache);
            smashed.push(s);
        }

        // Server forward/backward and averaged update.
        let out = self
            .server
            .server_round(&smashed, self.cfg.eta, ServerUpdate::Averaged)?;

        // Client backward, pruning, quantized update.
        let mut reports = Vec::with_capacity(self.clients.len());
        for ((c, cache), g) in self.clients.iter_mut().zip(&caches).zip(&out.grads) {
            reports.push(c.client_update(cache, g, &self.settings)?);
        }
        let client_sparsity: Vec<f64> = self.clients.iter().map(ClientState::sparsity).collect();

        let aggregated = t % self.cfg.agg_interval == 0;
        if aggregated {
            aggregate_clients(&mut self.clients)?;
        }

        let model_bytes = if aggregated { self.client_model_bytes() } else { 0 };
        let uplink_bytes: Vec<u64> = smashed.iter().map(|s| s.wire_len() + model_bytes).collect();
        let downlink_bytes: Vec<u64> = out.grads.iter().map(|g| g.wire_len() + model_bytes).collect();
        let uplink_latency_s = uplink_bytes
            .iter()
            .zip(&self.uplink_rates)
            .map(|(&b, &r)| latency(b, r))
            .collect::<Result<Vec<_>>>()?;
        let downlink_latency_s = downlink_bytes
            .iter()
            .zip(&self.downlink_rates)
            .map(|(&b, &r)| latency(b, r))
            .collect::<Result<Vec<_>>>()?;
        let mode = self.cfg.latency_mode;
        let comm_latency_s =
            mode.combine(uplink_latency_s.iter().copied()) + mode.combine(downlink_latency_s.iter().copied());
        self.cumulative_latency_s += comm_latency_s;

        if record {
            let snap = RoundSnapshot {
                round: t,
                client_weights: start_weights,
                pruned_weights: reports.iter().map(|r| r.pruned_weights.clone()).collect(),
                client_grads: reports.iter().map(|r| r.raw_grads.clone()).collect(),
                server_weights: start_server,
            };
            self.artifacts.as_mut().expect("recording").rounds.push(snap);
        }

        let accuracy = self.evaluate()?;
        self.next_round += 1;
        Ok(RoundMetrics {
            round: t,
            train_loss: out.losses.iter().sum::<f64>() / out.losses.len() as f64,
            accuracy,
            aggregated,
            target_sparsity: reports[0].target_sparsity,
            client_sparsity,
            layer_sparsity: reports.iter().map(|r| r.layer_sparsity.clone()).collect(),
            pruning_triggered: reports.iter().map(|r| r.triggered.clone()).collect(),
            uplink_bytes,
            downlink_bytes,
            uplink_latency_s,
            downlink_latency_s,
            comm_latency_s,
            cumulative_latency_s: self.cumulative_latency_s,
        })
    }

    /// Runs all remaining rounds.
    pub fn run(mut self) -> Result<RunOutput> {
        let mut metrics = Vec::with_capacity(self.cfg.rounds as usize);
        while self.next_round <= self.cfg.rounds {
            metrics.push(self.run_round(self.next_round)?);
        }
        Ok(RunOutput {
            metrics,
            artifacts: self.artifacts,
        })
    }
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    Simulation::new(cfg)?.run()
}
