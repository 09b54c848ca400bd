//! Experiment configuration: a flat `key = value` text format.
//!
//! Lines starting with `#` are comments. Lists are comma separated. Keys are
//! case sensitive and match the field names documented on
//! [`ExperimentConfig`].

use std::fmt::Write as _;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::wireless::LatencyMode;

/// Layer widths and split point of the shared model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitModelConfig {
    /// Widths from input to output; `L = layer_dims.len() - 1` layers.
    pub layer_dims: Vec<usize>,
    /// Layers `1..=split` live on the clients.
    pub split: usize,
}

impl SplitModelConfig {
    pub fn new(layer_dims: Vec<usize>, split: usize) -> Result<Self> {
        let cfg = Self { layer_dims, split };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 3 {
            return Err(Error::config(
                "layer_dims",
                "need at least two layers (three widths) to split",
            ));
        }
        if self.layer_dims.iter().any(|&d| d == 0) {
            return Err(Error::config("layer_dims", "widths must be positive"));
        }
        if self.split == 0 || self.split >= self.num_layers() {
            return Err(Error::config(
                "L_c",
                format!(
                    "split layer must satisfy 1 <= L_c < L = {}, got {}",
                    self.num_layers(),
                    self.split
                ),
            ));
        }
        Ok(())
    }

    pub fn num_layers(&self) -> usize {
        self.layer_dims.len() - 1
    }

    /// Widths of the client-side stack (input through split layer).
    pub fn client_dims(&self) -> &[usize] {
        &self.layer_dims[..=self.split]
    }

    /// Widths of the server-side stack (split activations through logits).
    pub fn server_dims(&self) -> &[usize] {
        &self.layer_dims[self.split..]
    }

    /// Width of the smashed activations.
    pub fn split_width(&self) -> usize {
        self.layer_dims[self.split]
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn classes(&self) -> usize {
        *self.layer_dims.last().expect("validated")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    /// `K`
    pub clients: usize,
    /// `T`
    pub rounds: u32,
    /// `I`
    pub agg_interval: u32,
    /// `layer_dims` and `L_c` (`L` is implied by the widths).
    pub model: SplitModelConfig,
    pub rho_f: f64,
    /// Quantizer bits; 0 disables quantization.
    pub q: u32,
    /// Dropout probability at the split layer.
    pub p: f64,
    pub eta: f64,
    pub batch: usize,
    pub seed: u64,
    /// Per-client distances in metres. Empty draws them uniformly in
    /// [100, 300] m from the seed; a single value applies to every client.
    pub d_meters: Vec<f64>,
    pub bandwidth_hz: f64,
    pub tx_power_client_dbm: f64,
    pub tx_power_server_dbm: f64,
    pub noise_dbm_per_hz: f64,
    pub latency_mode: LatencyMode,
    pub train_samples: usize,
    pub test_samples: usize,
    /// Standard deviation of each blob around its centre.
    pub blob_spread: f64,
    /// Standard deviation of the blob centres around the origin.
    pub blob_center_scale: f64,
    pub out_dir: String,
    /// Record weight snapshots every this many rounds; 0 disables.
    pub snapshot_every: u32,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            clients: 5,
            rounds: 300,
            agg_interval: 5,
            model: SplitModelConfig {
                layer_dims: vec![16, 32, 32, 8, 10],
                split: 2,
            },
            rho_f: 0.35,
            q: 8,
            p: 0.3,
            eta: 0.05,
            batch: 32,
            seed: 0,
            d_meters: Vec::new(),
            bandwidth_hz: 5e6,
            tx_power_client_dbm: 23.0,
            tx_power_server_dbm: 37.0,
            noise_dbm_per_hz: -174.0,
            latency_mode: LatencyMode::Max,
            train_samples: 1000,
            test_samples: 300,
            blob_spread: 1.0,
            blob_center_scale: 1.0,
            out_dir: "out".to_string(),
            snapshot_every: 0,
        }
    }
}

/// Every accepted key, in documentation order.
pub const CONFIG_KEYS: &[&str] = &[
    "K",
    "T",
    "I",
    "L",
    "L_c",
    "layer_dims",
    "rho_f",
    "q",
    "p",
    "eta",
    "batch",
    "seed",
    "d_meters",
    "bandwidth_hz",
    "tx_power_client_dbm",
    "tx_power_server_dbm",
    "noise_dbm_per_hz",
    "latency_mode",
    "train_samples",
    "test_samples",
    "blob_spread",
    "blob_center_scale",
    "out_dir",
    "snapshot_every",
];

fn parse_scalar<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::config(key, format!("cannot parse `{value}`")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_scalar(key, v)).collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

impl ExperimentConfig {
    /// Parses a config file body on top of the defaults, then validates.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = Vec::new();
        let mut declared_layers = None;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(line, format!("line {} is not `key = value`", lineno + 1))
            })?;
            let key = key.trim();
            if seen.contains(&key.to_string()) {
                return Err(Error::config(key, "given more than once"));
            }
            seen.push(key.to_string());
            if key == "L" {
                declared_layers = Some(parse_scalar::<usize>(key, value)?);
            } else {
                cfg.set(key, value)?;
            }
        }
        if let Some(l) = declared_layers {
            cfg.check_declared_layers(l)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn check_declared_layers(&self, l: usize) -> Result<()> {
        if l != self.model.num_layers() {
            return Err(Error::config(
                "L",
                format!(
                    "L = {l} but layer_dims describes {} layers",
                    self.model.num_layers()
                ),
            ));
        }
        Ok(())
    }

    /// Sets one key from its textual value. Does not validate the result.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "K" => self.clients = parse_scalar(key, v)?,
            "T" => self.rounds = parse_scalar(key, v)?,
            "I" => self.agg_interval = parse_scalar(key, v)?,
            "L" => self.check_declared_layers(parse_scalar(key, v)?)?,
            "L_c" => self.model.split = parse_scalar(key, v)?,
            "layer_dims" => self.model.layer_dims = parse_list(key, v)?,
            "rho_f" => self.rho_f = parse_scalar(key, v)?,
            "q" => self.q = parse_scalar(key, v)?,
            "p" => self.p = parse_scalar(key, v)?,
            "eta" => self.eta = parse_scalar(key, v)?,
            "batch" => self.batch = parse_scalar(key, v)?,
            "seed" => self.seed = parse_scalar(key, v)?,
            "d_meters" => self.d_meters = parse_list(key, v)?,
            "bandwidth_hz" => self.bandwidth_hz = parse_scalar(key, v)?,
            "tx_power_client_dbm" => self.tx_power_client_dbm = parse_scalar(key, v)?,
            "tx_power_server_dbm" => self.tx_power_server_dbm = parse_scalar(key, v)?,
            "noise_dbm_per_hz" => self.noise_dbm_per_hz = parse_scalar(key, v)?,
            "latency_mode" => {
                self.latency_mode = match v {
                    "max" => LatencyMode::Max,
                    "sum" => LatencyMode::Sum,
                    _ => return Err(Error::config(key, "expected `max` or `sum`")),
                }
            }
            "train_samples" => self.train_samples = parse_scalar(key, v)?,
            "test_samples" => self.test_samples = parse_scalar(key, v)?,
            "blob_spread" => self.blob_spread = parse_scalar(key, v)?,
            "blob_center_scale" => self.blob_center_scale = parse_scalar(key, v)?,
            "out_dir" => self.out_dir = v.to_string(),
            "snapshot_every" => self.snapshot_every = parse_scalar(key, v)?,
            _ => {
                return Err(Error::config(
                    key,
                    format!("unknown key; accepted keys are {}", CONFIG_KEYS.join(", ")),
                ))
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.clients == 0 || self.clients > u16::MAX as usize {
            return Err(Error::config("K", "need between 1 and 65535 clients"));
        }
        if self.rounds == 0 {
            return Err(Error::config("T", "need at least one round"));
        }
        if self.agg_interval < 1 {
            return Err(Error::config("I", "aggregation interval must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.rho_f) {
            return Err(Error::config("rho_f", "final sparsity must lie in [0, 1)"));
        }
        if self.q > crate::compression::QuantizerSpec::MAX_BITS {
            return Err(Error::config(
                "q",
                "quantizer bits must be 0 (off) or between 1 and 32",
            ));
        }
        if !(0.0..1.0).contains(&self.p) {
            return Err(Error::config("p", "dropout probability must lie in [0, 1)"));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::config("eta", "learning rate must be positive"));
        }
        if self.batch == 0 {
            return Err(Error::config("batch", "batch size must be positive"));
        }
        if self.classes() > u16::MAX as usize + 1 {
            return Err(Error::config("layer_dims", "too many classes for u16 labels"));
        }
        if self.train_samples < self.clients * self.batch {
            return Err(Error::config(
                "train_samples",
                format!(
                    "{} samples cannot give each of {} clients a batch of {}",
                    self.train_samples, self.clients, self.batch
                ),
            ));
        }
        if self.test_samples == 0 {
            return Err(Error::config("test_samples", "need a held-out set"));
        }
        if !self.d_meters.is_empty() && self.d_meters.len() != 1 && self.d_meters.len() != self.clients
        {
            return Err(Error::config(
                "d_meters",
                format!(
                    "give one distance or one per client ({}), got {}",
                    self.clients,
                    self.d_meters.len()
                ),
            ));
        }
        if self.d_meters.iter().any(|&d| !(d > 0.0)) {
            return Err(Error::config("d_meters", "distances must be positive"));
        }
        if !(self.bandwidth_hz > 0.0) {
            return Err(Error::config("bandwidth_hz", "bandwidth must be positive"));
        }
        if !(self.blob_spread >= 0.0) || !(self.blob_center_scale >= 0.0) {
            return Err(Error::config("blob_spread", "blob scales must be nonnegative"));
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.model.classes()
    }

    /// Renders the config back into the text format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mode = match self.latency_mode {
            LatencyMode::Max => "max",
            LatencyMode::Sum => "sum",
        };
        let _ = writeln!(s, "K = {}", self.clients);
        let _ = writeln!(s, "T = {}", self.rounds);
        let _ = writeln!(s, "I = {}", self.agg_interval);
        let _ = writeln!(s, "L = {}", self.model.num_layers());
        let _ = writeln!(s, "L_c = {}", self.model.split);
        let _ = writeln!(s, "layer_dims = {}", join(&self.model.layer_dims));
        let _ = writeln!(s, "rho_f = {}", self.rho_f);
        let _ = writeln!(s, "q = {}", self.q);
        let _ = writeln!(s, "p = {}", self.p);
        let _ = writeln!(s, "eta = {}", self.eta);
        let _ = writeln!(s, "batch = {}", self.batch);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "d_meters = {}", join(&self.d_meters));
        let _ = writeln!(s, "bandwidth_hz = {}", self.bandwidth_hz);
        let _ = writeln!(s, "tx_power_client_dbm = {}", self.tx_power_client_dbm);
        let _ = writeln!(s, "tx_power_server_dbm = {}", self.tx_power_server_dbm);
        let _ = writeln!(s, "noise_dbm_per_hz = {}", self.noise_dbm_per_hz);
        let _ = writeln!(s, "latency_mode = {mode}");
        let _ = writeln!(s, "train_samples = {}", self.train_samples);
        let _ = writeln!(s, "test_samples = {}", self.test_samples);
        let _ = writeln!(s, "blob_spread = {}", self.blob_spread);
        let _ = writeln!(s, "blob_center_scale = {}", self.blob_center_scale);
        let _ = writeln!(s, "out_dir = {}", self.out_dir);
        let _ = writeln!(s, "snapshot_every = {}", self.snapshot_every);
        s
    }
}
