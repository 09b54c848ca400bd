use std::io::Write;

use crate::error::Result;

/// Per-round measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundMetrics {
    pub round: u32,
    /// Mean training loss over the clients' batches.
    pub train_loss: f64,
    /// Mean held-out accuracy over clients (dropout off).
    pub accuracy: f64,
    pub aggregated: bool,
    pub target_sparsity: f64,
    /// Pooled client-side weight sparsity right after the client update.
    pub client_sparsity: Vec<f64>,
    /// `[client][layer]` sparsity right after the client update.
    pub layer_sparsity: Vec<Vec<f64>>,
    /// `[client][layer]` whether the sparsity check fired.
    pub pruning_triggered: Vec<Vec<bool>>,
    pub uplink_bytes: Vec<u64>,
    pub downlink_bytes: Vec<u64>,
    pub uplink_latency_s: Vec<f64>,
    pub downlink_latency_s: Vec<f64>,
    pub comm_latency_s: f64,
    pub cumulative_latency_s: f64,
}

impl RoundMetrics {
    pub fn mean_sparsity(&self) -> f64 {
        if self.client_sparsity.is_empty() {
            return 0.0;
        }
        self.client_sparsity.iter().sum::<f64>() / self.client_sparsity.len() as f64
    }

    pub fn total_uplink_bytes(&self) -> u64 {
        self.uplink_bytes.iter().sum()
    }

    pub fn total_downlink_bytes(&self) -> u64 {
        self.downlink_bytes.iter().sum()
    }
}

pub const CSV_HEADER: &str =
    "round,loss,accuracy,mean_sparsity,uplink_bytes,downlink_bytes,comm_latency_s,cumulative_latency_s";

pub fn write_csv<W: Write>(metrics: &[RoundMetrics], mut out: W) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for m in metrics {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            m.round,
            m.train_loss,
            m.accuracy,
            m.mean_sparsity(),
            m.total_uplink_bytes(),
            m.total_downlink_bytes(),
            m.comm_latency_s,
            m.cumulative_latency_s
        )?;
    }
    Ok(())
}

pub fn to_csv_string(metrics: &[RoundMetrics]) -> String {
    let mut buf = Vec::new();
    write_csv(metrics, &mut buf).expect("writing to a Vec cannot fail");
    String::from_utf8(buf).expect("ascii output")
}
