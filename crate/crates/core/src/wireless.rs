//! Link budget and Shannon-rate model for per-round communication latency.
//!
//! Path loss follows `128.1 + 37.6·log10(d)` with `d` in kilometres. Each
//! client has a dedicated subchannel; no fading or retransmissions.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub distance_km: f64,
    pub tx_power_dbm: f64,
    pub bandwidth_hz: f64,
    pub noise_dbm_per_hz: f64,
}

impl LinkParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_km > 0.0) || !self.distance_km.is_finite() {
            return Err(Error::input(format!(
                "distance must be positive, got {} km",
                self.distance_km
            )));
        }
        if !(self.bandwidth_hz > 0.0) || !self.bandwidth_hz.is_finite() {
            return Err(Error::input(format!(
                "bandwidth must be positive, got {} Hz",
                self.bandwidth_hz
            )));
        }
        Ok(())
    }

    pub fn noise_dbm(&self) -> f64 {
        self.noise_dbm_per_hz + 10.0 * self.bandwidth_hz.log10()
    }

    pub fn snr_db(&self) -> Result<f64> {
        let rx = self.tx_power_dbm - path_loss_db(self.distance_km)?;
        Ok(rx - self.noise_dbm())
    }
}

pub fn path_loss_db(distance_km: f64) -> Result<f64> {
    if !(distance_km > 0.0) {
        return Err(Error::input(format!(
            "distance must be positive, got {distance_km} km"
        )));
    }
    Ok(128.1 + 37.6 * distance_km.log10())
}

/// Shannon rate `B·log2(1 + SNR)` in bits per second.
pub fn link_rate(params: &LinkParams) -> Result<f64> {
    params.validate()?;
    let snr = 10f64.powf(params.snr_db()? / 10.0);
    Ok(params.bandwidth_hz * (1.0 + snr).log2())
}

/// Seconds to move `bytes` at `rate_bps`.
pub fn latency(bytes: u64, rate_bps: f64) -> Result<f64> {
    if !(rate_bps > 0.0) {
        return Err(Error::input(format!("rate must be positive, got {rate_bps}")));
    }
    Ok(bytes as f64 * 8.0 / rate_bps)
}

/// How per-client link latencies combine into a round latency.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LatencyMode {
    /// Clients transmit in parallel on separate subchannels.
    #[default]
    Max,
    /// Clients transmit one after another.
    Sum,
}

impl LatencyMode {
    pub fn combine(self, latencies: impl IntoIterator<Item = f64>) -> f64 {
        match self {
            LatencyMode::Max => latencies.into_iter().fold(0.0, f64::max),
            LatencyMode::Sum => latencies.into_iter().sum(),
        }
    }
}
