use serde::Serialize;

use crate::compression::SparsitySchedule;
use crate::engine::artifacts::{RoundSnapshot, RunArtifacts};
use crate::engine::wire::ParamBlock;
use crate::error::{Error, Result};

/// `Σ_{t=1..T} ρ_t` of the cubic schedule.
pub fn lemma1_sum(rho_f: f64, rounds: u32) -> Result<f64> {
    let s = SparsitySchedule::new(rho_f, rounds)?;
    (1..=rounds).map(|t| s.target(t)).sum()
}

/// Whether `Σ ρ_t < T·ρ_f` holds. False at `T = 1`, where the only term is
/// `ρ_f` itself.
pub fn lemma1_check(rho_f: f64, rounds: u32) -> Result<bool> {
    if !(rho_f > 0.0 && rho_f < 1.0) {
        return Err(Error::input(format!("rho_f {rho_f} not in (0, 1)")));
    }
    Ok(lemma1_sum(rho_f, rounds)? < rounds as f64 * rho_f)
}

#[derive(Debug, Clone, Copy)]
pub struct Lemma2Params {
    pub eta: f64,
    pub agg_interval: u32,
    pub schedule: SparsitySchedule,
}

/// Running-maximum estimates of the per-layer gradient and weight bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalConstants {
    /// `G_l²` for the client-side layers.
    pub g_sq: Vec<f64>,
    /// `W_l²` for every layer, client side first.
    pub w_sq: Vec<f64>,
}

fn max_into(acc: &mut [f64], blocks: &[ParamBlock]) {
    for (a, b) in acc.iter_mut().zip(blocks) {
        *a = a.max(b.squared_norm());
    }
}

impl EmpiricalConstants {
    fn empty(client_layers: usize, server_layers: usize) -> Self {
        Self {
            g_sq: vec![0.0; client_layers],
            w_sq: vec![0.0; client_layers + server_layers],
        }
    }

    fn observe(&mut self, snap: &RoundSnapshot) {
        let split = self.g_sq.len();
        for k in 0..snap.client_weights.len() {
            max_into(&mut self.g_sq, &snap.client_grads[k]);
            max_into(&mut self.w_sq[..split], &snap.client_weights[k]);
            max_into(&mut self.w_sq[..split], &snap.pruned_weights[k]);
        }
        max_into(&mut self.w_sq[split..], &snap.server_weights);
    }

    /// Estimates after each recorded round.
    pub fn running(artifacts: &RunArtifacts) -> Result<Vec<Self>> {
        let first = artifacts
            .rounds
            .first()
            .ok_or_else(|| Error::input("no recorded rounds in run artifacts"))?;
        let split = first.client_weights.first().map_or(0, Vec::len);
        let mut acc = Self::empty(split, first.server_weights.len());
        Ok(artifacts
            .rounds
            .iter()
            .map(|s| {
                acc.observe(s);
                acc.clone()
            })
            .collect())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            g_sq: self.g_sq.iter().map(|v| v * factor).collect(),
            w_sq: self.w_sq.iter().map(|v| v * factor).collect(),
        }
    }

    /// `8η²(I+1)² Σ_{l≤L_c} G_l² + 4 Σ_l W_l² + 2ρ_t Σ_{l≤L_c} W_l²`.
    pub fn lemma2_rhs(&self, eta: f64, agg_interval: u32, rho_t: f64) -> f64 {
        let i1 = agg_interval as f64 + 1.0;
        let g: f64 = self.g_sq.iter().sum();
        let w_all: f64 = self.w_sq.iter().sum();
        let w_client: f64 = self.w_sq[..self.g_sq.len()].iter().sum();
        8.0 * eta * eta * i1 * i1 * g + 4.0 * w_all + 2.0 * rho_t * w_client
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma2Entry {
    pub round: u32,
    pub client: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Lemma2Report {
    /// Multiplier applied to the estimated constants.
    pub scale: f64,
    pub checks: usize,
    pub violations: usize,
    pub max_ratio: f64,
    pub max_ratio_round: u32,
    pub max_ratio_client: usize,
    pub final_constants: EmpiricalConstants,
    pub entries: Vec<Lemma2Entry>,
}

fn squared_distance(a: &[ParamBlock], b: &[ParamBlock]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::dim("models have different layer counts"));
    }
    let mut total = 0.0;
    for (x, y) in a.iter().zip(b) {
        total += x
            .weights
            .zip_map(&y.weights, |p, q| (p - q) * (p - q))?
            .data()
            .iter()
            .sum::<f64>();
        total += x.bias.iter().zip(&y.bias).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    }
    Ok(total)
}

/// Single-sample check of the deviation between the virtual mean client
/// model and each client's masked model, against the bound evaluated with
/// running-maximum constants multiplied by `scale`.
pub fn lemma2_check(artifacts: &RunArtifacts, params: &Lemma2Params, scale: f64) -> Result<Lemma2Report> {
    let constants = EmpiricalConstants::running(artifacts)?;
    let mut entries = Vec::new();
    for (snap, c) in artifacts.rounds.iter().zip(&constants) {
        let c = c.scaled(scale);
        let mean = snap.mean_client_weights()?;
        let rho_t = params.schedule.target(snap.round)?;
        let rhs = c.lemma2_rhs(params.eta, params.agg_interval, rho_t);
        for (k, pruned) in snap.pruned_weights.iter().enumerate() {
            let lhs = squared_distance(&mean, pruned)?;
            let ratio = if rhs > 0.0 {
                lhs / rhs
            } else if lhs > 0.0 {
                f64::INFINITY
            } else {
                0.0
            };
            entries.push(Lemma2Entry {
                round: snap.round,
                client: k,
                lhs,
                rhs,
                ratio,
            });
        }
    }
    let worst = entries
        .iter()
        .max_by(|a, b| a.ratio.total_cmp(&b.ratio))
        .ok_or_else(|| Error::input("run artifacts contain no clients"))?;
    Ok(Lemma2Report {
        scale,
        checks: entries.len(),
        violations: entries.iter().filter(|e| e.lhs > e.rhs).count(),
        max_ratio: worst.ratio,
        max_ratio_round: worst.round,
        max_ratio_client: worst.client,
        final_constants: constants.last().expect("nonempty").scaled(scale),
        entries,
    })
}
