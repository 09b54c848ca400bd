//! Per-round weight snapshots used by the post-hoc convergence checks.
//!
//! The snapshot file is a plain concatenation of model messages (see
//! [`wire`](super::wire)). For each recorded round, every client contributes
//! three records in client order (weights at round start, weights after
//! masking, raw gradients), followed by one server record with client id
//! `0xFFFF`.

use crate::engine::wire::{decode_model, encode_model, Header, MsgType, ParamBlock, Reader};
use crate::error::{Error, Result};

pub const SERVER_CLIENT_ID: u16 = u16::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct RoundSnapshot {
    pub round: u32,
    /// `[client][layer]` weights at the start of the round.
    pub client_weights: Vec<Vec<ParamBlock>>,
    /// `[client][layer]` weights after masking.
    pub pruned_weights: Vec<Vec<ParamBlock>>,
    /// `[client][layer]` unmasked, unquantized gradients.
    pub client_grads: Vec<Vec<ParamBlock>>,
    /// Server layers at the start of the round.
    pub server_weights: Vec<ParamBlock>,
}

impl RoundSnapshot {
    /// Elementwise mean of the clients' round-start weights.
    pub fn mean_client_weights(&self) -> Result<Vec<ParamBlock>> {
        crate::engine::client::average_params(&self.client_weights)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunArtifacts {
    pub rounds: Vec<RoundSnapshot>,
}

impl RunArtifacts {
    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        for snap in &self.rounds {
            for k in 0..snap.client_weights.len() {
                let id = u16::try_from(k).map_err(|_| Error::Protocol("client id exceeds u16".into()))?;
                for (ty, blocks) in [
                    (MsgType::SnapshotClientWeights, &snap.client_weights[k]),
                    (MsgType::SnapshotPrunedWeights, &snap.pruned_weights[k]),
                    (MsgType::SnapshotClientGrads, &snap.client_grads[k]),
                ] {
                    let h = Header {
                        round: snap.round,
                        client_id: id,
                        msg_type: ty,
                    };
                    encode_model(h, blocks, &mut out)?;
                }
            }
            let h = Header {
                round: snap.round,
                client_id: SERVER_CLIENT_ID,
                msg_type: MsgType::SnapshotServerWeights,
            };
            encode_model(h, &snap.server_weights, &mut out)?;
        }
        Ok(out)
    }

    /// Parses a snapshot written by [`encode`](Self::encode). Layer counts
    /// come from the model architecture.
    pub fn decode(bytes: &[u8], clients: usize, client_layers: usize, server_layers: usize) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let mut rounds = Vec::new();
        while r.remaining() > 0 {
            let mut snap = RoundSnapshot {
                round: 0,
                client_weights: Vec::with_capacity(clients),
                pruned_weights: Vec::with_capacity(clients),
                client_grads: Vec::with_capacity(clients),
                server_weights: Vec::new(),
            };
            for k in 0..clients {
                for (i, ty) in [
                    MsgType::SnapshotClientWeights,
                    MsgType::SnapshotPrunedWeights,
                    MsgType::SnapshotClientGrads,
                ]
                .into_iter()
                .enumerate()
                {
                    let (h, blocks) = decode_model(&mut r, client_layers)?;
                    if k == 0 && i == 0 {
                        snap.round = h.round;
                    }
                    if h.msg_type != ty || h.client_id as usize != k || h.round != snap.round {
                        return Err(Error::Protocol(format!(
                            "snapshot out of order: expected {ty:?} for client {k} in round {}, got {:?} for client {} in round {}",
                            snap.round, h.msg_type, h.client_id, h.round
                        )));
                    }
                    match ty {
                        MsgType::SnapshotClientWeights => snap.client_weights.push(blocks),
                        MsgType::SnapshotPrunedWeights => snap.pruned_weights.push(blocks),
                        _ => snap.client_grads.push(blocks),
                    }
                }
            }
            let (h, blocks) = decode_model(&mut r, server_layers)?;
            if h.msg_type != MsgType::SnapshotServerWeights || h.round != snap.round {
                return Err(Error::Protocol("snapshot missing server record".into()));
            }
            snap.server_weights = blocks;
            rounds.push(snap);
        }
        Ok(Self { rounds })
    }
}
