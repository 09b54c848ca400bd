//! Little-endian wire encodings used for byte accounting.
//!
//! ```text
//! header          u32 round | u16 client_id | u16 msg_type
//! smashed data    header | u32 kept_count | u32 index × kept | f32 row-major rows | u16 label × batch
//! activation grad header | u32 kept_count | u32 index × kept | f32 row-major rows
//! model           header | per layer { u32 rows | u32 cols | f32 weights | f32 biases }
//! ```
//!
//! In-memory messages keep `f64` values; encoding rounds them to `f32`.

use crate::error::{Error, Result};
use crate::tensor::Tensor2;

pub const HEADER_BYTES: u64 = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u16)]
pub enum MsgType {
    Smashed = 1,
    ActivationGrad = 2,
    ModelUpload = 3,
    ModelBroadcast = 4,
    SnapshotClientWeights = 16,
    SnapshotPrunedWeights = 17,
    SnapshotClientGrads = 18,
    SnapshotServerWeights = 19,
}

impl MsgType {
    pub fn from_u16(v: u16) -> Result<Self> {
        Ok(match v {
            1 => MsgType::Smashed,
            2 => MsgType::ActivationGrad,
            3 => MsgType::ModelUpload,
            4 => MsgType::ModelBroadcast,
            16 => MsgType::SnapshotClientWeights,
            17 => MsgType::SnapshotPrunedWeights,
            18 => MsgType::SnapshotClientGrads,
            19 => MsgType::SnapshotServerWeights,
            _ => return Err(Error::Protocol(format!("unknown message type {v}"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub round: u32,
    pub client_id: u16,
    pub msg_type: MsgType,
}

impl Header {
    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&self.client_id.to_le_bytes());
        out.extend_from_slice(&(self.msg_type as u16).to_le_bytes());
    }
}

/// Byte cursor over a received buffer.
pub struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }

    pub fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.remaining() < n {
            return Err(Error::Protocol(format!(
                "truncated message: wanted {n} bytes at offset {}, {} left",
                self.pos,
                self.remaining()
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn header(&mut self) -> Result<Header> {
        let round = self.u32()?;
        let client_id = self.u16()?;
        let msg_type = MsgType::from_u16(self.u16()?)?;
        Ok(Header {
            round,
            client_id,
            msg_type,
        })
    }

    fn f32_tensor(&mut self, rows: usize, cols: usize) -> Result<Tensor2> {
        let data = (0..rows * cols)
            .map(|_| self.f32().map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        Tensor2::from_vec(rows, cols, data)
    }
}

fn put_f32s(out: &mut Vec<u8>, values: &[f64]) {
    for &v in values {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
}

fn put_indices(out: &mut Vec<u8>, indices: &[usize]) -> Result<()> {
    out.extend_from_slice(&(indices.len() as u32).to_le_bytes());
    for &i in indices {
        let i = u32::try_from(i).map_err(|_| Error::Protocol("row index exceeds u32".into()))?;
        out.extend_from_slice(&i.to_le_bytes());
    }
    Ok(())
}

fn check_sparse_rows(indices: &[usize], rows: &Tensor2, batch_rows: usize) -> Result<()> {
    if rows.rows() != indices.len() {
        return Err(Error::Protocol(format!(
            "{} rows for {} kept indices",
            rows.rows(),
            indices.len()
        )));
    }
    if indices.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Protocol("kept indices must be strictly increasing".into()));
    }
    if indices.last().is_some_and(|&i| i >= batch_rows) {
        return Err(Error::Protocol(format!(
            "kept index out of range for a batch of {batch_rows}"
        )));
    }
    Ok(())
}

/// Post-dropout split-layer activations plus the batch labels.
#[derive(Debug, Clone, PartialEq)]
pub struct SmashedData {
    pub round: u32,
    pub client_id: u16,
    pub kept_row_indices: Vec<usize>,
    /// Kept rows only, already scaled by `1/(1-p)`.
    pub kept_rows: Tensor2,
    /// One label per batch row, dropped rows included.
    pub labels: Vec<usize>,
}

impl SmashedData {
    pub fn new(
        round: u32,
        client_id: u16,
        kept_row_indices: Vec<usize>,
        kept_rows: Tensor2,
        labels: Vec<usize>,
    ) -> Result<Self> {
        check_sparse_rows(&kept_row_indices, &kept_rows, labels.len())?;
        Ok(Self {
            round,
            client_id,
            kept_row_indices,
            kept_rows,
            labels,
        })
    }

    pub fn batch_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.kept_rows.cols()
    }

    /// Activation payload: header, kept count, indices and rows.
    pub fn payload_bytes(&self) -> u64 {
        let kept = self.kept_row_indices.len() as u64;
        HEADER_BYTES + 4 + 4 * kept + 4 * kept * self.feature_dim() as u64
    }

    pub fn label_bytes(&self) -> u64 {
        2 * self.labels.len() as u64
    }

    /// Length of [`encode`](Self::encode).
    pub fn wire_len(&self) -> u64 {
        self.payload_bytes() + self.label_bytes()
    }

    /// Dense split-layer batch with dropped rows zero-filled.
    pub fn reconstruct(&self) -> Result<Tensor2> {
        Tensor2::scatter_rows(&self.kept_rows, &self.kept_row_indices, self.batch_rows())
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.wire_len() as usize);
        Header {
            round: self.round,
            client_id: self.client_id,
            msg_type: MsgType::Smashed,
        }
        .write(&mut out);
        put_indices(&mut out, &self.kept_row_indices)?;
        put_f32s(&mut out, self.kept_rows.data());
        for &l in &self.labels {
            let l = u16::try_from(l).map_err(|_| Error::Protocol("label exceeds u16".into()))?;
            out.extend_from_slice(&l.to_le_bytes());
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8], feature_dim: usize) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let h = r.header()?;
        if h.msg_type != MsgType::Smashed {
            return Err(Error::Protocol(format!("expected smashed data, got {:?}", h.msg_type)));
        }
        let kept = r.u32()? as usize;
        let indices = (0..kept)
            .map(|_| r.u32().map(|i| i as usize))
            .collect::<Result<Vec<_>>>()?;
        let rows = r.f32_tensor(kept, feature_dim)?;
        if r.remaining() % 2 != 0 {
            return Err(Error::Protocol("label section has odd length".into()));
        }
        let labels = (0..r.remaining() / 2)
            .map(|_| r.u16().map(usize::from))
            .collect::<Result<Vec<_>>>()?;
        Self::new(h.round, h.client_id, indices, rows, labels)
    }
}

/// Downlink gradient w.r.t. the kept smashed rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationGrads {
    pub round: u32,
    pub client_id: u16,
    pub kept_row_indices: Vec<usize>,
    pub rows: Tensor2,
}

impl ActivationGrads {
    pub fn wire_len(&self) -> u64 {
        let kept = self.kept_row_indices.len() as u64;
        HEADER_BYTES + 4 + 4 * kept + 4 * kept * self.rows.cols() as u64
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = Vec::with_capacity(self.wire_len() as usize);
        Header {
            round: self.round,
            client_id: self.client_id,
            msg_type: MsgType::ActivationGrad,
        }
        .write(&mut out);
        put_indices(&mut out, &self.kept_row_indices)?;
        put_f32s(&mut out, self.rows.data());
        Ok(out)
    }

    pub fn decode(bytes: &[u8], feature_dim: usize) -> Result<Self> {
        let mut r = Reader::new(bytes);
        let h = r.header()?;
        if h.msg_type != MsgType::ActivationGrad {
            return Err(Error::Protocol(format!(
                "expected activation gradients, got {:?}",
                h.msg_type
            )));
        }
        let kept = r.u32()? as usize;
        let kept_row_indices = (0..kept)
            .map(|_| r.u32().map(|i| i as usize))
            .collect::<Result<Vec<_>>>()?;
        let rows = r.f32_tensor(kept, feature_dim)?;
        if r.remaining() != 0 {
            return Err(Error::Protocol("trailing bytes after activation gradients".into()));
        }
        Ok(Self {
            round: h.round,
            client_id: h.client_id,
            kept_row_indices,
            rows,
        })
    }
}

/// Weight matrix and bias of one layer as carried by model messages.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamBlock {
    pub weights: Tensor2,
    pub bias: Vec<f64>,
}

impl ParamBlock {
    pub fn squared_norm(&self) -> f64 {
        self.weights.squared_norm() + self.bias.iter().map(|b| b * b).sum::<f64>()
    }
}

/// Encoded size of a model message carrying layers of the given shapes
/// (`rows × cols` weights, `rows` biases).
pub fn model_message_len(shapes: impl IntoIterator<Item = (usize, usize)>) -> u64 {
    HEADER_BYTES
        + shapes
            .into_iter()
            .map(|(r, c)| 8 + 4 * (r * c) as u64 + 4 * r as u64)
            .sum::<u64>()
}

pub fn encode_model(header: Header, blocks: &[ParamBlock], out: &mut Vec<u8>) -> Result<()> {
    header.write(out);
    for b in blocks {
        if b.bias.len() != b.weights.rows() {
            return Err(Error::Protocol("bias length does not match weight rows".into()));
        }
        out.extend_from_slice(&(b.weights.rows() as u32).to_le_bytes());
        out.extend_from_slice(&(b.weights.cols() as u32).to_le_bytes());
        put_f32s(out, b.weights.data());
        put_f32s(out, &b.bias);
    }
    Ok(())
}

/// Reads one model message with `layers` blocks from `r`.
pub fn decode_model(r: &mut Reader<'_>, layers: usize) -> Result<(Header, Vec<ParamBlock>)> {
    let h = r.header()?;
    let mut blocks = Vec::with_capacity(layers);
    for _ in 0..layers {
        let rows = r.u32()? as usize;
        let cols = r.u32()? as usize;
        let weights = r.f32_tensor(rows, cols)?;
        let bias = (0..rows)
            .map(|_| r.f32().map(f64::from))
            .collect::<Result<Vec<_>>>()?;
        blocks.push(ParamBlock { weights, bias });
    }
    Ok((h, blocks))
}
