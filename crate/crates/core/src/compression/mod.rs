//! Client-side lightweighting primitives: importance pruning on a cubic
//! sparsity schedule, stochastic uniform gradient quantization, and
//! inverted activation dropout.

mod dropout;
mod prune;
mod quantize;
mod schedule;

pub use dropout::{dropout_backward, dropout_forward, DropoutSpec, KeepMask};
pub use prune::{apply_mask, build_mask, importance, PruneMask};
pub use quantize::{quantize, quantize_masked, QuantizerSpec};
pub use schedule::{target_sparsity, SparsitySchedule};
