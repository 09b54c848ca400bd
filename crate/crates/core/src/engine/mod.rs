//! Federated split learning engine: client and server state, the wire
//! format, and the round loop.

pub mod artifacts;
pub mod client;
pub mod config;
pub mod data;
pub mod metrics;
pub mod server;
pub mod sim;
pub mod wire;

pub use artifacts::{RoundSnapshot, RunArtifacts};
pub use client::{aggregate_clients, average_params, ClientState, ForwardCache, UpdateReport, UpdateSettings};
pub use config::{ExperimentConfig, SplitModelConfig};
pub use data::{BatchSampler, BlobSpec, Dataset};
pub use metrics::{to_csv_string, write_csv, RoundMetrics};
pub use server::{ServerRoundOutput, ServerState, ServerUpdate};
pub use sim::{run_experiment, RunOutput, Simulation};
pub use wire::{ActivationGrads, ParamBlock, SmashedData};
