//! Desk-scale federated training: synthetic data, non-IID partitioning, local
//! SGD, round orchestration and metrics.

mod data;
mod metrics;
mod model;
mod partition;
mod round;
mod train;

pub use data::{generate_dataset, DatasetParams, SyntheticDataset};
pub use metrics::{attack_success_rate, compute_metrics, RunSummary};
pub use model::{Architecture, ModelSpec};
pub use partition::{dirichlet_partition, ClientPartition};
pub use round::{
    triggered_set, Federation, RoundOutput, RoundRecord, RoundTiming, SimConfig, Simulation,
};
pub use train::{local_train, TrainConfig};
