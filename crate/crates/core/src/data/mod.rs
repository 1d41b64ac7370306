//! Datasets and client partitioning.

mod dataset;
pub mod idx;
mod partition;

pub use dataset::{synth_mixture, synth_mixture_with_cosine, Dataset, DEFAULT_MEAN_COSINE};
pub use idx::{load_idx, parse_idx, write_idx};
pub use partition::{
    class_counts, dirichlet_partition, largest_remainder, partition_stats, ClientShard, PartitionPlan,
    PartitionRequest, PartitionStats,
};
