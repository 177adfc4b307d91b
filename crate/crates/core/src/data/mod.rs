//! Datasets, participant partitioning, and transfer-set construction.

mod dataset;
pub mod partition;
mod transfer;

pub use dataset::{
    dataset_to_csv, load_dataset, parse_dataset, save_dataset, split_indices, split_train_val,
    LabeledDataset, ToySpec,
};
pub use partition::{
    partition_label_skew_chunks, partition_label_skew_dirichlet, partition_quantity_skew,
    partition_specialized, partition_uniform, PartitionParams, PartitionPlan, PartitionStrategy,
    Partitioner, PartitionerRegistry,
};
pub use transfer::{build_transfer_set, TransferOrigin, TransferSet, TransferSizes};
