//! Datasets, ingestion and client partitioning.

mod dataset;
mod partition;

pub use dataset::{ingest_csv, synth_clusters, synth_clusters_stream, Batch, CsvSchema, Dataset, Provenance};
pub use partition::{dirichlet_partition, min_client_size, next_batch, Partition, MAX_PARTITION_RETRIES};
