//! Patients, labels, splits, loss weights and the embedding bridge.

mod embeddings;
mod label;
mod records;
mod split;
mod synthetic;

pub use embeddings::{read_embeddings, write_embedding_index, write_embeddings, EmbeddingSet};
pub use label::MurmurLabel;
pub use records::{export_manifest, ingest_circor, ingest_manifest, Ingested, PatientRecord, Recording};
pub use split::{
    class_counts, class_weights, largest_remainder, stratified_split, weights_from_counts, Fold,
    SplitAssignment, DEFAULT_FRACTIONS,
};
pub use synthetic::{generate_synthetic, synthetic_embeddings, SyntheticSpec, SYNTH_RATE};
