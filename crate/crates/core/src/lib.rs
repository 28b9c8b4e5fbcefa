//! Heart-murmur detection from phonocardiogram recordings.
//!
//! The pipeline runs recording → 16 kHz waveform → 5 s segments → log-mel
//! spectrogram (or a precomputed embedding) → a batch-norm + linear head,
//! optionally on top of a small MLP backbone. Segment logits are averaged per
//! recording, recordings are combined into a patient label, and patients are
//! scored with weighted accuracy and unweighted average recall.
//!
//! Modules:
//!
//! - [`audio`]: WAV decoding, resampling and the two segmentation policies.
//! - [`features`]: log-mel front end and SpecAugment masking.
//! - [`dataset`]: CirCor / manifest ingestion, stratified splits, class
//!   weights, the embedding bridge file and synthetic data.
//! - [`nn`]: tensor tape with reverse-mode gradients, the classifier head,
//!   the MLP backbone, AdamW and the learning-rate schedule.
//! - [`train`]: training loop, checkpoint selection and the multi-run protocol.
//! - [`eval`]: aggregation, decision rule, metrics and ensembling.

pub mod audio;
pub mod dataset;
pub mod error;
pub mod eval;

pub mod features;
pub mod nn;
pub mod train;


pub use dataset::MurmurLabel;
pub use error::{Error, Result};
