//! Metadata-quality auditing for BioSample-style sample records.

pub mod audit;
pub mod dictionary;
pub mod ingest;
pub mod normalize;
pub mod resolve;
pub mod stats;
pub mod synth;
pub mod validate;
