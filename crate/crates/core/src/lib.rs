//! Sememe-incorporated semantic compositionality.
//!
//! Composes embeddings of two-word multiword expressions (MWEs) from their
//! constituents, optionally using the constituents' sememe annotations and
//! the MWE's combination rule, and trains those models for MWE similarity
//! and MWE sememe prediction.

pub mod composition;
pub mod embedding;
pub mod evaluation;
pub mod kb;
pub mod synthetic;
pub mod training;
