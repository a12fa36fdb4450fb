//! Semantics-to-space (S2S) zero-shot verb-object matching.
//!
//! The visual stream replaces RGB input with a blob in which every detected
//! object's mask is filled with its label's word vector; a query stream
//! encodes the verb-object phrase; a closeness head scores the pair.

pub mod checkpoint;
pub mod error;
pub mod eval;
pub mod maskio;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod s2s;
pub mod synthgen;
pub mod train;
pub mod wordvec;

pub use error::{Result, S2sError};
