//! Fraud-ring discovery on heterogeneous account graphs.
//!
//! The pipeline has three stages:
//!
//! 1. [`graph`]: hard links (phone, email, card, national ID, bank account)
//!    are collapsed into super-nodes with union-find, and soft links (device,
//!    cookie, IP) between super-nodes are summed into a weighted graph.
//! 2. [`embedding`]: LINE first- and second-order embeddings are trained on
//!    the super-node graph with alias-table edge sampling and negative
//!    sampling, then concatenated and normalized.
//! 3. [`clustering`]: HDBSCAN with cosine distance finds dense groups of
//!    super-nodes and labels everything else as noise.
//!
//! [`pipeline`] runs the stages end to end and ranks clusters by risk,
//! [`incremental`] keeps a live state up to date as links stream in, and
//! [`evaluation`] provides a planted-ring generator and detection metrics.

pub mod clustering;
pub mod embedding;
pub mod error;
pub mod evaluation;
pub mod graph;
pub mod incremental;
pub mod pipeline;

pub use error::{Error, Result};
