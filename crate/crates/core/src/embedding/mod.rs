//! LINE embeddings of the super-node graph.
//!
//! First- and second-order proximities are trained separately with negative
//! sampling over alias-table edge draws, then concatenated row-wise and
//! scaled to unit length ([`combine_and_normalize`]).

mod alias;
mod io;
mod line;

use serde::Deserialize;

pub use alias::AliasTable;
pub use io::{read_embedding, write_embedding};
pub use line::{
    first_order_loss, log_sigmoid, negative_sampler, second_order_gradient, second_order_negative_objective, sigmoid,
    train_line, train_line_with_report, NegativeSampler, ObjectiveGradient, Order, TrainReport,
};

pub(crate) use line::{init_vertex, sgd_step};

use crate::graph::TransformedGraph;
use crate::{Error, Result};

/// Default edge draws per epoch, per edge of the graph. One draw per edge
/// leaves small graphs far from converged at the default learning rate.
pub const DEFAULT_SAMPLES_PER_EDGE: usize = 10;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    /// Total dimension of the combined vector; each order gets half.
    pub dim: usize,
    pub negative_samples: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Edge draws per epoch; defaults to [`DEFAULT_SAMPLES_PER_EDGE`] per edge.
    pub samples_per_epoch: Option<usize>,
    pub seed: u64,
    /// Lock-free training threads. One worker is bit-deterministic.
    pub workers: usize,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dim: 128,
            negative_samples: 5,
            epochs: 10,
            learning_rate: 0.025,
            samples_per_epoch: None,
            seed: 1,
            workers: 1,
        }
    }
}

impl EmbeddingConfig {
    pub fn dim_per_order(&self) -> usize {
        self.dim / 2
    }

    /// Edge draws per epoch on a graph with `num_edges` edges.
    pub fn samples_per_epoch_for(&self, num_edges: usize) -> usize {
        self.samples_per_epoch
            .unwrap_or(num_edges * DEFAULT_SAMPLES_PER_EDGE)
            .max(1)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Config(msg.to_owned()));
        if self.dim == 0 || !self.dim.is_multiple_of(2) {
            return bad("embedding dim must be a positive even number");
        }
        if self.negative_samples == 0 {
            return bad("negative_samples must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.workers == 0 {
            return bad("workers must be at least 1");
        }
        Ok(())
    }
}

/// Per-super-node vectors for one proximity order. `context` is empty for
/// first-order embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    vertex: Vec<f64>,
    context: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn zeros(rows: usize, dim: usize, with_context: bool) -> Self {
        EmbeddingMatrix {
            dim,
            vertex: vec![0.0; rows * dim],
            context: if with_context {
                vec![0.0; rows * dim]
            } else {
                Vec::new()
            },
        }
    }

    pub fn from_rows(dim: usize, vertex: Vec<f64>, context: Vec<f64>) -> Result<Self> {
        if dim == 0 || !vertex.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: vertex.len(),
            });
        }
        if !context.is_empty() && context.len() != vertex.len() {
            return Err(Error::DimensionMismatch {
                expected: vertex.len(),
                found: context.len(),
            });
        }
        Ok(EmbeddingMatrix { dim, vertex, context })
    }

    pub fn rows(&self) -> usize {
        self.vertex.len() / self.dim.max(1)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_context(&self) -> bool {
        !self.context.is_empty()
    }

    pub fn vertex(&self, i: usize) -> &[f64] {
        &self.vertex[i * self.dim..(i + 1) * self.dim]
    }

    pub fn context(&self, i: usize) -> &[f64] {
        &self.context[i * self.dim..(i + 1) * self.dim]
    }

    pub fn vertex_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.vertex[i * self.dim..(i + 1) * self.dim]
    }

    pub fn context_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.context[i * self.dim..(i + 1) * self.dim]
    }

    pub fn is_finite(&self) -> bool {
        self.vertex.iter().chain(&self.context).all(|x| x.is_finite())
    }
}

/// Concatenated, unit-normalized vectors used for clustering.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedEmbedding {
    dim: usize,
    vectors: Vec<f64>,
    /// Rows that were all zero and left as the zero vector.
    zero_rows: Vec<usize>,
}

impl CombinedEmbedding {
    /// Wraps already-combined rows, flagging the all-zero ones.
    pub fn from_rows(dim: usize, vectors: Vec<f64>) -> Result<Self> {
        if dim == 0 || !vectors.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: vectors.len(),
            });
        }
        let zero_rows = vectors
            .chunks(dim)
            .enumerate()
            .filter(|(_, r)| r.iter().all(|&x| x == 0.0))
            .map(|(i, _)| i)
            .collect();
        Ok(CombinedEmbedding {
            dim,
            vectors,
            zero_rows,
        })
    }

    pub fn rows(&self) -> usize {
        self.vectors.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.vectors[i * self.dim..(i + 1) * self.dim]
    }

    pub fn zero_rows(&self) -> &[usize] {
        &self.zero_rows
    }

    pub fn is_zero(&self, i: usize) -> bool {
        self.row(i).iter().all(|&x| x == 0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.vectors.chunks(self.dim)
    }
}

/// Scales `v` to unit L2 norm in place. Returns false (and leaves `v`
/// untouched) for the zero vector.
pub fn normalize(v: &mut [f64]) -> bool {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm == 0.0 || !norm.is_finite() {
        return false;
    }
    v.iter_mut().for_each(|x| *x /= norm);
    true
}

/// Row i becomes `[first_i ; second_i] / ‖[first_i ; second_i]‖`.
pub fn combine_and_normalize(first: &EmbeddingMatrix, second: &EmbeddingMatrix) -> Result<CombinedEmbedding> {
    if first.rows() != second.rows() {
        return Err(Error::DimensionMismatch {
            expected: first.rows(),
            found: second.rows(),
        });
    }
    let dim = first.dim() + second.dim();
    let mut vectors = Vec::with_capacity(first.rows() * dim);
    let mut zero_rows = Vec::new();
    for i in 0..first.rows() {
        let start = vectors.len();
        vectors.extend_from_slice(first.vertex(i));
        vectors.extend_from_slice(second.vertex(i));
        if !normalize(&mut vectors[start..]) {
            vectors[start..].iter_mut().for_each(|x| *x = 0.0);
            zero_rows.push(i);
        }
    }
    Ok(CombinedEmbedding {
        dim,
        vectors,
        zero_rows,
    })
}

/// Trains both orders and combines them. An edgeless graph yields all-zero
/// rows instead of an error.
pub fn embed(g: &TransformedGraph, cfg: &EmbeddingConfig) -> Result<CombinedEmbedding> {
    cfg.validate()?;
    if g.edges.is_empty() {
        return CombinedEmbedding::from_rows(cfg.dim, vec![0.0; g.num_nodes() * cfg.dim]);
    }
    let first = train_line(g, Order::First, cfg)?;
    let second = train_line(g, Order::Second, cfg)?;
    combine_and_normalize(&first, &second)
}
