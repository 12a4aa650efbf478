use std::cell::Cell;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AliasTable, EmbeddingConfig, EmbeddingMatrix};
use crate::graph::TransformedGraph;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    /// Direct-edge proximity; vertex vectors on both sides.
    First,
    /// Shared-neighborhood proximity; vertex vectors against context vectors.
    Second,
}

impl Order {
    fn stream_salt(self) -> u64 {
        match self {
            Order::First => 0x6669_7273,
            Order::Second => 0x7365_636f,
        }
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln σ(x)` without overflow for large |x|.
pub fn log_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_rows(g: &TransformedGraph, emb: &EmbeddingMatrix) -> Result<()> {
    if emb.rows() != g.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: g.num_nodes(),
            found: emb.rows(),
        });
    }
    Ok(())
}

/// `-Σ_(i,j) w_ij · ln σ(u_i · u_j)` over the graph's edges.
pub fn first_order_loss(g: &TransformedGraph, emb: &EmbeddingMatrix) -> Result<f64> {
    check_rows(g, emb)?;
    Ok(g.edges
        .iter()
        .map(|e| -e.weight * log_sigmoid(dot(emb.vertex(e.a as usize), emb.vertex(e.b as usize))))
        .sum())
}

// First-order matrices carry no context vectors; their vertex vectors play both roles.
fn context_of(emb: &EmbeddingMatrix, i: usize) -> &[f64] {
    if emb.has_context() {
        emb.context(i)
    } else {
        emb.vertex(i)
    }
}

/// `ln σ(u'_j · u_i) + Σ_n ln σ(-u'_n · u_i)`.
pub fn second_order_negative_objective(i: usize, j: usize, negatives: &[usize], emb: &EmbeddingMatrix) -> f64 {
    let u = emb.vertex(i);
    let positive = log_sigmoid(dot(context_of(emb, j), u));
    let negative: f64 = negatives
        .iter()
        .map(|&n| log_sigmoid(-dot(context_of(emb, n), u)))
        .sum();
    positive + negative
}

/// Partial derivatives of [`second_order_negative_objective`].
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveGradient {
    /// With respect to the vertex vector `u_i`.
    pub vertex: Vec<f64>,
    /// With respect to the context vector `u'_j`.
    pub target: Vec<f64>,
    /// With respect to each negative's context vector, in input order.
    pub negatives: Vec<Vec<f64>>,
}

pub fn second_order_gradient(i: usize, j: usize, negatives: &[usize], emb: &EmbeddingMatrix) -> ObjectiveGradient {
    let u = emb.vertex(i);
    let cj = context_of(emb, j);
    let coeff_pos = 1.0 - sigmoid(dot(cj, u));
    let mut vertex: Vec<f64> = cj.iter().map(|c| coeff_pos * c).collect();
    let target = u.iter().map(|x| coeff_pos * x).collect();
    let mut neg_grads = Vec::with_capacity(negatives.len());
    for &n in negatives {
        let cn = context_of(emb, n);
        let coeff = -sigmoid(dot(cn, u));
        for (g, c) in vertex.iter_mut().zip(cn) {
            *g += coeff * c;
        }
        neg_grads.push(u.iter().map(|x| coeff * x).collect());
    }
    ObjectiveGradient {
        vertex,
        target,
        negatives: neg_grads,
    }
}

/// Noise distribution over super-nodes, proportional to weighted degree^(3/4).
#[derive(Debug, Clone)]
pub struct NegativeSampler {
    table: AliasTable,
}

impl NegativeSampler {
    pub fn from_degrees(degrees: &[f64]) -> Result<Self> {
        let weights: Vec<f64> = degrees.iter().map(|d| d.max(0.0).powf(0.75)).collect();
        Ok(NegativeSampler {
            table: AliasTable::new(&weights)?,
        })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.table.sample(rng)
    }

    pub fn probability(&self, i: usize) -> f64 {
        self.table.probability(i)
    }
}

pub fn negative_sampler(g: &TransformedGraph) -> Result<NegativeSampler> {
    NegativeSampler::from_degrees(&g.weighted_degrees())
}

/// Scalar parameter storage that can be updated through a shared reference.
pub(crate) trait ParamStore {
    fn load(&self, i: usize) -> f64;
    fn store(&self, i: usize, v: f64);
}

// Relaxed atomics give the unsynchronized "hogwild" contract without UB.
impl ParamStore for [AtomicU64] {
    fn load(&self, i: usize) -> f64 {
        f64::from_bits(self[i].load(Ordering::Relaxed))
    }

    fn store(&self, i: usize, v: f64) {
        self[i].store(v.to_bits(), Ordering::Relaxed)
    }
}

impl ParamStore for [Cell<f64>] {
    fn load(&self, i: usize) -> f64 {
        self[i].get()
    }

    fn store(&self, i: usize, v: f64) {
        self[i].set(v)
    }
}

/// One negative-sampling gradient-ascent step on the directed edge
/// `src → dst`. Pass the vertex store as `context` for first order.
/// Returns the step's loss (the negated objective).
#[allow(clippy::too_many_arguments)]
pub(crate) fn sgd_step<S, R>(
    vertex: &S,
    context: &S,
    dim: usize,
    src: usize,
    dst: usize,
    negatives: usize,
    sampler: &NegativeSampler,
    rng: &mut R,
    lr: f64,
    neu: &mut [f64],
    mut touched: Option<&mut Vec<usize>>,
) -> f64
where
    S: ParamStore + ?Sized,
    R: Rng + ?Sized,
{
    neu.iter_mut().for_each(|x| *x = 0.0);
    let vs = src * dim;
    let mut loss = 0.0;
    for t in 0..=negatives {
        let (target, label) = if t == 0 {
            (dst, 1.0)
        } else {
            let n = sampler.sample(rng);
            if n == src || n == dst {
                continue;
            }
            if let Some(t) = touched.as_deref_mut() {
                t.push(n);
            }
            (n, 0.0)
        };
        let ts = target * dim;
        let f: f64 = (0..dim).map(|d| vertex.load(vs + d) * context.load(ts + d)).sum();
        loss -= if label == 1.0 { log_sigmoid(f) } else { log_sigmoid(-f) };
        let g = (label - sigmoid(f)) * lr;
        for (d, acc) in neu.iter_mut().enumerate() {
            let c = context.load(ts + d);
            *acc += g * c;
            context.store(ts + d, c + g * vertex.load(vs + d));
        }
    }
    for (d, acc) in neu.iter().enumerate() {
        vertex.store(vs + d, vertex.load(vs + d) + acc);
    }
    loss
}

/// Mean per-sample loss of each training epoch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub total_samples: usize,
}

pub fn train_line(g: &TransformedGraph, order: Order, cfg: &EmbeddingConfig) -> Result<EmbeddingMatrix> {
    train_line_with_report(g, order, cfg).map(|(m, _)| m)
}

pub(crate) fn learning_rate(initial: f64, done: usize, total: usize) -> f64 {
    initial * (1.0 - 0.99 * (done as f64 / total.max(1) as f64).min(1.0))
}

pub(crate) fn init_vertex<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64], dim: usize) {
    let scale = 0.5 / dim as f64;
    out.iter_mut().for_each(|x| *x = rng.random_range(-scale..scale));
}

pub fn train_line_with_report(
    g: &TransformedGraph,
    order: Order,
    cfg: &EmbeddingConfig,
) -> Result<(EmbeddingMatrix, TrainReport)> {
    cfg.validate()?;
    if g.edges.is_empty() {
        return Err(Error::Edgeless);
    }
    let n = g.num_nodes();
    let dim = cfg.dim_per_order();
    let edge_table = AliasTable::new(&g.edges.iter().map(|e| e.weight).collect::<Vec<_>>())?;
    let sampler = negative_sampler(g)?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ order.stream_salt());
    let mut init = vec![0.0; n * dim];
    init_vertex(&mut init_rng, &mut init, dim);
    let vertex: Vec<AtomicU64> = init.iter().map(|x| AtomicU64::new(x.to_bits())).collect();
    let context: Vec<AtomicU64> = match order {
        Order::First => Vec::new(),
        Order::Second => (0..n * dim).map(|_| AtomicU64::new(0.0f64.to_bits())).collect(),
    };

    let per_epoch = cfg.samples_per_epoch_for(g.num_edges());
    let total = per_epoch * cfg.epochs;
    let workers = cfg.workers.min(total);

    let run_worker = |w: usize| -> Vec<(f64, usize)> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ order.stream_salt());
        rng.set_stream(w as u64 + 1);
        let share = total / workers + usize::from(w < total % workers);
        let mut neu = vec![0.0; dim];
        let mut epochs = vec![(0.0, 0usize); cfg.epochs];
        let ctx: &[AtomicU64] = match order {
            Order::First => &vertex,
            Order::Second => &context,
        };
        for s in 0..share {
            let lr = learning_rate(cfg.learning_rate, s * workers, total);
            let e = g.edges[edge_table.sample(&mut rng)];
            let (src, dst) = if rng.random::<bool>() {
                (e.a as usize, e.b as usize)
            } else {
                (e.b as usize, e.a as usize)
            };
            let loss = sgd_step(
                vertex.as_slice(),
                ctx,
                dim,
                src,
                dst,
                cfg.negative_samples,
                &sampler,
                &mut rng,
                lr,
                &mut neu,
                None,
            );
            let epoch = (s * cfg.epochs / share).min(cfg.epochs - 1);
            epochs[epoch].0 += loss;
            epochs[epoch].1 += 1;
        }
        epochs
    };

    let per_worker: Vec<Vec<(f64, usize)>> = if workers == 1 {
        vec![run_worker(0)]
    } else {
        std::thread::scope(|scope| {
            let handles: Vec<_> = (0..workers).map(|w| scope.spawn(move || run_worker(w))).collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("training worker panicked"))
                .collect()
        })
    };

    let mut sums = vec![(0.0, 0usize); cfg.epochs];
    for worker in per_worker {
        for (acc, (l, c)) in sums.iter_mut().zip(worker) {
            acc.0 += l;
            acc.1 += c;
        }
    }
    let report = TrainReport {
        epoch_losses: sums.iter().map(|(l, c)| l / (*c).max(1) as f64).collect(),
        total_samples: total,
    };
    let unwrap = |v: Vec<AtomicU64>| v.into_iter().map(|a| f64::from_bits(a.into_inner())).collect();
    let matrix = EmbeddingMatrix::from_rows(dim, unwrap(vertex), unwrap(context))?;
    Ok((matrix, report))
}
