//! Streaming maintenance of the super-node graph between full refreshes.
//!
//! Hard links merge super-nodes online through a growable union-find; soft
//! links increment edge weights. Weights decay exponentially with the time
//! since an edge was last observed, computed lazily from the stored base
//! weight. Embeddings are nudged with a few SGD samples per modified edge,
//! merged super-nodes get the size-weighted average of their parts, and new
//! super-nodes join the cluster of their nearest clustered neighbor. A full
//! refresh retrains and reclusters from scratch.

mod events;

use std::cell::Cell;
use std::collections::BTreeMap;
use std::sync::{Arc, RwLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

pub use events::{read_events, write_events, EventKind, UpdateEvent};

use crate::clustering::{cluster, cosine_distance, ClusterParams, NOISE};
use crate::embedding::{
    combine_and_normalize, init_vertex, normalize, sgd_step, train_line, CombinedEmbedding, EmbeddingConfig,
    NegativeSampler, Order,
};
use crate::graph::{AccountId, HeterogeneousGraph, SuperEdge, SuperNode, TokenMap, TransformedGraph, UnionFind};
use crate::{Error, Result};

/// Edges whose effective weight falls below this are dropped by [`PipelineState::apply_decay`].
pub const PRUNE_BELOW: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncrementalConfig {
    /// Per-day exponential decay rate.
    pub decay_lambda: f64,
    /// Maximum cosine distance for joining an existing cluster.
    pub nn_threshold: f64,
    /// Extra SGD samples per modified edge.
    pub online_samples: usize,
}

impl Default for IncrementalConfig {
    fn default() -> Self {
        IncrementalConfig {
            decay_lambda: 0.01,
            nn_threshold: 0.3,
            online_samples: 100,
        }
    }
}

impl IncrementalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.decay_lambda >= 0.0 && self.decay_lambda.is_finite()) {
            return Err(Error::Config("decay_lambda must be non-negative".into()));
        }
        if !(0.0..=2.0).contains(&self.nn_threshold) {
            return Err(Error::Config("nn_threshold must lie in [0, 2]".into()));
        }
        Ok(())
    }
}

/// `e^(-λ·Δt)`.
pub fn decay_factor(lambda: f64, dt: f64) -> f64 {
    (-lambda * dt).exp()
}

/// `(|S_i|·u_i + |S_j|·u_j) / (|S_i| + |S_j|)`, before normalization.
pub fn size_weighted_merge(u_i: &[f64], size_i: usize, u_j: &[f64], size_j: usize) -> Vec<f64> {
    let (a, b) = (size_i as f64, size_j as f64);
    let total = a + b;
    u_i.iter().zip(u_j).map(|(x, y)| (a * x + b * y) / total).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    /// New or merged since the last refresh; resolved by
    /// [`PipelineState::assign_new_to_clusters`].
    Unassigned,
    Noise,
    Cluster(u32),
}

impl Label {
    pub fn as_i32(self) -> i32 {
        match self {
            Label::Cluster(c) => c as i32,
            _ => NOISE,
        }
    }
}

/// Which weight to report for an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightView {
    /// Sum of all observed soft-link weights.
    Undecayed,
    /// Undecayed weight times `e^(-λ·(now - last observation))`.
    Effective,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeWeight {
    pub base: f64,
    pub effective: f64,
    pub last_day: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct EdgeState {
    base: f64,
    last_day: f64,
}

impl EdgeState {
    fn effective(&self, lambda: f64, now: f64) -> f64 {
        self.base * decay_factor(lambda, now - self.last_day)
    }

    fn absorb(&mut self, other: EdgeState) {
        self.base += other.base;
        self.last_day = self.last_day.max(other.last_day);
    }
}

#[derive(Debug, Clone)]
struct Slot {
    members: Vec<AccountId>,
    risk: f64,
    adj: BTreeMap<usize, EdgeState>,
    label: Label,
}

/// The assignment readers see; replaced wholesale on publish.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PublishedAssignment {
    pub refresh: u64,
    pub day: f64,
    /// Super-node member sets in canonical order.
    pub partition: Vec<Vec<AccountId>>,
    /// Label per super-node, [`NOISE`] for noise and unassigned.
    pub labels: Vec<i32>,
}

/// Cheap handle for reading the last published assignment from other threads.
#[derive(Debug, Clone)]
pub struct SnapshotReader(Arc<RwLock<Arc<PublishedAssignment>>>);

impl SnapshotReader {
    pub fn latest(&self) -> Arc<PublishedAssignment> {
        self.0.read().unwrap_or_else(|e| e.into_inner()).clone()
    }
}

/// Live super-node graph, embeddings and labels. Single writer.
///
/// Super-nodes live in slots that keep their index across merges; every
/// exported view is re-indexed canonically by smallest member, matching
/// [`crate::graph::transform`].
#[derive(Debug)]
pub struct PipelineState {
    tokens: TokenMap,
    uf: UnionFind,
    slot_of_root: Vec<usize>,
    slots: Vec<Option<Slot>>,
    half: usize,
    first: Vec<f64>,
    second: Vec<f64>,
    context: Vec<f64>,
    combined: Vec<f64>,
    now: f64,
    refreshes: u64,
    trained: bool,
    sampler: Option<NegativeSampler>,
    rng: ChaCha8Rng,
    incremental: IncrementalConfig,
    embedding: EmbeddingConfig,
    clustering: ClusterParams,
    published: Arc<RwLock<Arc<PublishedAssignment>>>,
}

impl Clone for PipelineState {
    /// The clone gets its own publication channel.
    fn clone(&self) -> Self {
        PipelineState {
            tokens: self.tokens.clone(),
            uf: self.uf.clone(),
            slot_of_root: self.slot_of_root.clone(),
            slots: self.slots.clone(),
            half: self.half,
            first: self.first.clone(),
            second: self.second.clone(),
            context: self.context.clone(),
            combined: self.combined.clone(),
            now: self.now,
            refreshes: self.refreshes,
            trained: self.trained,
            sampler: self.sampler.clone(),
            rng: self.rng.clone(),
            incremental: self.incremental.clone(),
            embedding: self.embedding.clone(),
            clustering: self.clustering,
            published: Arc::new(RwLock::new(SnapshotReader(self.published.clone()).latest())),
        }
    }
}

impl PipelineState {
    /// Empty state at day 0.
    pub fn new(incremental: IncrementalConfig, embedding: EmbeddingConfig, clustering: ClusterParams) -> Result<Self> {
        incremental.validate()?;
        embedding.validate()?;
        clustering.validate()?;
        Ok(PipelineState {
            tokens: TokenMap::new(),
            uf: UnionFind::new(0),
            slot_of_root: Vec::new(),
            slots: Vec::new(),
            half: embedding.dim_per_order(),
            first: Vec::new(),
            second: Vec::new(),
            context: Vec::new(),
            combined: Vec::new(),
            now: 0.0,
            refreshes: 0,
            trained: false,
            sampler: None,
            rng: ChaCha8Rng::seed_from_u64(embedding.seed ^ 0x6f6e_6c69_6e65),
            incremental,
            embedding,
            clustering,
            published: Arc::default(),
        })
    }

    /// State holding a batch graph. Soft links without a timestamp count as
    /// observed on the start day, which is the latest timestamp seen (or 0).
    pub fn from_graph(
        g: &HeterogeneousGraph,
        incremental: IncrementalConfig,
        embedding: EmbeddingConfig,
        clustering: ClusterParams,
    ) -> Result<Self> {
        let mut s = Self::new(incremental, embedding, clustering)?;
        s.now = g.soft_links.iter().filter_map(|l| l.timestamp).fold(0.0, f64::max);
        for (i, token) in g.tokens.tokens().iter().enumerate() {
            s.apply_new_account(token, s.now)?;
            let risk = g.risk.get(i).copied().unwrap_or(0.0);
            s.slot_mut(i).risk = risk;
        }
        for link in &g.hard_links {
            s.merge_accounts(link.u.index(), link.v.index());
        }
        for link in &g.soft_links {
            let (a, b) = (s.slot_of(link.u.index()), s.slot_of(link.v.index()));
            if a != b {
                s.increment(a, b, link.weight, link.timestamp.unwrap_or(s.now));
            }
        }
        Ok(s)
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn tokens(&self) -> &TokenMap {
        &self.tokens
    }

    pub fn num_accounts(&self) -> usize {
        self.tokens.len()
    }

    pub fn num_super_nodes(&self) -> usize {
        self.uf.component_count()
    }

    pub fn refresh_count(&self) -> u64 {
        self.refreshes
    }

    pub fn config(&self) -> &IncrementalConfig {
        &self.incremental
    }

    pub fn account(&self, token: &str) -> Option<AccountId> {
        self.tokens.get(token)
    }

    pub fn reader(&self) -> SnapshotReader {
        SnapshotReader(self.published.clone())
    }

    fn slot_of(&self, account: usize) -> usize {
        self.slot_of_root[self.uf.root(account)]
    }

    fn slot(&self, s: usize) -> &Slot {
        self.slots[s].as_ref().expect("live slot")
    }

    fn slot_mut(&mut self, s: usize) -> &mut Slot {
        self.slots[s].as_mut().expect("live slot")
    }

    fn lookup(&self, token: &str) -> Result<usize> {
        self.tokens
            .get(token)
            .map(AccountId::index)
            .ok_or_else(|| Error::UnknownAccount(token.to_owned()))
    }

    fn advance(&mut self, day: f64) -> Result<()> {
        if !day.is_finite() || day < self.now {
            return Err(Error::TimeReversal { day, now: self.now });
        }
        self.now = day;
        Ok(())
    }

    fn check_day(&self, day: f64) -> Result<()> {
        if day >= self.now && day.is_finite() {
            Ok(())
        } else {
            Err(Error::TimeReversal { day, now: self.now })
        }
    }

    /// Registers a singleton super-node with a zero embedding.
    pub fn apply_new_account(&mut self, token: &str, day: f64) -> Result<AccountId> {
        if self.tokens.get(token).is_some() {
            return Err(Error::DuplicateAccount(token.to_owned()));
        }
        self.advance(day)?;
        let id = self.tokens.intern(token);
        self.uf.push();
        self.slot_of_root.push(self.slots.len());
        self.slots.push(Some(Slot {
            members: vec![id],
            risk: 0.0,
            adj: BTreeMap::new(),
            label: Label::Unassigned,
        }));
        let half = self.half;
        self.first.resize(self.first.len() + half, 0.0);
        self.second.resize(self.second.len() + half, 0.0);
        self.context.resize(self.context.len() + half, 0.0);
        self.combined.resize(self.combined.len() + 2 * half, 0.0);
        self.sampler = None;
        Ok(id)
    }

    /// Merges the endpoints' super-nodes. Returns false when they already coincide.
    pub fn apply_hard_link(&mut self, u: &str, v: &str, day: f64) -> Result<bool> {
        let (a, b) = (self.lookup(u)?, self.lookup(v)?);
        self.advance(day)?;
        Ok(self.merge_accounts(a, b))
    }

    /// Adds `weight` to the edge between the endpoints' super-nodes. Returns
    /// false for links inside one super-node, which are discarded.
    pub fn apply_soft_link(&mut self, u: &str, v: &str, weight: f64, day: f64) -> Result<bool> {
        if !(weight > 0.0 && weight.is_finite()) {
            return Err(Error::InvalidWeights);
        }
        let (a, b) = (self.lookup(u)?, self.lookup(v)?);
        self.advance(day)?;
        let (sa, sb) = (self.slot_of(a), self.slot_of(b));
        if sa == sb {
            return Ok(false);
        }
        self.increment(sa, sb, weight, day);
        if self.trained && self.incremental.online_samples > 0 {
            self.online_update(sa, sb);
        }
        Ok(true)
    }

    pub fn apply_event(&mut self, event: &UpdateEvent) -> Result<()> {
        self.check_day(event.day)?;
        match &event.kind {
            EventKind::NewAccount { token } => self.apply_new_account(token, event.day).map(drop),
            EventKind::Hard { u, v, .. } => self.apply_hard_link(u, v, event.day).map(drop),
            EventKind::Soft { u, v, weight, .. } => self.apply_soft_link(u, v, *weight, event.day).map(drop),
        }
    }

    /// Moves the clock to `now` and prunes edges whose effective weight fell
    /// below [`PRUNE_BELOW`]. Returns the number of pruned edges.
    pub fn apply_decay(&mut self, now: f64) -> Result<usize> {
        self.advance(now)?;
        let lambda = self.incremental.decay_lambda;
        if lambda == 0.0 {
            return Ok(0);
        }
        let mut doomed = Vec::new();
        for (s, slot) in self.slots.iter().enumerate() {
            let Some(slot) = slot else { continue };
            for (&k, e) in slot.adj.range(s + 1..) {
                if e.effective(lambda, now) < PRUNE_BELOW {
                    doomed.push((s, k));
                }
            }
        }
        for &(a, b) in &doomed {
            self.slot_mut(a).adj.remove(&b);
            self.slot_mut(b).adj.remove(&a);
        }
        if !doomed.is_empty() {
            self.sampler = None;
        }
        Ok(doomed.len())
    }

    /// Current weights of the edge between two accounts' super-nodes.
    pub fn edge_weight(&self, u: AccountId, v: AccountId) -> Option<EdgeWeight> {
        let (a, b) = (self.slot_of(u.index()), self.slot_of(v.index()));
        self.slot(a).adj.get(&b).map(|e| EdgeWeight {
            base: e.base,
            effective: e.effective(self.incremental.decay_lambda, self.now),
            last_day: e.last_day,
        })
    }

    pub fn label_of(&self, account: AccountId) -> Label {
        self.slot(self.slot_of(account.index())).label
    }

    /// Combined (unit or zero) vector of the account's super-node.
    pub fn combined_of(&self, account: AccountId) -> &[f64] {
        self.row(&self.combined, 2 * self.half, self.slot_of(account.index()))
    }

    fn row<'a>(&self, data: &'a [f64], dim: usize, s: usize) -> &'a [f64] {
        &data[s * dim..(s + 1) * dim]
    }

    fn merge_accounts(&mut self, a: usize, b: usize) -> bool {
        let (sa, sb) = (self.slot_of(a), self.slot_of(b));
        if sa == sb {
            return false;
        }
        let root = self.uf.union(a, b).expect("distinct components");
        let (keep, gone) = (sa.min(sb), sa.max(sb));
        self.slot_of_root[root] = keep;
        self.merge_slots(keep, gone);
        true
    }

    fn merge_slots(&mut self, keep: usize, gone: usize) {
        let g = self.slots[gone].take().expect("live slot");
        let (nk, ng) = (self.slot(keep).members.len(), g.members.len());
        let half = self.half;
        for (data, dim) in [
            (&mut self.first, half),
            (&mut self.second, half),
            (&mut self.context, half),
            (&mut self.combined, 2 * half),
        ] {
            let merged = size_weighted_merge(
                &data[keep * dim..(keep + 1) * dim],
                nk,
                &data[gone * dim..(gone + 1) * dim],
                ng,
            );
            data[keep * dim..(keep + 1) * dim].copy_from_slice(&merged);
            data[gone * dim..(gone + 1) * dim].iter_mut().for_each(|x| *x = 0.0);
        }
        let row = &mut self.combined[keep * 2 * half..(keep + 1) * 2 * half];
        if !normalize(row) {
            row.iter_mut().for_each(|x| *x = 0.0);
        }

        for (k, e) in g.adj {
            self.slot_mut(k).adj.remove(&gone);
            if k == keep {
                continue;
            }
            self.slot_mut(keep)
                .adj
                .entry(k)
                .or_insert(EdgeState {
                    base: 0.0,
                    last_day: e.last_day,
                })
                .absorb(e);
            let merged = self.slot(keep).adj[&k];
            self.slot_mut(k).adj.insert(keep, merged);
        }
        let kept = self.slot_mut(keep);
        let mut members = std::mem::take(&mut kept.members);
        members.extend(g.members);
        members.sort_unstable();
        kept.members = members;
        kept.risk += g.risk;
        kept.label = Label::Unassigned;
        self.sampler = None;
    }

    fn increment(&mut self, a: usize, b: usize, weight: f64, day: f64) {
        let add = EdgeState {
            base: weight,
            last_day: day,
        };
        self.slot_mut(a)
            .adj
            .entry(b)
            .or_insert(EdgeState {
                base: 0.0,
                last_day: day,
            })
            .absorb(add);
        let e = self.slot(a).adj[&b];
        self.slot_mut(b).adj.insert(a, e);
        self.sampler = None;
    }

    fn effective_degrees(&self) -> Vec<f64> {
        let (lambda, now) = (self.incremental.decay_lambda, self.now);
        self.slots
            .iter()
            .map(|s| {
                s.as_ref()
                    .map_or(0.0, |s| s.adj.values().map(|e| e.effective(lambda, now)).sum())
            })
            .collect()
    }

    fn online_update(&mut self, sa: usize, sb: usize) {
        if self.sampler.is_none() {
            match NegativeSampler::from_degrees(&self.effective_degrees()) {
                Ok(s) => self.sampler = Some(s),
                Err(_) => return,
            }
        }
        let half = self.half;
        let lr = self.embedding.learning_rate / 100.0;
        let negatives = self.embedding.negative_samples;
        for s in [sa, sb] {
            for data in [&mut self.first, &mut self.second] {
                let row = &mut data[s * half..(s + 1) * half];
                if row.iter().all(|&x| x == 0.0) {
                    init_vertex(&mut self.rng, row, half);
                }
            }
        }
        let sampler = self.sampler.as_ref().expect("sampler built above");
        let first = Cell::from_mut(self.first.as_mut_slice()).as_slice_of_cells();
        let second = Cell::from_mut(self.second.as_mut_slice()).as_slice_of_cells();
        let context = Cell::from_mut(self.context.as_mut_slice()).as_slice_of_cells();
        let mut neu = vec![0.0; half];
        // First-order negatives move their vertex vectors too.
        let mut touched = vec![sa, sb];
        for _ in 0..self.incremental.online_samples {
            let (src, dst) = if self.rng.random::<bool>() { (sa, sb) } else { (sb, sa) };
            let rng = &mut self.rng;
            sgd_step(
                first,
                first,
                half,
                src,
                dst,
                negatives,
                sampler,
                rng,
                lr,
                &mut neu,
                Some(&mut touched),
            );
            sgd_step(
                second, context, half, src, dst, negatives, sampler, rng, lr, &mut neu, None,
            );
        }
        touched.sort_unstable();
        touched.dedup();
        for s in touched {
            self.refresh_combined(s);
        }
    }

    fn refresh_combined(&mut self, s: usize) {
        let half = self.half;
        let row = &mut self.combined[s * 2 * half..(s + 1) * 2 * half];
        row[..half].copy_from_slice(&self.first[s * half..(s + 1) * half]);
        row[half..].copy_from_slice(&self.second[s * half..(s + 1) * half]);
        if !normalize(row) {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    /// Live slots ordered by smallest member.
    fn canonical_slots(&self) -> Vec<usize> {
        let mut live: Vec<usize> = (0..self.slots.len()).filter(|&s| self.slots[s].is_some()).collect();
        live.sort_by_key(|&s| self.slot(s).members[0]);
        live
    }

    /// The live graph with canonical super-node indices.
    pub fn transformed(&self, view: WeightView) -> TransformedGraph {
        let order = self.canonical_slots();
        let mut canon = vec![u32::MAX; self.slots.len()];
        for (i, &s) in order.iter().enumerate() {
            canon[s] = i as u32;
        }
        let (lambda, now) = (self.incremental.decay_lambda, self.now);
        let mut edges = Vec::new();
        for &s in &order {
            for (&k, e) in &self.slot(s).adj {
                let (a, b) = (canon[s], canon[k]);
                if a < b {
                    let weight = match view {
                        WeightView::Undecayed => e.base,
                        WeightView::Effective => e.effective(lambda, now),
                    };
                    if weight > 0.0 {
                        edges.push(SuperEdge { a, b, weight });
                    }
                }
            }
        }
        edges.sort_unstable_by_key(|e| (e.a, e.b));
        TransformedGraph {
            super_nodes: order
                .iter()
                .map(|&s| SuperNode {
                    members: self.slot(s).members.clone(),
                    risk: self.slot(s).risk,
                })
                .collect(),
            edges,
            membership: (0..self.num_accounts()).map(|a| canon[self.slot_of(a)]).collect(),
        }
    }

    /// Labels in canonical super-node order; unassigned counts as noise.
    pub fn labels(&self) -> Vec<i32> {
        self.canonical_slots()
            .iter()
            .map(|&s| self.slot(s).label.as_i32())
            .collect()
    }

    /// Combined vectors in canonical super-node order.
    pub fn embedding(&self) -> CombinedEmbedding {
        let dim = 2 * self.half;
        let rows: Vec<f64> = self
            .canonical_slots()
            .iter()
            .flat_map(|&s| self.row(&self.combined, dim, s).iter().copied())
            .collect();
        CombinedEmbedding::from_rows(dim, rows).expect("rows match dim")
    }

    /// Gives every unassigned super-node the label of its cosine-nearest
    /// clustered super-node when that distance is at most the threshold, and
    /// noise otherwise. Returns how many joined a cluster.
    pub fn assign_new_to_clusters(&mut self) -> usize {
        let dim = 2 * self.half;
        let order = self.canonical_slots();
        let clustered: Vec<(usize, u32)> = order
            .iter()
            .filter_map(|&s| match self.slot(s).label {
                Label::Cluster(c) if self.row(&self.combined, dim, s).iter().any(|&x| x != 0.0) => Some((s, c)),
                _ => None,
            })
            .collect();
        let mut joined = 0;
        for &s in &order {
            if self.slot(s).label != Label::Unassigned {
                continue;
            }
            let v = self.row(&self.combined, dim, s);
            let mut label = Label::Noise;
            if v.iter().any(|&x| x != 0.0) {
                let mut best: Option<(f64, u32)> = None;
                for &(t, c) in &clustered {
                    let d = cosine_distance(v, self.row(&self.combined, dim, t));
                    if best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, c));
                    }
                }
                if let Some((d, c)) = best {
                    if d <= self.incremental.nn_threshold {
                        label = Label::Cluster(c);
                        joined += 1;
                    }
                }
            }
            self.slot_mut(s).label = label;
        }
        self.publish();
        joined
    }

    /// Retrains both embedding orders on the current effective weights with
    /// a seed derived from the base seed and the refresh counter, reclusters,
    /// and publishes the new assignment.
    pub fn full_refresh(&mut self) -> Result<()> {
        let refresh = self.refreshes + 1;
        let g = self.transformed(WeightView::Effective);
        let order = self.canonical_slots();
        let half = self.half;
        for data in [&mut self.first, &mut self.second, &mut self.context, &mut self.combined] {
            data.iter_mut().for_each(|x| *x = 0.0);
        }
        let mut labels = vec![NOISE; order.len()];
        if !g.edges.is_empty() {
            let cfg = EmbeddingConfig {
                seed: self.embedding.seed ^ refresh.wrapping_mul(0x9e37_79b9_7f4a_7c15),
                ..self.embedding.clone()
            };
            let first = train_line(&g, Order::First, &cfg)?;
            let second = train_line(&g, Order::Second, &cfg)?;
            let combined = combine_and_normalize(&first, &second)?;
            labels = cluster(&combined, &self.clustering)?.labels;
            for (i, &s) in order.iter().enumerate() {
                self.first[s * half..(s + 1) * half].copy_from_slice(first.vertex(i));
                self.second[s * half..(s + 1) * half].copy_from_slice(second.vertex(i));
                self.context[s * half..(s + 1) * half].copy_from_slice(second.context(i));
                self.combined[s * 2 * half..(s + 1) * 2 * half].copy_from_slice(combined.row(i));
            }
        }
        for (&s, &l) in order.iter().zip(&labels) {
            self.slot_mut(s).label = if l >= 0 { Label::Cluster(l as u32) } else { Label::Noise };
        }
        self.refreshes = refresh;
        self.trained = true;
        self.sampler = None;
        self.publish();
        Ok(())
    }

    /// Swaps the current partition and labels into the shared snapshot.
    pub fn publish(&self) {
        let order = self.canonical_slots();
        let snapshot = PublishedAssignment {
            refresh: self.refreshes,
            day: self.now,
            partition: order.iter().map(|&s| self.slot(s).members.clone()).collect(),
            labels: order.iter().map(|&s| self.slot(s).label.as_i32()).collect(),
        };
        *self.published.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(snapshot);
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::graph::{transform, GraphBuilder, HardKind, SoftKind};

    fn state() -> PipelineState {
        let emb = EmbeddingConfig {
            dim: 8,
            samples_per_epoch: Some(500),
            ..Default::default()
        };
        PipelineState::new(IncrementalConfig::default(), emb, ClusterParams::new(2)).unwrap()
    }

    fn with_accounts(n: usize) -> PipelineState {
        let mut s = state();
        for i in 0..n {
            s.apply_new_account(&format!("a{i}"), 0.0).unwrap();
        }
        s
    }

    fn id(s: &PipelineState, t: &str) -> AccountId {
        s.account(t).unwrap()
    }

    #[test]
    fn new_accounts_are_singletons() {
        let mut s = state();
        s.apply_new_account("x", 0.0).unwrap();
        assert_eq!(
            (s.num_super_nodes(), s.transformed(WeightView::Undecayed).num_edges()),
            (1, 0)
        );
        for i in 0..7 {
            s.apply_new_account(&format!("n{i}"), 1.0).unwrap();
        }
        assert_eq!(s.num_super_nodes(), 8);
        assert!(matches!(s.apply_new_account("x", 1.0), Err(Error::DuplicateAccount(_))));
        assert_eq!(s.labels(), vec![NOISE; 8]);
        assert!(s.combined_of(id(&s, "x")).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unknown_endpoints_and_time_reversal_are_rejected() {
        let mut s = with_accounts(2);
        assert!(matches!(
            s.apply_hard_link("a0", "zz", 0.0),
            Err(Error::UnknownAccount(_))
        ));
        assert!(matches!(
            s.apply_soft_link("zz", "a1", 1.0, 0.0),
            Err(Error::UnknownAccount(_))
        ));
        s.apply_soft_link("a0", "a1", 1.0, 5.0).unwrap();
        assert!(matches!(
            s.apply_soft_link("a0", "a1", 1.0, 4.0),
            Err(Error::TimeReversal { .. })
        ));
        assert!(matches!(s.apply_decay(1.0), Err(Error::TimeReversal { .. })));
        assert!(s.apply_soft_link("a0", "a1", 0.0, 6.0).is_err());
    }

    #[test]
    fn soft_links_accumulate() {
        let mut s = with_accounts(3);
        assert!(s.apply_soft_link("a0", "a1", 0.5, 0.0).unwrap());
        assert_eq!(s.edge_weight(id(&s, "a0"), id(&s, "a1")).unwrap().base, 0.5);
        let mut t = with_accounts(2);
        for _ in 0..3 {
            t.apply_soft_link("a0", "a1", 1.0, 0.0).unwrap();
        }
        assert_eq!(t.edge_weight(id(&t, "a1"), id(&t, "a0")).unwrap().base, 3.0);
    }

    #[test]
    fn intra_soft_link_is_discarded() {
        let mut s = with_accounts(3);
        s.apply_hard_link("a0", "a1", 0.0).unwrap();
        s.apply_soft_link("a0", "a2", 1.0, 0.0).unwrap();
        let before = s.transformed(WeightView::Undecayed);
        assert!(!s.apply_soft_link("a1", "a0", 2.0, 0.0).unwrap());
        assert_eq!(s.transformed(WeightView::Undecayed), before);
    }

    #[test]
    fn repeated_hard_link_is_a_no_op() {
        let mut s = with_accounts(3);
        assert!(s.apply_hard_link("a0", "a1", 0.0).unwrap());
        s.apply_soft_link("a1", "a2", 1.0, 0.0).unwrap();
        let before = s.transformed(WeightView::Undecayed);
        assert!(!s.apply_hard_link("a1", "a0", 0.0).unwrap());
        assert_eq!(s.transformed(WeightView::Undecayed), before);
    }

    #[test]
    fn size_weighted_merge_of_unit_axes() {
        let m = size_weighted_merge(&[1.0, 0.0], 3, &[0.0, 1.0], 1);
        assert!((m[0] - 0.75).abs() < 1e-12 && (m[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn merge_averages_and_renormalizes_embeddings() {
        let mut s = with_accounts(5);
        s.apply_hard_link("a0", "a1", 0.0).unwrap();
        s.apply_hard_link("a0", "a2", 0.0).unwrap();
        let big = s.slot_of(0);
        let small = s.slot_of(3);
        let dim = 2 * s.half;
        let mut u = vec![0.0; dim];
        u[0] = 1.0;
        let mut v = vec![0.0; dim];
        v[1] = 1.0;
        s.combined[big * dim..(big + 1) * dim].copy_from_slice(&u);
        s.combined[small * dim..(small + 1) * dim].copy_from_slice(&v);
        s.slot_mut(big).label = Label::Cluster(0);
        s.apply_hard_link("a3", "a2", 1.0).unwrap();
        let merged = s.combined_of(id(&s, "a3"));
        let norm = (0.75f64 * 0.75 + 0.25 * 0.25).sqrt();
        assert!((merged[0] - 0.75 / norm).abs() < 1e-12);
        assert!((merged[1] - 0.25 / norm).abs() < 1e-12);
        assert_eq!(s.label_of(id(&s, "a0")), Label::Unassigned);
        assert_eq!(s.num_super_nodes(), 2);
    }

    #[test]
    fn merged_edges_sum_neighbor_weights() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let n = 12;
            let mut s = with_accounts(n);
            for _ in 0..25 {
                let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
                let w = rng.random_range(1..8) as f64 * 0.25;
                s.apply_soft_link(&format!("a{u}"), &format!("a{v}"), w, 0.0).unwrap();
                if rng.random_bool(0.2) {
                    let (x, y) = (rng.random_range(0..n), rng.random_range(0..n));
                    s.apply_hard_link(&format!("a{x}"), &format!("a{y}"), 0.0).unwrap();
                }
            }
            let (i, j) = (rng.random_range(0..n), rng.random_range(0..n));
            let (ai, aj) = (AccountId(i as u32), AccountId(j as u32));
            if s.slot_of(i) == s.slot_of(j) {
                continue;
            }
            let before: Vec<(usize, f64, f64)> = (0..n)
                .filter(|&k| s.slot_of(k) != s.slot_of(i) && s.slot_of(k) != s.slot_of(j))
                .map(|k| {
                    let ak = AccountId(k as u32);
                    let w = |x| s.edge_weight(x, ak).map_or(0.0, |e| e.base);
                    (k, w(ai), w(aj))
                })
                .collect();
            s.apply_hard_link(&format!("a{i}"), &format!("a{j}"), 0.0).unwrap();
            assert!(s.edge_weight(ai, aj).is_none());
            for (k, wi, wj) in before {
                let after = s.edge_weight(ai, AccountId(k as u32)).map_or(0.0, |e| e.base);
                assert_eq!(after, wi + wj);
            }
        }
    }

    #[test]
    fn decay_matches_closed_form() {
        let mut s = with_accounts(2);
        s.apply_soft_link("a0", "a1", 1.0, 0.0).unwrap();
        let (a, b) = (id(&s, "a0"), id(&s, "a1"));
        assert_eq!(s.edge_weight(a, b).unwrap().effective, 1.0);
        s.apply_decay(100.0).unwrap();
        assert!((s.edge_weight(a, b).unwrap().effective - 0.367879).abs() < 1e-6);
        assert_eq!(s.edge_weight(a, b).unwrap().base, 1.0);
    }

    #[test]
    fn decay_composes_and_never_grows() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..100 {
            let (t1, t2) = (rng.random_range(0.0..500.0), rng.random_range(0.0..500.0));
            let w = rng.random_range(0.1..10.0);
            let mut s = with_accounts(2);
            s.apply_soft_link("a0", "a1", w, 0.0).unwrap();
            let (a, b) = (id(&s, "a0"), id(&s, "a1"));
            s.apply_decay(t1).unwrap();
            let mid = s.edge_weight(a, b).unwrap().effective;
            assert!(mid <= w);
            s.apply_decay(t1 + t2).unwrap();
            let Some(end) = s.edge_weight(a, b) else { continue };
            assert!(end.effective <= mid);
            let expected = w * decay_factor(0.01, t1) * decay_factor(0.01, t2);
            assert!((end.effective - expected).abs() <= 1e-12 * w);
        }
    }

    #[test]
    fn zero_rate_decay_is_identity_and_old_edges_are_pruned() {
        let mut s = with_accounts(3);
        s.incremental.decay_lambda = 0.0;
        s.apply_soft_link("a0", "a1", 1e-10, 0.0).unwrap();
        let before = s.transformed(WeightView::Effective);
        assert_eq!(s.apply_decay(1e6).unwrap(), 0);
        assert_eq!(s.transformed(WeightView::Effective), before);

        let mut t = with_accounts(3);
        t.apply_soft_link("a0", "a1", 1.0, 0.0).unwrap();
        t.apply_soft_link("a1", "a2", 1.0, 2000.0).unwrap();
        assert_eq!(t.apply_decay(2100.0).unwrap(), 1);
        let g = t.transformed(WeightView::Effective);
        assert_eq!(g.num_edges(), 1);
        assert_eq!((g.edges[0].a, g.edges[0].b), (1, 2));
    }

    #[test]
    fn increment_resets_observation_day() {
        let mut s = with_accounts(2);
        s.apply_soft_link("a0", "a1", 1.0, 0.0).unwrap();
        s.apply_soft_link("a0", "a1", 1.0, 100.0).unwrap();
        let e = s.edge_weight(id(&s, "a0"), id(&s, "a1")).unwrap();
        assert_eq!((e.base, e.effective, e.last_day), (2.0, 2.0, 100.0));
    }

    fn set_vector(s: &mut PipelineState, token: &str, v: &[f64], label: Label) {
        let slot = s.slot_of(id(s, token).index());
        let dim = 2 * s.half;
        let mut row = v.to_vec();
        if !normalize(&mut row) {
            row.iter_mut().for_each(|x| *x = 0.0);
        }
        s.combined[slot * dim..(slot + 1) * dim].copy_from_slice(&row);
        s.slot_mut(slot).label = label;
    }

    fn axis(dim: usize, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[k] = 1.0;
        v
    }

    #[test]
    fn nearest_neighbor_assignment_cases() {
        let mut s = with_accounts(5);
        set_vector(&mut s, "a0", &axis(8, 0), Label::Cluster(0));
        set_vector(&mut s, "a1", &axis(8, 1), Label::Cluster(1));
        set_vector(&mut s, "a2", &axis(8, 1), Label::Unassigned);
        set_vector(&mut s, "a3", &axis(8, 5), Label::Unassigned);
        assert_eq!(s.assign_new_to_clusters(), 1);
        assert_eq!(s.label_of(id(&s, "a2")), Label::Cluster(1));
        assert_eq!(s.label_of(id(&s, "a3")), Label::Noise);
        assert_eq!(s.label_of(id(&s, "a4")), Label::Noise);
        assert_eq!(s.reader().latest().labels, vec![0, 1, 1, NOISE, NOISE]);
    }

    #[test]
    fn no_clusters_leaves_everything_noise() {
        let mut s = with_accounts(3);
        set_vector(&mut s, "a0", &axis(8, 0), Label::Unassigned);
        assert_eq!(s.assign_new_to_clusters(), 0);
        assert_eq!(s.labels(), vec![NOISE; 3]);
    }

    #[test]
    fn assignment_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for round in 0..10 {
            let n = 50 + round * 45;
            let mut s = with_accounts(n);
            let mut vectors = Vec::new();
            let mut labels = Vec::new();
            for i in 0..n {
                let v: Vec<f64> = (0..8).map(|_| rng.random_range(-1.0..1.0)).collect();
                let label = if rng.random_bool(0.4) {
                    Label::Cluster(rng.random_range(0..4))
                } else {
                    Label::Unassigned
                };
                set_vector(&mut s, &format!("a{i}"), &v, label);
                vectors.push(v);
                labels.push(label);
            }
            let mut expected = labels.clone();
            for i in 0..n {
                if labels[i] != Label::Unassigned {
                    continue;
                }
                let mut best = (f64::INFINITY, Label::Noise);
                for j in 0..n {
                    if let Label::Cluster(_) = labels[j] {
                        let d = cosine_distance(&vectors[i], &vectors[j]);
                        if d < best.0 {
                            best = (d, labels[j]);
                        }
                    }
                }
                expected[i] = if best.0 <= 0.3 { best.1 } else { Label::Noise };
            }
            s.assign_new_to_clusters();
            let got: Vec<Label> = (0..n).map(|i| s.label_of(AccountId(i as u32))).collect();
            assert_eq!(got, expected);
        }
    }

    fn two_cliques() -> PipelineState {
        let mut s = with_accounts(12);
        for block in [0, 6] {
            for i in 0..6 {
                for j in (i + 1)..6 {
                    s.apply_soft_link(&format!("a{}", block + i), &format!("a{}", block + j), 1.0, 0.0)
                        .unwrap();
                }
            }
        }
        s.apply_soft_link("a0", "a6", 0.1, 0.0).unwrap();
        s
    }

    #[test]
    fn refresh_is_deterministic_and_publishes() {
        let mut s = two_cliques();
        let mut t = s.clone();
        s.full_refresh().unwrap();
        t.full_refresh().unwrap();
        assert_eq!(s.labels(), t.labels());
        assert_eq!(s.embedding(), t.embedding());
        let published = s.reader().latest();
        assert_eq!(published.refresh, 1);
        assert_eq!(published.labels, s.labels());
        assert!(s.embedding().iter().all(|r| r.iter().all(|x| x.is_finite())));
    }

    #[test]
    fn online_updates_touch_only_linked_nodes() {
        let mut s = two_cliques();
        s.full_refresh().unwrap();
        let before = s.embedding();
        s.apply_new_account("fresh", 1.0).unwrap();
        s.apply_soft_link("fresh", "a3", 1.0, 1.0).unwrap();
        let fresh = s.combined_of(id(&s, "fresh"));
        let norm: f64 = fresh.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
        let after = s.embedding();
        assert_ne!(after.row(3), before.row(3));
        for slot in s.canonical_slots() {
            let mut t = s.clone();
            t.refresh_combined(slot);
            assert_eq!(t.combined, s.combined);
        }
    }

    #[test]
    fn refresh_after_total_merge_is_noise() {
        let mut s = two_cliques();
        for i in 1..12 {
            s.apply_hard_link("a0", &format!("a{i}"), 0.0).unwrap();
        }
        s.full_refresh().unwrap();
        assert_eq!(s.num_super_nodes(), 1);
        assert_eq!(s.labels(), vec![NOISE]);
        assert!(s.embedding().is_zero(0));
    }

    fn random_log(rng: &mut ChaCha8Rng, len: usize) -> Vec<UpdateEvent> {
        let mut events = Vec::new();
        let mut known = 0usize;
        let mut day = 0.0;
        for _ in 0..len {
            day += rng.random_range(0..3) as f64;
            let kind = if known < 2 || rng.random_bool(0.2) {
                known += 1;
                EventKind::NewAccount {
                    token: format!("t{}", known - 1),
                }
            } else {
                let (u, v) = (
                    format!("t{}", rng.random_range(0..known)),
                    format!("t{}", rng.random_range(0..known)),
                );
                if rng.random_bool(0.3) {
                    EventKind::Hard {
                        u,
                        kind: HardKind::Email,
                        v,
                    }
                } else {
                    let weight = rng.random_range(1..12) as f64 * 0.25;
                    EventKind::Soft {
                        u,
                        kind: SoftKind::IpAddress,
                        v,
                        weight,
                    }
                }
            };
            events.push(UpdateEvent { day, kind });
        }
        events
    }

    fn batch(events: &[UpdateEvent]) -> TransformedGraph {
        let mut b = GraphBuilder::raw();
        for e in events {
            match &e.kind {
                EventKind::NewAccount { token } => {
                    b.add_account(token);
                }
                EventKind::Hard { u, kind, v } => {
                    b.add_hard(u, *kind, v);
                }
                EventKind::Soft { u, kind, v, weight } => {
                    b.add_soft(u, *kind, v, *weight, Some(e.day));
                }
            }
        }
        transform(&b.build().0)
    }

    #[test]
    fn replay_matches_batch_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        for _ in 0..40 {
            let events = random_log(&mut rng, 150);
            let mut s = state();
            for e in &events {
                s.apply_event(e).unwrap();
            }
            assert_eq!(s.transformed(WeightView::Undecayed), batch(&events));
        }
    }

    #[test]
    fn from_graph_matches_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let events = random_log(&mut rng, 200);
        let mut b = GraphBuilder::raw();
        for e in &events {
            match &e.kind {
                EventKind::NewAccount { token } => b.add_risk(token, 1.0),
                EventKind::Hard { u, kind, v } => {
                    b.add_hard(u, *kind, v);
                }
                EventKind::Soft { u, kind, v, weight } => {
                    b.add_soft(u, *kind, v, *weight, None);
                }
            }
        }
        let g = b.build().0;
        let s = PipelineState::from_graph(
            &g,
            IncrementalConfig::default(),
            EmbeddingConfig::default(),
            ClusterParams::default(),
        )
        .unwrap();
        assert_eq!(s.transformed(WeightView::Undecayed), transform(&g));
    }

    proptest! {
        #[test]
        fn merge_order_does_not_change_partition(
            links in proptest::collection::vec((0usize..15, 0usize..15), 0..30),
            seed in any::<u64>(),
        ) {
            let run = |order: &[(usize, usize)]| {
                let mut s = with_accounts(15);
                for &(u, v) in order {
                    s.apply_hard_link(&format!("a{u}"), &format!("a{v}"), 0.0).unwrap();
                }
                s.transformed(WeightView::Undecayed).partition()
            };
            let mut shuffled = links.clone();
            shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(run(&links), run(&shuffled));
        }

        #[test]
        fn merged_vector_lies_between_parts(
            u in proptest::collection::vec(-1.0f64..1.0, 4),
            v in proptest::collection::vec(-1.0f64..1.0, 4),
            si in 1usize..50,
            sj in 1usize..50,
        ) {
            let m = size_weighted_merge(&u, si, &v, sj);
            let t = sj as f64 / (si + sj) as f64;
            for d in 0..4 {
                prop_assert!((m[d] - (u[d] + t * (v[d] - u[d]))).abs() < 1e-12);
            }
        }
    }
}
