//! Heterogeneous account graph and the hard-link super-node transform.
//!
//! Accounts are interned into dense indices at ingestion. Hard links merge
//! accounts into super-nodes (maximal hard-link connected components); soft
//! links between different super-nodes are summed into the weighted edges of
//! the [`TransformedGraph`].

pub(crate) mod io;
mod transform;
mod union_find;

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

pub use io::{
    read_hard_links, read_risk, read_soft_links, read_transformed, write_hard_links, write_risk, write_soft_links,
    write_transformed,
};
pub use transform::{aggregate_soft_links, build_supernodes, find_components, transform};
pub use union_find::UnionFind;

/// Dense 0-based account index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct AccountId(pub u32);

impl AccountId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Bijection between external account tokens and dense indices.
#[derive(Debug, Clone, Default)]
pub struct TokenMap {
    tokens: Vec<String>,
    index: HashMap<String, AccountId>,
}

impl TokenMap {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Returns the id for `token`, assigning the next index if unseen.
    pub fn intern(&mut self, token: &str) -> AccountId {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        let id = AccountId(self.tokens.len() as u32);
        self.tokens.push(token.to_owned());
        self.index.insert(token.to_owned(), id);
        id
    }

    pub fn get(&self, token: &str) -> Option<AccountId> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: AccountId) -> &str {
        &self.tokens[id.index()]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum HardKind {
    Phone,
    Email,
    CreditCard,
    NationalId,
    BankAccount,
}

impl HardKind {
    pub const ALL: [HardKind; 5] = [
        HardKind::Phone,
        HardKind::Email,
        HardKind::CreditCard,
        HardKind::NationalId,
        HardKind::BankAccount,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            HardKind::Phone => "phone",
            HardKind::Email => "email",
            HardKind::CreditCard => "credit_card",
            HardKind::NationalId => "national_id",
            HardKind::BankAccount => "bank_account",
        }
    }
}

impl FromStr for HardKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        HardKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown hard-link kind `{s}`"))
    }
}

impl fmt::Display for HardKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SoftKind {
    DeviceFingerprint,
    Cookie,
    IpAddress,
}

impl SoftKind {
    pub const ALL: [SoftKind; 3] = [SoftKind::DeviceFingerprint, SoftKind::Cookie, SoftKind::IpAddress];

    pub fn as_str(self) -> &'static str {
        match self {
            SoftKind::DeviceFingerprint => "device_fingerprint",
            SoftKind::Cookie => "cookie",
            SoftKind::IpAddress => "ip_address",
        }
    }
}

impl FromStr for SoftKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SoftKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown soft-link kind `{s}`"))
    }
}

impl fmt::Display for SoftKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// High-confidence identity link. Undirected; stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HardLink {
    pub u: AccountId,
    pub v: AccountId,
    pub kind: HardKind,
}

/// Behavioral association with a positive weight. Undirected; stored with `u < v`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftLink {
    pub u: AccountId,
    pub v: AccountId,
    pub kind: SoftKind,
    pub weight: f64,
    /// Days since epoch of the most recent observation, if known.
    pub timestamp: Option<f64>,
}

/// Accounts plus typed hard and soft edge sets.
#[derive(Debug, Clone, Default)]
pub struct HeterogeneousGraph {
    pub tokens: TokenMap,
    pub hard_links: Vec<HardLink>,
    pub soft_links: Vec<SoftLink>,
    /// Optional per-account risk indicator (e.g. chargeback count), 0 when absent.
    pub risk: Vec<f64>,
}

impl HeterogeneousGraph {
    pub fn num_accounts(&self) -> usize {
        self.tokens.len()
    }
}

/// Counters reported by ingestion.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub self_loops_skipped: usize,
    pub duplicate_hard_links: usize,
    pub collapsed_soft_links: usize,
}

/// Outcome of adding a single link to a [`GraphBuilder`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinkOutcome {
    Added,
    Duplicate,
    SelfLoop,
}

/// Incremental constructor for [`HeterogeneousGraph`].
///
/// By default repeated soft links with the same `(u, v, kind)` collapse into
/// one link (binary weight per kind). [`GraphBuilder::raw`] keeps every
/// observation instead, which is what the streaming state accumulates.
#[derive(Debug, Clone)]
pub struct GraphBuilder {
    tokens: TokenMap,
    hard: Vec<HardLink>,
    hard_seen: HashSet<(AccountId, AccountId, HardKind)>,
    soft: Vec<SoftLink>,
    soft_seen: HashMap<(AccountId, AccountId, SoftKind), usize>,
    collapse_soft: bool,
    risk: Vec<f64>,
    report: IngestReport,
}

impl Default for GraphBuilder {
    fn default() -> Self {
        Self::new()
    }
}

impl GraphBuilder {
    pub fn new() -> Self {
        GraphBuilder {
            tokens: TokenMap::new(),
            hard: Vec::new(),
            hard_seen: HashSet::new(),
            soft: Vec::new(),
            soft_seen: HashMap::new(),
            collapse_soft: true,
            risk: Vec::new(),
            report: IngestReport::default(),
        }
    }

    /// Builder that keeps repeated soft links as separate observations.
    pub fn raw() -> Self {
        GraphBuilder {
            collapse_soft: false,
            ..Self::new()
        }
    }

    pub fn tokens(&self) -> &TokenMap {
        &self.tokens
    }

    pub fn add_account(&mut self, token: &str) -> AccountId {
        let id = self.tokens.intern(token);
        if self.risk.len() < self.tokens.len() {
            self.risk.resize(self.tokens.len(), 0.0);
        }
        id
    }

    pub fn add_hard(&mut self, u: &str, kind: HardKind, v: &str) -> LinkOutcome {
        let (a, b) = (self.add_account(u), self.add_account(v));
        if a == b {
            self.report.self_loops_skipped += 1;
            return LinkOutcome::SelfLoop;
        }
        let (a, b) = (a.min(b), a.max(b));
        if !self.hard_seen.insert((a, b, kind)) {
            self.report.duplicate_hard_links += 1;
            return LinkOutcome::Duplicate;
        }
        self.hard.push(HardLink { u: a, v: b, kind });
        LinkOutcome::Added
    }

    /// Adds a soft link. `weight` must be positive and finite; callers that
    /// parse untrusted input validate before calling.
    pub fn add_soft(&mut self, u: &str, kind: SoftKind, v: &str, weight: f64, timestamp: Option<f64>) -> LinkOutcome {
        debug_assert!(weight > 0.0 && weight.is_finite());
        let (a, b) = (self.add_account(u), self.add_account(v));
        if a == b {
            self.report.self_loops_skipped += 1;
            return LinkOutcome::SelfLoop;
        }
        let (a, b) = (a.min(b), a.max(b));
        if self.collapse_soft {
            if let Some(&at) = self.soft_seen.get(&(a, b, kind)) {
                let link = &mut self.soft[at];
                link.weight = link.weight.max(weight);
                link.timestamp = match (link.timestamp, timestamp) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    (x, y) => x.or(y),
                };
                self.report.collapsed_soft_links += 1;
                return LinkOutcome::Duplicate;
            }
            self.soft_seen.insert((a, b, kind), self.soft.len());
        }
        self.soft.push(SoftLink {
            u: a,
            v: b,
            kind,
            weight,
            timestamp,
        });
        LinkOutcome::Added
    }

    /// Adds `value` to the account's risk indicator.
    pub fn add_risk(&mut self, token: &str, value: f64) {
        let id = self.add_account(token);
        self.risk[id.index()] += value;
    }

    pub fn build(self) -> (HeterogeneousGraph, IngestReport) {
        let mut risk = self.risk;
        risk.resize(self.tokens.len(), 0.0);
        (
            HeterogeneousGraph {
                tokens: self.tokens,
                hard_links: self.hard,
                soft_links: self.soft,
                risk,
            },
            self.report,
        )
    }
}

/// A maximal hard-link connected component.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperNode {
    /// Sorted ascending.
    pub members: Vec<AccountId>,
    /// Sum of member risk indicators.
    pub risk: f64,
}

impl SuperNode {
    pub fn size(&self) -> usize {
        self.members.len()
    }
}

/// Weighted undirected edge between super-nodes, stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuperEdge {
    pub a: u32,
    pub b: u32,
    pub weight: f64,
}

/// Super-node graph. Super-nodes are indexed by ascending smallest member;
/// edges are unique per unordered pair and sorted by `(a, b)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TransformedGraph {
    pub super_nodes: Vec<SuperNode>,
    pub edges: Vec<SuperEdge>,
    /// Account index to super-node index.
    pub membership: Vec<u32>,
}

impl TransformedGraph {
    pub fn num_nodes(&self) -> usize {
        self.super_nodes.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Builds a graph whose super-nodes are the given accounts one-to-one.
    /// Duplicate pairs are summed; self-pairs are dropped.
    pub fn from_edges(num_nodes: usize, edges: impl IntoIterator<Item = (u32, u32, f64)>) -> Self {
        let mut acc: HashMap<(u32, u32), f64> = HashMap::new();
        for (a, b, w) in edges {
            if a != b {
                *acc.entry((a.min(b), a.max(b))).or_insert(0.0) += w;
            }
        }
        let mut edges: Vec<SuperEdge> = acc
            .into_iter()
            .filter(|&(_, w)| w > 0.0)
            .map(|((a, b), weight)| SuperEdge { a, b, weight })
            .collect();
        edges.sort_by_key(|e| (e.a, e.b));
        TransformedGraph {
            super_nodes: (0..num_nodes)
                .map(|i| SuperNode {
                    members: vec![AccountId(i as u32)],
                    risk: 0.0,
                })
                .collect(),
            edges,
            membership: (0..num_nodes as u32).collect(),
        }
    }

    /// Σ_j w_ij for every super-node.
    pub fn weighted_degrees(&self) -> Vec<f64> {
        let mut deg = vec![0.0; self.num_nodes()];
        for e in &self.edges {
            deg[e.a as usize] += e.weight;
            deg[e.b as usize] += e.weight;
        }
        deg
    }

    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|e| e.weight).sum()
    }

    /// Member account sets, for partition comparisons.
    pub fn partition(&self) -> Vec<Vec<AccountId>> {
        self.super_nodes.iter().map(|s| s.members.clone()).collect()
    }
}
