//! Planted-ring benchmark data and detection metrics.
//!
//! Metrics work at account level: every account inherits the label of its
//! super-node. Coverage is the share of fraud accounts that land in some
//! cluster, precision the share of clustered accounts that are fraud, and
//! purity the mean over clusters of the largest same-ring share, with each
//! legit account counted as a label of its own.

mod stats;
mod synth;

use std::collections::HashMap;
use std::fmt::Write as _;
use std::io::{BufRead, Write};

pub use stats::{transform_stats, TransformStats};
pub use synth::{account_token, generate, SynthConfig};

use crate::graph::io::{data_lines, token};
use crate::graph::{AccountId, TokenMap, TransformedGraph};
use crate::{Error, Result};

/// Known fraud accounts and their ring.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct GroundTruth {
    ring_of: Vec<Option<u32>>,
}

impl GroundTruth {
    /// `ring_of[i]` is the ring of account `i`, `None` for legit accounts.
    pub fn new(ring_of: Vec<Option<u32>>) -> Self {
        GroundTruth { ring_of }
    }

    pub fn num_accounts(&self) -> usize {
        self.ring_of.len()
    }

    pub fn ring(&self, a: AccountId) -> Option<u32> {
        self.ring_of.get(a.index()).copied().flatten()
    }

    pub fn is_fraud(&self, a: AccountId) -> bool {
        self.ring(a).is_some()
    }

    pub fn fraud_count(&self) -> usize {
        self.ring_of.iter().filter(|r| r.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.fraud_count() == 0
    }

    /// Members of each ring, by ring id.
    pub fn rings(&self) -> Vec<Vec<AccountId>> {
        let n = self
            .ring_of
            .iter()
            .flatten()
            .map(|&r| r as usize + 1)
            .max()
            .unwrap_or(0);
        let mut out = vec![Vec::new(); n];
        for (i, r) in self.ring_of.iter().enumerate() {
            if let Some(r) = r {
                out[*r as usize].push(AccountId(i as u32));
            }
        }
        out
    }
}

/// `<token> TAB <ring_id>` per fraud account.
pub fn write_truth<W: Write>(mut w: W, tokens: &TokenMap, truth: &GroundTruth) -> Result<()> {
    for (i, r) in truth.ring_of.iter().enumerate() {
        if let Some(r) = r {
            writeln!(w, "{}\t{r}", tokens.token(AccountId(i as u32)))?;
        }
    }
    Ok(())
}

/// Reads a truth file against a known token map; unlisted accounts are legit.
pub fn read_truth<R: BufRead>(reader: R, tokens: &TokenMap) -> Result<GroundTruth> {
    let mut ring_of = vec![None; tokens.len()];
    for item in data_lines(reader) {
        let (line, f) = item?;
        if f.len() != 2 {
            return Err(Error::parse(line, format!("expected 2 fields, found {}", f.len())));
        }
        let t = token(line, &f[0])?;
        let id = tokens.get(t).ok_or_else(|| Error::UnknownAccount(t.to_owned()))?;
        let ring = f[1]
            .trim()
            .parse()
            .map_err(|_| Error::parse(line, format!("invalid ring id `{}`", f[1])))?;
        ring_of[id.index()] = Some(ring);
    }
    Ok(GroundTruth { ring_of })
}

/// Account-level labels: each account takes its super-node's label.
pub fn expand_labels(labels: &[i32], membership: &[u32]) -> Vec<i32> {
    membership.iter().map(|&s| labels[s as usize]).collect()
}

/// Labels for the hard-link-only baseline: every super-node with at least
/// two accounts is its own cluster; singletons are noise.
pub fn hard_link_baseline(g: &TransformedGraph) -> Vec<i32> {
    let mut next = 0;
    g.super_nodes
        .iter()
        .map(|s| {
            if s.size() >= 2 {
                next += 1;
                next - 1
            } else {
                -1
            }
        })
        .collect()
}

/// Detection metrics plus the counts behind them.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Metrics {
    pub coverage: Option<f64>,
    pub precision: Option<f64>,
    pub purity: Option<f64>,
    pub fraud_accounts: usize,
    pub clustered_accounts: usize,
    pub fraud_clustered: usize,
    pub clusters: usize,
}

fn check_lengths(membership: &[u32], truth: &GroundTruth) {
    assert_eq!(
        membership.len(),
        truth.num_accounts(),
        "membership and ground truth cover different account sets"
    );
}

/// Share of fraud accounts in any cluster; `None` without fraud accounts.
///
/// # Panics
/// If `membership` and `truth` have different lengths.
pub fn coverage(labels: &[i32], membership: &[u32], truth: &GroundTruth) -> Option<f64> {
    evaluate(labels, membership, truth).coverage
}

/// Share of clustered accounts that are fraud; `None` when nothing is clustered.
///
/// # Panics
/// If `membership` and `truth` have different lengths.
pub fn precision(labels: &[i32], membership: &[u32], truth: &GroundTruth) -> Option<f64> {
    evaluate(labels, membership, truth).precision
}

/// Mean per-cluster share of the most common ring; `None` without clusters.
///
/// # Panics
/// If `membership` and `truth` have different lengths.
pub fn purity(labels: &[i32], membership: &[u32], truth: &GroundTruth) -> Option<f64> {
    evaluate(labels, membership, truth).purity
}

/// All metrics at once.
///
/// # Panics
/// If `membership` and `truth` have different lengths.
pub fn evaluate(labels: &[i32], membership: &[u32], truth: &GroundTruth) -> Metrics {
    check_lengths(membership, truth);
    let accounts = expand_labels(labels, membership);
    let mut m = Metrics {
        fraud_accounts: truth.fraud_count(),
        ..Default::default()
    };
    let mut clusters: HashMap<i32, (usize, usize, HashMap<u32, usize>)> = HashMap::new();
    for (i, &l) in accounts.iter().enumerate() {
        if l < 0 {
            continue;
        }
        let ring = truth.ring(AccountId(i as u32));
        m.clustered_accounts += 1;
        m.fraud_clustered += usize::from(ring.is_some());
        let entry = clusters.entry(l).or_default();
        entry.0 += 1;
        match ring {
            Some(r) => *entry.2.entry(r).or_default() += 1,
            None => entry.1 += 1,
        }
    }
    m.clusters = clusters.len();
    if m.fraud_accounts > 0 {
        m.coverage = Some(m.fraud_clustered as f64 / m.fraud_accounts as f64);
    }
    if m.clustered_accounts > 0 {
        m.precision = Some(m.fraud_clustered as f64 / m.clustered_accounts as f64);
    }
    if !clusters.is_empty() {
        let total: f64 = clusters
            .values()
            .map(|(size, legit, rings)| {
                let top = rings.values().copied().max().unwrap_or(0).max(usize::from(*legit > 0));
                top as f64 / *size as f64
            })
            .sum();
        m.purity = Some(total / clusters.len() as f64);
    }
    m
}

fn fmt_metric(v: Option<f64>, decimals: usize) -> String {
    match v {
        Some(x) => format!("{x:.decimals$}"),
        None => "n/a".to_owned(),
    }
}

impl Metrics {
    /// `coverage=`, `precision=`, `purity=` lines with 4 decimals; `n/a`
    /// when a metric is undefined.
    pub fn to_text(&self) -> String {
        format!(
            "coverage={}\nprecision={}\npurity={}\n",
            fmt_metric(self.coverage, 4),
            fmt_metric(self.precision, 4),
            fmt_metric(self.purity, 4)
        )
    }

    /// Flat `key=value` lines at full precision, with counts.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (k, v) in [
            ("coverage", self.coverage),
            ("precision", self.precision),
            ("purity", self.purity),
        ] {
            let _ = writeln!(s, "{k}={}", fmt_metric(v, 10));
        }
        for (k, v) in [
            ("fraud_accounts", self.fraud_accounts),
            ("clustered_accounts", self.clustered_accounts),
            ("fraud_clustered", self.fraud_clustered),
            ("clusters", self.clusters),
        ] {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}
