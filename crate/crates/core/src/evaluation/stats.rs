use std::collections::BTreeMap;
use std::fmt;

use crate::graph::{HeterogeneousGraph, TransformedGraph};

/// Size and density of the graph before and after the super-node transform.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformStats {
    pub accounts: usize,
    pub hard_links: usize,
    pub soft_links: usize,
    pub super_nodes: usize,
    pub super_edges: usize,
    /// `2·(|E_H| + |E_S|) / |V|`.
    pub avg_degree_before: f64,
    /// `2·|E'| / |V'|`.
    pub avg_degree_after: f64,
    pub density_before: f64,
    pub density_after: f64,
    /// `|V'| / |V|`.
    pub node_ratio: f64,
    /// `|E'| / (|E_H| + |E_S|)`.
    pub edge_ratio: f64,
    pub singleton_fraction: f64,
    /// Share of super-nodes with 2 to 5 accounts.
    pub small_fraction: f64,
    /// Share of super-nodes with more than 5 accounts.
    pub large_fraction: f64,
    pub max_size: usize,
    /// Super-node size → count.
    pub size_histogram: BTreeMap<usize, usize>,
}

fn ratio(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        0.0
    } else {
        a / b
    }
}

fn density(nodes: usize, edges: usize) -> f64 {
    let n = nodes as f64;
    ratio(2.0 * edges as f64, n * (n - 1.0))
}

pub fn transform_stats(g: &HeterogeneousGraph, tg: &TransformedGraph) -> TransformStats {
    let (v, eh, es) = (g.num_accounts(), g.hard_links.len(), g.soft_links.len());
    let (k, e) = (tg.num_nodes(), tg.num_edges());
    let mut size_histogram = BTreeMap::new();
    for s in &tg.super_nodes {
        *size_histogram.entry(s.size()).or_insert(0) += 1;
    }
    let share = |pred: &dyn Fn(usize) -> bool| {
        let c: usize = size_histogram.iter().filter(|(s, _)| pred(**s)).map(|(_, c)| c).sum();
        ratio(c as f64, k as f64)
    };
    TransformStats {
        accounts: v,
        hard_links: eh,
        soft_links: es,
        super_nodes: k,
        super_edges: e,
        avg_degree_before: ratio(2.0 * (eh + es) as f64, v as f64),
        avg_degree_after: ratio(2.0 * e as f64, k as f64),
        density_before: density(v, eh + es),
        density_after: density(k, e),
        node_ratio: if v == 0 { 1.0 } else { k as f64 / v as f64 },
        edge_ratio: ratio(e as f64, (eh + es) as f64),
        singleton_fraction: share(&|s| s == 1),
        small_fraction: share(&|s| (2..=5).contains(&s)),
        large_fraction: share(&|s| s > 5),
        max_size: size_histogram.keys().next_back().copied().unwrap_or(0),
        size_histogram,
    }
}

impl fmt::Display for TransformStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "accounts={}", self.accounts)?;
        writeln!(f, "hard_links={}", self.hard_links)?;
        writeln!(f, "soft_links={}", self.soft_links)?;
        writeln!(f, "super_nodes={}", self.super_nodes)?;
        writeln!(f, "super_edges={}", self.super_edges)?;
        writeln!(f, "node_ratio={:.4}", self.node_ratio)?;
        writeln!(f, "edge_ratio={:.4}", self.edge_ratio)?;
        writeln!(f, "avg_degree_before={:.4}", self.avg_degree_before)?;
        writeln!(f, "avg_degree_after={:.4}", self.avg_degree_after)?;
        writeln!(f, "density_before={:.6e}", self.density_before)?;
        writeln!(f, "density_after={:.6e}", self.density_after)?;
        writeln!(f, "singleton_fraction={:.4}", self.singleton_fraction)?;
        writeln!(f, "size_2_to_5_fraction={:.4}", self.small_fraction)?;
        writeln!(f, "size_over_5_fraction={:.4}", self.large_fraction)?;
        writeln!(f, "max_super_node_size={}", self.max_size)?;
        for (size, count) in &self.size_histogram {
            writeln!(f, "size_{size}={count}")?;
        }
        Ok(())
    }
}
