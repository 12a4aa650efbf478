use std::collections::BTreeMap;

use rayon::prelude::*;

use super::{cosine_distance, ClusterAssignment, ClusterParams, CondensedChild, CondensedEntry, NOISE};
use crate::graph::UnionFind;
use crate::{Error, Result};

/// Density levels are capped so that zero-distance merges stay finite.
const MAX_LAMBDA: f64 = 1e12;

fn lambda_of(weight: f64) -> f64 {
    if weight <= 1.0 / MAX_LAMBDA {
        MAX_LAMBDA
    } else {
        1.0 / weight
    }
}

/// Cosine distance to the k-th nearest other point, for every point.
pub fn core_distances<P: AsRef<[f64]> + Sync>(points: &[P], k: usize) -> Result<Vec<f64>> {
    let n = points.len();
    if k == 0 {
        return Err(Error::Config("core distance rank k must be at least 1".into()));
    }
    if k >= n {
        return Err(Error::TooFewPoints { k, n });
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| cosine_distance(points[i].as_ref(), points[j].as_ref()))
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(k - 1, f64::total_cmp);
            *kth
        })
        .collect())
}

/// `max(core_a, core_b, d(a, b))`.
pub fn mutual_reachability(a: &[f64], b: &[f64], core_a: f64, core_b: f64) -> f64 {
    cosine_distance(a, b).max(core_a).max(core_b)
}

/// Undirected spanning-tree edge with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

/// Prim's algorithm over the implicit complete mutual-reachability graph.
pub fn build_mst<P: AsRef<[f64]> + Sync>(points: &[P], cores: &[f64]) -> Result<Vec<MstEdge>> {
    let n = points.len();
    if n < 2 {
        return Err(Error::TooFewPoints { k: 1, n });
    }
    if cores.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: cores.len(),
        });
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0;
    in_tree[0] = true;
    for _ in 1..n {
        let from = current;
        let done = &in_tree;
        best.par_iter_mut()
            .zip(parent.par_iter_mut())
            .enumerate()
            .filter(|(j, _)| !done[*j])
            .for_each(|(j, (b, p))| {
                let d = mutual_reachability(points[from].as_ref(), points[j].as_ref(), cores[from], cores[j]);
                if d < *b {
                    *b = d;
                    *p = from;
                }
            });
        let next = (0..n)
            .filter(|&j| !in_tree[j])
            .min_by(|&x, &y| best[x].total_cmp(&best[y]).then(x.cmp(&y)))
            .expect("a vertex outside the tree remains");
        edges.push(MstEdge {
            a: parent[next].min(next),
            b: parent[next].max(next),
            weight: best[next],
        });
        in_tree[next] = true;
        current = next;
    }
    Ok(edges)
}

struct Node {
    children: Vec<usize>,
    lambda: f64,
    size: usize,
}

struct Cluster {
    birth: f64,
    stability: f64,
    children: Vec<usize>,
    points: Vec<usize>,
}

/// Condensed tree and excess-of-mass selection over a spanning tree of
/// `mst.len() + 1` points.
///
/// Edges of equal weight are removed together, so a level can split a
/// cluster into more than two parts. The root is never selected, except when
/// every point coincides (all weights zero), which yields one cluster.
pub fn extract_clusters(mst: &[MstEdge], params: &ClusterParams) -> ClusterAssignment {
    let n = mst.len() + 1;
    let m = params.min_cluster_size;
    if n < 2 || n < m {
        return ClusterAssignment::all_noise(n);
    }
    if mst.iter().all(|e| e.weight == 0.0) {
        return ClusterAssignment {
            labels: vec![0; n],
            stabilities: vec![n as f64 * MAX_LAMBDA],
            hierarchy: (0..n)
                .map(|p| CondensedEntry {
                    parent: 0,
                    child: CondensedChild::Point(p),
                    lambda: MAX_LAMBDA,
                    child_size: 1,
                })
                .collect(),
        };
    }

    let mut edges: Vec<MstEdge> = mst
        .iter()
        .map(|e| MstEdge {
            a: e.a.min(e.b),
            b: e.a.max(e.b),
            weight: e.weight,
        })
        .collect();
    edges.sort_by(|x, y| x.weight.total_cmp(&y.weight).then(x.a.cmp(&y.a)).then(x.b.cmp(&y.b)));

    // Bottom-up n-ary single-linkage tree; ids < n are points.
    let mut uf = UnionFind::new(n);
    let mut node_of_root: Vec<usize> = (0..n).collect();
    let mut nodes: Vec<Node> = Vec::new();
    let size_of = |nodes: &[Node], id: usize| if id < n { 1 } else { nodes[id - n].size };
    for group in edges.chunk_by(|x, y| x.weight == y.weight) {
        let mut old_roots: Vec<usize> = group.iter().flat_map(|e| [uf.find(e.a), uf.find(e.b)]).collect();
        old_roots.sort_unstable();
        old_roots.dedup();
        let old_nodes: Vec<(usize, usize)> = old_roots.iter().map(|&r| (r, node_of_root[r])).collect();
        for e in group {
            uf.union(e.a, e.b);
        }
        let mut merged: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (r, node) in old_nodes {
            merged.entry(uf.find(r)).or_default().push(node);
        }
        for (root, children) in merged {
            let size = children.iter().map(|&c| size_of(&nodes, c)).sum();
            node_of_root[root] = n + nodes.len();
            nodes.push(Node {
                children,
                lambda: lambda_of(group[0].weight),
                size,
            });
        }
    }
    let root = node_of_root[uf.find(0)];

    // Top-down condensation.
    let mut clusters = vec![Cluster {
        birth: 0.0,
        stability: 0.0,
        children: Vec::new(),
        points: Vec::new(),
    }];
    let mut hierarchy = Vec::new();
    let mut stack = vec![(root, 0usize)];
    while let Some((id, c)) = stack.pop() {
        if id < n {
            // Only reachable when a single point forms a big child; m >= 2 rules that out.
            continue;
        }
        let node = &nodes[id - n];
        let lambda = node.lambda;
        let (big, small): (Vec<usize>, Vec<usize>) = node.children.iter().partition(|&&ch| size_of(&nodes, ch) >= m);
        if big.len() >= 2 {
            for &ch in &big {
                let size = size_of(&nodes, ch);
                let cc = clusters.len();
                clusters.push(Cluster {
                    birth: lambda,
                    stability: 0.0,
                    children: Vec::new(),
                    points: Vec::new(),
                });
                clusters[c].children.push(cc);
                clusters[c].stability += (lambda - clusters[c].birth) * size as f64;
                hierarchy.push(CondensedEntry {
                    parent: c,
                    child: CondensedChild::Cluster(cc),
                    lambda,
                    child_size: size,
                });
                stack.push((ch, cc));
            }
        } else if let [only] = big[..] {
            stack.push((only, c));
        }
        let falling = if big.is_empty() { node.children.clone() } else { small };
        for ch in falling {
            let mut pending = vec![ch];
            while let Some(x) = pending.pop() {
                if x < n {
                    clusters[c].points.push(x);
                    clusters[c].stability += lambda - clusters[c].birth;
                    hierarchy.push(CondensedEntry {
                        parent: c,
                        child: CondensedChild::Point(x),
                        lambda,
                        child_size: 1,
                    });
                } else {
                    pending.extend_from_slice(&nodes[x - n].children);
                }
            }
        }
    }

    // Excess-of-mass selection, leaves first; cluster ids grow with depth.
    let nc = clusters.len();
    let mut best: Vec<f64> = clusters.iter().map(|c| c.stability).collect();
    let mut selected = vec![false; nc];
    for c in (1..nc).rev() {
        if clusters[c].children.is_empty() {
            selected[c] = true;
            continue;
        }
        let subtree: f64 = clusters[c].children.iter().map(|&k| best[k]).sum();
        if subtree > clusters[c].stability {
            best[c] = subtree;
        } else {
            selected[c] = true;
            let mut pending = clusters[c].children.clone();
            while let Some(d) = pending.pop() {
                selected[d] = false;
                pending.extend_from_slice(&clusters[d].children);
            }
        }
    }

    let mut chosen: Vec<(usize, Vec<usize>)> = (1..nc)
        .filter(|&c| selected[c])
        .map(|c| {
            let mut members = Vec::new();
            let mut pending = vec![c];
            while let Some(d) = pending.pop() {
                members.extend_from_slice(&clusters[d].points);
                pending.extend_from_slice(&clusters[d].children);
            }
            members.sort_unstable();
            (c, members)
        })
        .collect();
    chosen.sort_by_key(|(_, members)| members[0]);

    let mut labels = vec![NOISE; n];
    let mut stabilities = Vec::with_capacity(chosen.len());
    for (label, (c, members)) in chosen.iter().enumerate() {
        for &p in members {
            labels[p] = label as i32;
        }
        stabilities.push(clusters[*c].stability);
    }
    ClusterAssignment {
        labels,
        stabilities,
        hierarchy,
    }
}
