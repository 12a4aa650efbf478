use std::collections::HashMap;

use super::{AccountId, HeterogeneousGraph, SuperEdge, SuperNode, TransformedGraph, UnionFind};

/// Unions the endpoints of every hard link.
pub fn find_components(g: &HeterogeneousGraph) -> UnionFind {
    let mut uf = UnionFind::new(g.num_accounts());
    for link in &g.hard_links {
        uf.union(link.u.index(), link.v.index());
    }
    uf
}

/// One super-node per union-find root, indexed by ascending smallest member.
/// Returns the super-nodes and the account → super-node mapping.
pub fn build_supernodes(g: &HeterogeneousGraph, uf: &mut UnionFind) -> (Vec<SuperNode>, Vec<u32>) {
    let n = g.num_accounts();
    let mut slot_of_root = vec![u32::MAX; n];
    let mut super_nodes: Vec<SuperNode> = Vec::with_capacity(uf.component_count());
    let mut membership = Vec::with_capacity(n);
    // Ascending account order visits each component first at its smallest member,
    // and pushes members already sorted.
    for v in 0..n {
        let root = uf.find(v);
        if slot_of_root[root] == u32::MAX {
            slot_of_root[root] = super_nodes.len() as u32;
            super_nodes.push(SuperNode {
                members: Vec::new(),
                risk: 0.0,
            });
        }
        let s = slot_of_root[root];
        let node = &mut super_nodes[s as usize];
        node.members.push(AccountId(v as u32));
        node.risk += g.risk.get(v).copied().unwrap_or(0.0);
        membership.push(s);
    }
    (super_nodes, membership)
}

/// Sums soft-link weights per unordered super-node pair; links inside a
/// super-node are dropped.
pub fn aggregate_soft_links(
    g: &HeterogeneousGraph,
    super_nodes: Vec<SuperNode>,
    membership: Vec<u32>,
) -> TransformedGraph {
    let mut acc: HashMap<(u32, u32), f64> = HashMap::new();
    for link in &g.soft_links {
        let su = membership[link.u.index()];
        let sv = membership[link.v.index()];
        if su != sv {
            *acc.entry((su.min(sv), su.max(sv))).or_insert(0.0) += link.weight;
        }
    }
    let mut edges: Vec<SuperEdge> = acc
        .into_iter()
        .map(|((a, b), weight)| SuperEdge { a, b, weight })
        .collect();
    edges.sort_unstable_by_key(|e| (e.a, e.b));
    TransformedGraph {
        super_nodes,
        edges,
        membership,
    }
}

/// Hard-link components → super-nodes → aggregated soft-link edges.
pub fn transform(g: &HeterogeneousGraph) -> TransformedGraph {
    let mut uf = find_components(g);
    let (super_nodes, membership) = build_supernodes(g, &mut uf);
    aggregate_soft_links(g, super_nodes, membership)
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeMap, VecDeque};

    use proptest::prelude::*;
    use rand::{seq::SliceRandom, Rng as _, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::graph::{GraphBuilder, HardKind, SoftKind};

    fn two_ring_example() -> HeterogeneousGraph {
        let mut b = GraphBuilder::new();
        for i in 1..=11 {
            b.add_account(&format!("A{i}"));
        }
        b.add_hard("A1", HardKind::Phone, "A2");
        b.add_hard("A2", HardKind::Email, "A4");
        b.add_hard("A4", HardKind::CreditCard, "A5");
        b.add_hard("A6", HardKind::NationalId, "A7");
        b.add_hard("A7", HardKind::Phone, "A9");
        b.add_hard("A9", HardKind::BankAccount, "A10");
        b.add_hard("A10", HardKind::Email, "A11");
        b.add_soft("A2", SoftKind::DeviceFingerprint, "A3", 1.0, None);
        b.add_soft("A5", SoftKind::IpAddress, "A6", 1.0, None);
        b.add_soft("A4", SoftKind::Cookie, "A7", 1.0, None);
        b.add_soft("A8", SoftKind::IpAddress, "A11", 1.0, None);
        b.add_soft("A1", SoftKind::Cookie, "A5", 1.0, None);
        b.build().0
    }

    fn tokens_of(g: &HeterogeneousGraph, node: &SuperNode) -> Vec<String> {
        node.members.iter().map(|&m| g.tokens.token(m).to_owned()).collect()
    }

    #[test]
    fn example_components() {
        let g = two_ring_example();
        let tg = transform(&g);
        let parts: Vec<Vec<String>> = tg.super_nodes.iter().map(|s| tokens_of(&g, s)).collect();
        assert_eq!(
            parts,
            vec![
                vec!["A1", "A2", "A4", "A5"],
                vec!["A3"],
                vec!["A6", "A7", "A9", "A10", "A11"],
                vec!["A8"],
            ]
        );
        let mut sizes: Vec<usize> = tg.super_nodes.iter().map(SuperNode::size).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![1, 1, 4, 5]);
        // A1-A5 cookie is internal and discarded.
        let edges: Vec<(u32, u32, f64)> = tg.edges.iter().map(|e| (e.a, e.b, e.weight)).collect();
        assert_eq!(edges, vec![(0, 1, 1.0), (0, 2, 2.0), (2, 3, 1.0)]);
    }

    #[test]
    fn no_hard_links_means_singletons() {
        let mut b = GraphBuilder::new();
        for i in 0..7 {
            b.add_account(&i.to_string());
        }
        let g = b.build().0;
        let uf = find_components(&g);
        assert_eq!(uf.component_count(), 7);
        let tg = transform(&g);
        assert_eq!(tg.num_nodes(), 7);
        assert_eq!(tg.num_edges(), 0);
    }

    #[test]
    fn single_account_graph() {
        let mut b = GraphBuilder::new();
        b.add_account("only");
        let tg = transform(&b.build().0);
        assert_eq!(tg.num_nodes(), 1);
        assert_eq!(tg.super_nodes[0].size(), 1);
    }

    #[test]
    fn parallel_kinds_and_pairs_sum() {
        let mut b = GraphBuilder::new();
        b.add_hard("u1", HardKind::Phone, "u2");
        b.add_hard("v1", HardKind::Phone, "v2");
        b.add_soft("u1", SoftKind::DeviceFingerprint, "v1", 1.0, None);
        b.add_soft("u1", SoftKind::IpAddress, "v1", 1.0, None);
        b.add_soft("u2", SoftKind::Cookie, "v2", 1.0, None);
        let tg = transform(&b.build().0);
        assert_eq!(tg.num_nodes(), 2);
        assert_eq!(
            tg.edges,
            vec![SuperEdge {
                a: 0,
                b: 1,
                weight: 3.0
            }]
        );
    }

    #[test]
    fn internal_soft_links_vanish() {
        let mut b = GraphBuilder::new();
        b.add_hard("a", HardKind::Phone, "b");
        b.add_hard("b", HardKind::Phone, "c");
        b.add_soft("a", SoftKind::Cookie, "c", 1.0, None);
        b.add_soft("a", SoftKind::IpAddress, "b", 2.0, None);
        let tg = transform(&b.build().0);
        assert_eq!(tg.num_nodes(), 1);
        assert!(tg.edges.is_empty());
    }

    #[test]
    fn risk_is_summed_per_supernode() {
        let mut b = GraphBuilder::new();
        b.add_hard("a", HardKind::Phone, "b");
        b.add_risk("a", 2.0);
        b.add_risk("b", 3.0);
        b.add_risk("c", 1.0);
        let tg = transform(&b.build().0);
        let risks: Vec<f64> = tg.super_nodes.iter().map(|s| s.risk).collect();
        assert_eq!(risks, vec![5.0, 1.0]);
    }

    // Random graph with dyadic weights so sums are exact in any order.
    fn random_graph(rng: &mut ChaCha8Rng, n: usize, hard: usize, soft: usize) -> HeterogeneousGraph {
        let mut b = GraphBuilder::raw();
        for i in 0..n {
            b.add_account(&format!("n{i}"));
        }
        for _ in 0..hard {
            let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
            b.add_hard(&format!("n{u}"), HardKind::Phone, &format!("n{v}"));
        }
        for _ in 0..soft {
            let (u, v) = (rng.random_range(0..n), rng.random_range(0..n));
            let w = [0.5, 1.0, 2.0, 3.0][rng.random_range(0..4)];
            b.add_soft(&format!("n{u}"), SoftKind::Cookie, &format!("n{v}"), w, None);
        }
        b.build().0
    }

    fn bfs_components(g: &HeterogeneousGraph) -> Vec<usize> {
        let n = g.num_accounts();
        let mut adj = vec![Vec::new(); n];
        for l in &g.hard_links {
            adj[l.u.index()].push(l.v.index());
            adj[l.v.index()].push(l.u.index());
        }
        let mut comp = vec![usize::MAX; n];
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            comp[s] = s;
            let mut q = VecDeque::from([s]);
            while let Some(x) = q.pop_front() {
                for &y in &adj[x] {
                    if comp[y] == usize::MAX {
                        comp[y] = s;
                        q.push_back(y);
                    }
                }
            }
        }
        comp
    }

    #[test]
    fn partition_and_weights_match_oracles() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let n = rng.random_range(1..=20);
            let (hard, soft) = (rng.random_range(0..20), rng.random_range(0..40));
            let g = random_graph(&mut rng, n, hard, soft);
            let tg = transform(&g);
            let comp = bfs_components(&g);
            for u in 0..n {
                for v in 0..n {
                    assert_eq!(comp[u] == comp[v], tg.membership[u] == tg.membership[v]);
                }
            }
            // Double loop over super-node pairs with membership indicator.
            let k = tg.num_nodes();
            let mut expected = BTreeMap::new();
            for i in 0..k {
                for j in (i + 1)..k {
                    let mut w = 0.0;
                    for l in &g.soft_links {
                        let (su, sv) = (tg.membership[l.u.index()] as usize, tg.membership[l.v.index()] as usize);
                        if (su == i && sv == j) || (su == j && sv == i) {
                            w += l.weight;
                        }
                    }
                    if w > 0.0 {
                        expected.insert((i as u32, j as u32), w);
                    }
                }
            }
            let got: BTreeMap<(u32, u32), f64> = tg.edges.iter().map(|e| ((e.a, e.b), e.weight)).collect();
            assert_eq!(got, expected);
            let sizes: usize = tg.super_nodes.iter().map(SuperNode::size).sum();
            assert_eq!(sizes, n);
            assert!(tg.num_nodes() <= n && tg.num_edges() <= g.soft_links.len());
        }
    }

    proptest! {
        #[test]
        fn weight_is_conserved(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(&mut rng, 30, 20, 60);
            let tg = transform(&g);
            let internal: f64 = g
                .soft_links
                .iter()
                .filter(|l| tg.membership[l.u.index()] == tg.membership[l.v.index()])
                .map(|l| l.weight)
                .sum();
            let total: f64 = g.soft_links.iter().map(|l| l.weight).sum();
            prop_assert_eq!(tg.total_weight() + internal, total);
            prop_assert!(tg.edges.iter().all(|e| e.a < e.b && e.weight > 0.0));
        }

        #[test]
        fn hard_link_order_does_not_matter(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(&mut rng, 40, 30, 10);
            let base = transform(&g).partition();
            let mut shuffled = g.clone();
            shuffled.hard_links.shuffle(&mut rng);
            prop_assert_eq!(transform(&shuffled).partition(), base);
        }

        #[test]
        fn transforming_a_transformed_graph_is_identity(seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_graph(&mut rng, 25, 15, 50);
            let tg = transform(&g);
            // Re-ingest super-nodes as plain accounts joined by their aggregated edges.
            let mut b = GraphBuilder::raw();
            for i in 0..tg.num_nodes() {
                b.add_account(&format!("s{i}"));
            }
            for e in &tg.edges {
                b.add_soft(&format!("s{}", e.a), SoftKind::Cookie, &format!("s{}", e.b), e.weight, None);
            }
            let again = transform(&b.build().0);
            prop_assert_eq!(again.num_nodes(), tg.num_nodes());
            prop_assert_eq!(again.edges, tg.edges);
        }
    }
}
