use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use super::GroundTruth;
use crate::graph::{GraphBuilder, HardKind, HeterogeneousGraph, SoftKind, UnionFind};
use crate::{Error, Result};

/// Parameters of the planted-ring generator.
///
/// Legit accounts get sparse family hard links and uniform background soft
/// noise. Each ring is a group of fraud accounts tied together by dense soft
/// links; a share of rings also shares hard identifiers, the rest are
/// soft-only synthetic identities, and some rings are organized around a hub
/// account (star pattern).
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_legit: usize,
    pub n_rings: usize,
    /// Inclusive `[min, max]` ring size.
    pub ring_size_range: [usize; 2],
    /// Probability of a hard link per member pair, in rings that have them.
    pub hard_link_density_in_ring: f64,
    pub soft_link_density_in_ring: f64,
    /// Probability of a soft link per account pair, over all accounts.
    pub background_soft_noise: f64,
    /// Probability that a legit account hard-links to another legit account.
    pub family_hard_link_rate: f64,
    /// Share of rings that also carry hard links.
    pub hard_ring_fraction: f64,
    /// Share of rings built around a hub linked to every member.
    pub star_ring_fraction: f64,
    /// Hard links inside a ring never merge it below this many super-nodes.
    pub min_ring_super_nodes: usize,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_legit: 1000,
            n_rings: 20,
            ring_size_range: [5, 15],
            hard_link_density_in_ring: 0.1,
            soft_link_density_in_ring: 0.5,
            background_soft_noise: 0.001,
            family_hard_link_rate: 0.05,
            hard_ring_fraction: 0.5,
            star_ring_fraction: 0.2,
            min_ring_super_nodes: 5,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(format!("infeasible synthetic config: {msg}")));
        let [lo, hi] = self.ring_size_range;
        if lo < 2 || lo > hi {
            return bad(format!("ring_size_range [{lo}, {hi}] must satisfy 2 <= min <= max"));
        }
        for (name, p) in [
            ("hard_link_density_in_ring", self.hard_link_density_in_ring),
            ("soft_link_density_in_ring", self.soft_link_density_in_ring),
            ("background_soft_noise", self.background_soft_noise),
            ("family_hard_link_rate", self.family_hard_link_rate),
            ("hard_ring_fraction", self.hard_ring_fraction),
            ("star_ring_fraction", self.star_ring_fraction),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("{name} = {p} is not a probability"));
            }
        }
        if self.family_hard_link_rate > 0.0 && self.n_legit == 1 {
            return bad("family hard links need at least two legit accounts".into());
        }
        let total = self.n_rings.checked_mul(hi).and_then(|f| f.checked_add(self.n_legit));
        if total.is_none_or(|t| t > u32::MAX as usize) {
            return bad("population exceeds the account index range".into());
        }
        Ok(())
    }
}

/// Token of the account at dense index `i`.
pub fn account_token(i: usize) -> String {
    format!("a{i}")
}

/// Generates a graph and its ground truth. Fraud accounts are scattered
/// over the index range so that tokens carry no hint of their role.
pub fn generate(cfg: &SynthConfig) -> Result<(HeterogeneousGraph, GroundTruth)> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let [lo, hi] = cfg.ring_size_range;
    let sizes: Vec<usize> = (0..cfg.n_rings).map(|_| rng.random_range(lo..=hi)).collect();
    let n = cfg.n_legit + sizes.iter().sum::<usize>();

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut ring_of = vec![None; n];
    let mut rings = Vec::with_capacity(sizes.len());
    let mut at = 0;
    for (r, &size) in sizes.iter().enumerate() {
        let mut members = order[at..at + size].to_vec();
        members.sort_unstable();
        for &m in &members {
            ring_of[m] = Some(r as u32);
        }
        rings.push(members);
        at += size;
    }
    let mut legit = order[at..].to_vec();
    legit.sort_unstable();

    let mut b = GraphBuilder::new();
    let tokens: Vec<String> = (0..n).map(account_token).collect();
    for t in &tokens {
        b.add_account(t);
    }
    let soft_kind = |rng: &mut ChaCha8Rng| SoftKind::ALL[rng.random_range(0..SoftKind::ALL.len())];
    let hard_kind = |rng: &mut ChaCha8Rng| HardKind::ALL[rng.random_range(0..HardKind::ALL.len())];

    let pick = |rng: &mut ChaCha8Rng, fraction: f64| {
        let mut ids: Vec<usize> = (0..cfg.n_rings).collect();
        ids.shuffle(rng);
        ids.truncate((fraction * cfg.n_rings as f64).round() as usize);
        let mut mask = vec![false; cfg.n_rings];
        ids.into_iter().for_each(|i| mask[i] = true);
        mask
    };
    let hard_rings = pick(&mut rng, cfg.hard_ring_fraction);
    let star_rings = pick(&mut rng, cfg.star_ring_fraction);

    for (r, members) in rings.iter().enumerate() {
        let k = members.len();
        let mut linked = vec![vec![false; k]; k];
        #[allow(clippy::needless_range_loop)]
        for i in 0..k {
            for j in (i + 1)..k {
                let hub = star_rings[r] && i == 0;
                if hub || rng.random_bool(cfg.soft_link_density_in_ring) {
                    linked[i][j] = true;
                    linked[j][i] = true;
                }
            }
        }
        // Attach any member cut off from those before it, so every ring is connected.
        let mut perm: Vec<usize> = (0..k).collect();
        perm.shuffle(&mut rng);
        for idx in 1..k {
            let x = perm[idx];
            if !perm[..idx].iter().any(|&y| linked[x][y]) {
                let y = perm[rng.random_range(0..idx)];
                linked[x][y] = true;
                linked[y][x] = true;
            }
        }
        for i in 0..k {
            for j in (i + 1)..k {
                if linked[i][j] {
                    let kind = soft_kind(&mut rng);
                    b.add_soft(&tokens[members[i]], kind, &tokens[members[j]], 1.0, None);
                }
            }
        }

        if hard_rings[r] {
            let mut uf = UnionFind::new(k);
            let mut added = 0;
            for i in 0..k {
                for j in (i + 1)..k {
                    if uf.component_count() > cfg.min_ring_super_nodes
                        && rng.random_bool(cfg.hard_link_density_in_ring)
                        && uf.union(i, j).is_some()
                    {
                        b.add_hard(&tokens[members[i]], hard_kind(&mut rng), &tokens[members[j]]);
                        added += 1;
                    }
                }
            }
            if added == 0 && k > cfg.min_ring_super_nodes {
                let i = rng.random_range(0..k);
                let j = (i + rng.random_range(1..k)) % k;
                b.add_hard(&tokens[members[i]], hard_kind(&mut rng), &tokens[members[j]]);
            }
        }
    }

    if legit.len() >= 2 {
        for &u in &legit {
            if rng.random_bool(cfg.family_hard_link_rate) {
                let v = loop {
                    let v = legit[rng.random_range(0..legit.len())];
                    if v != u {
                        break v;
                    }
                };
                b.add_hard(&tokens[u], hard_kind(&mut rng), &tokens[v]);
            }
        }
    }

    // Background noise over all unordered pairs, by geometric skipping.
    let p = cfg.background_soft_noise;
    if p > 0.0 && n >= 2 {
        let (mut i, mut off) = (0usize, 0usize);
        let log_q = (1.0 - p).ln();
        let skip = |rng: &mut ChaCha8Rng| {
            if p >= 1.0 {
                0
            } else {
                let u: f64 = 1.0 - rng.random::<f64>();
                (u.ln() / log_q).floor() as usize
            }
        };
        off += skip(&mut rng);
        loop {
            while i + 1 < n && off >= n - 1 - i {
                off -= n - 1 - i;
                i += 1;
            }
            if i + 1 >= n {
                break;
            }
            let j = i + 1 + off;
            let kind = soft_kind(&mut rng);
            b.add_soft(&tokens[i], kind, &tokens[j], 1.0, None);
            off += 1 + skip(&mut rng);
        }
    }

    for i in 0..n {
        let value = if ring_of[i].is_some() {
            if rng.random_bool(0.5) {
                rng.random_range(1..=3) as f64
            } else {
                0.0
            }
        } else if rng.random_bool(0.02) {
            1.0
        } else {
            0.0
        };
        if value > 0.0 {
            b.add_risk(&tokens[i], value);
        }
    }

    let (g, _) = b.build();
    Ok((g, GroundTruth::new(ring_of)))
}
