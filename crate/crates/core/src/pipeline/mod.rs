//! End-to-end detection: transform, embed, cluster, then rank clusters by a
//! risk score.
//!
//! The score blends three components with configurable weights:
//! cluster size (capped at [`SIZE_CAP`] accounts), embedding density
//! (one minus the mean pairwise cosine distance) and the mean aggregated
//! risk indicator of the member super-nodes, rescaled by its global maximum.

mod stages;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Deserialize;

pub use stages::{
    cluster_stage, embed_stage, rank_stage, run_pipeline, transform_stage, Artifacts, CLUSTERS_FILE, EMBEDDING_FILE,
    REPORT_FILE, SCORES_FILE, TRANSFORMED_FILE,
};

use crate::clustering::{cluster, ClusterAssignment, ClusterParams};
use crate::embedding::{embed, CombinedEmbedding, EmbeddingConfig};
use crate::evaluation::SynthConfig;
use crate::graph::{transform, AccountId, HeterogeneousGraph, TokenMap, TransformedGraph};
use crate::incremental::IncrementalConfig;
use crate::{Error, Result};

/// Cluster size, in accounts, at which the size component saturates.
pub const SIZE_CAP: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RiskWeights {
    pub size: f64,
    pub density: f64,
    pub indicator: f64,
}

impl Default for RiskWeights {
    fn default() -> Self {
        RiskWeights {
            size: 0.2,
            density: 0.3,
            indicator: 0.5,
        }
    }
}

impl RiskWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.size, self.density, self.indicator];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::Config("risk weights must be non-negative".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("risk weights must sum to 1, got {sum}")));
        }
        Ok(())
    }
}

/// Input files and the output directory for [`run_pipeline`].
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub hard_links: Option<PathBuf>,
    pub soft_links: Option<PathBuf>,
    pub risk: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// Everything the pipeline needs, loadable from one TOML file:
///
/// ```toml
/// seed = 7
/// [embedding]
/// dim = 128
/// [clustering]
/// min_cluster_size = 5
/// [incremental]
/// decay_lambda = 0.01
/// [risk]
/// size = 0.2
/// density = 0.3
/// indicator = 0.5
/// [synth]
/// n_rings = 20
/// [paths]
/// hard_links = "hard.tsv"
/// soft_links = "soft.tsv"
/// out_dir = "out"
/// ```
///
/// Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides `embedding.seed` when set.
    pub seed: Option<u64>,
    pub embedding: EmbeddingConfig,
    pub clustering: ClusterParams,
    pub incremental: IncrementalConfig,
    pub risk: RiskWeights,
    /// Only read by the synthetic-data generator.
    pub synth: SynthConfig,
    pub paths: Paths,
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::in_file(path, e.into()))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| Error::in_file(path, e))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.paths.hard_links,
            &mut cfg.paths.soft_links,
            &mut cfg.paths.risk,
            &mut cfg.paths.out_dir,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.embedding.validate()?;
        self.clustering.validate()?;
        self.incremental.validate()?;
        self.risk.validate()
    }

    /// The embedding settings with the top-level seed applied.
    pub fn embedding_config(&self) -> EmbeddingConfig {
        EmbeddingConfig {
            seed: self.seed.unwrap_or(self.embedding.seed),
            ..self.embedding.clone()
        }
    }
}

/// Normalized score components, each in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ComponentScores {
    pub size: f64,
    pub density: f64,
    pub indicator: f64,
}

impl ComponentScores {
    pub fn combine(&self, w: &RiskWeights) -> f64 {
        (w.size * self.size + w.density * self.density + w.indicator * self.indicator).clamp(0.0, 1.0)
    }
}

/// Score components of one cluster. `members` are super-node indices,
/// `n_accounts` their expanded size and `node_risk` the aggregated risk of
/// every super-node; `max_risk` is the largest entry of `node_risk`.
///
/// Density is clamped at 0 for clusters whose mean cosine distance exceeds 1.
///
/// # Panics
/// If `members` is empty.
pub fn score_components(
    members: &[usize],
    n_accounts: usize,
    embedding: &CombinedEmbedding,
    node_risk: &[f64],
    max_risk: f64,
) -> ComponentScores {
    assert!(!members.is_empty(), "risk score of an empty cluster");
    let size = (n_accounts as f64 / SIZE_CAP).min(1.0);
    let density = if members.len() < 2 {
        1.0
    } else {
        let mut total = 0.0;
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                total += crate::clustering::cosine_distance(embedding.row(i), embedding.row(j));
            }
        }
        let pairs = members.len() * (members.len() - 1) / 2;
        (1.0 - total / pairs as f64).clamp(0.0, 1.0)
    };
    let indicator = if max_risk > 0.0 {
        let mean = members.iter().map(|&i| node_risk[i]).sum::<f64>() / members.len() as f64;
        mean / max_risk
    } else {
        0.0
    };
    ComponentScores {
        size,
        density,
        indicator,
    }
}

/// `r(C)` for one cluster; see [`score_components`].
pub fn risk_score(
    members: &[usize],
    n_accounts: usize,
    embedding: &CombinedEmbedding,
    node_risk: &[f64],
    max_risk: f64,
    weights: &RiskWeights,
) -> f64 {
    score_components(members, n_accounts, embedding, node_risk, max_risk).combine(weights)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankedCluster {
    pub cluster_id: u32,
    pub super_nodes: Vec<usize>,
    /// Expanded accounts in ascending id order.
    pub accounts: Vec<AccountId>,
    pub score: f64,
    pub components: ComponentScores,
}

/// Scores every cluster in `labels` and sorts by score, highest first. Ties
/// keep ascending cluster id.
pub fn rank_clusters(
    labels: &[i32],
    graph: &TransformedGraph,
    embedding: &CombinedEmbedding,
    node_risk: &[f64],
    weights: &RiskWeights,
) -> Vec<RankedCluster> {
    let mut groups: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        if l >= 0 {
            groups.entry(l as u32).or_default().push(i);
        }
    }
    let max_risk = node_risk.iter().copied().fold(0.0, f64::max);
    let mut ranked: Vec<RankedCluster> = groups
        .into_par_iter()
        .map(|(cluster_id, super_nodes)| {
            let mut accounts: Vec<AccountId> = super_nodes
                .iter()
                .flat_map(|&s| graph.super_nodes[s].members.iter().copied())
                .collect();
            accounts.sort_unstable();
            let components = score_components(&super_nodes, accounts.len(), embedding, node_risk, max_risk);
            RankedCluster {
                cluster_id,
                score: components.combine(weights),
                super_nodes,
                accounts,
                components,
            }
        })
        .collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.cluster_id.cmp(&b.cluster_id)));
    ranked
}

/// `#ranked_clusters <m>`, then one line per cluster:
/// `<rank> TAB <cluster_id> TAB <score> TAB <n_accounts> TAB <tokens>`.
pub fn write_report<W: Write>(mut w: W, tokens: &TokenMap, ranked: &[RankedCluster]) -> Result<()> {
    writeln!(w, "#ranked_clusters {}", ranked.len())?;
    for (rank, c) in ranked.iter().enumerate() {
        let names: Vec<&str> = c.accounts.iter().map(|&a| tokens.token(a)).collect();
        writeln!(
            w,
            "{}\t{}\t{:.4}\t{}\t{}",
            rank + 1,
            c.cluster_id,
            c.score,
            c.accounts.len(),
            names.join(",")
        )?;
    }
    Ok(())
}

/// Per-cluster score components at full precision, in rank order.
pub fn write_scores<W: Write>(mut w: W, ranked: &[RankedCluster]) -> Result<()> {
    writeln!(w, "#cluster_id\tscore\tsize\tdensity\tindicator\tsuper_nodes")?;
    for c in ranked {
        let p = &c.components;
        writeln!(
            w,
            "{}\t{}\t{}\t{}\t{}\t{}",
            c.cluster_id,
            c.score,
            p.size,
            p.density,
            p.indicator,
            c.super_nodes.len()
        )?;
    }
    Ok(())
}

/// In-memory result of [`detect`].
#[derive(Debug, Clone)]
pub struct Detection {
    pub transformed: TransformedGraph,
    pub embedding: CombinedEmbedding,
    pub assignment: ClusterAssignment,
    pub ranked: Vec<RankedCluster>,
}

impl Detection {
    /// Account-level labels.
    pub fn account_labels(&self) -> Vec<i32> {
        crate::evaluation::expand_labels(&self.assignment.labels, &self.transformed.membership)
    }
}

/// Runs every stage in memory, without touching the file system.
pub fn detect(g: &HeterogeneousGraph, cfg: &PipelineConfig) -> Result<Detection> {
    cfg.validate()?;
    let transformed = transform(g);
    let embedding = embed(&transformed, &cfg.embedding_config()).map_err(|e| Error::in_stage("embed", e))?;
    let assignment = cluster(&embedding, &cfg.clustering).map_err(|e| Error::in_stage("cluster", e))?;
    let node_risk: Vec<f64> = transformed.super_nodes.iter().map(|s| s.risk).collect();
    let ranked = rank_clusters(&assignment.labels, &transformed, &embedding, &node_risk, &cfg.risk);
    Ok(Detection {
        transformed,
        embedding,
        assignment,
        ranked,
    })
}
