use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use super::{rank_clusters, write_report, write_scores, PipelineConfig, RankedCluster, RiskWeights};
use crate::clustering::{cluster, read_clusters, write_clusters, ClusterAssignment, ClusterParams};
use crate::embedding::{embed, read_embedding, write_embedding, CombinedEmbedding, EmbeddingConfig};
use crate::graph::{
    read_hard_links, read_risk, read_soft_links, read_transformed, transform, write_transformed, GraphBuilder,
    HeterogeneousGraph, TokenMap, TransformedGraph,
};
use crate::{Error, Result};

pub const TRANSFORMED_FILE: &str = "transformed.tsv";
pub const EMBEDDING_FILE: &str = "embedding.tsv";
pub const CLUSTERS_FILE: &str = "clusters.tsv";
pub const REPORT_FILE: &str = "report.tsv";
pub const SCORES_FILE: &str = "cluster_scores.tsv";

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::in_file(path, e.into()))
}

fn read_with<T>(path: &Path, f: impl FnOnce(BufReader<File>) -> Result<T>) -> Result<T> {
    f(open(path)?).map_err(|e| Error::in_file(path, e))
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
    let wrap = |e: Error| Error::in_file(path, e);
    let mut w = BufWriter::new(File::create(path).map_err(|e| wrap(e.into()))?);
    f(&mut w).map_err(wrap)?;
    w.flush().map_err(|e| wrap(e.into()))
}

/// Reads the link and risk files, then writes their transform to `out`.
pub fn transform_stage(
    hard: Option<&Path>,
    soft: Option<&Path>,
    risk: Option<&Path>,
    out: &Path,
) -> Result<(HeterogeneousGraph, TransformedGraph)> {
    let mut b = GraphBuilder::new();
    if let Some(p) = hard {
        read_with(p, |r| read_hard_links(r, &mut b))?;
    }
    if let Some(p) = soft {
        read_with(p, |r| read_soft_links(r, &mut b))?;
    }
    if let Some(p) = risk {
        read_with(p, |r| read_risk(r, &mut b))?;
    }
    let (g, _) = b.build();
    let tg = transform(&g);
    write_with(out, |w| write_transformed(w, &g.tokens, &tg))?;
    Ok((g, tg))
}

/// Embeds the graph stored at `transformed` and writes the combined vectors.
pub fn embed_stage(transformed: &Path, out: &Path, cfg: &EmbeddingConfig) -> Result<CombinedEmbedding> {
    let (_, tg) = read_with(transformed, read_transformed)?;
    let emb = embed(&tg, cfg)?;
    write_with(out, |w| write_embedding(w, &emb))?;
    Ok(emb)
}

/// Clusters the stored embedding and writes one label per super-node.
pub fn cluster_stage(embedding: &Path, out: &Path, params: &ClusterParams) -> Result<ClusterAssignment> {
    let emb = read_with(embedding, read_embedding)?;
    let a = cluster(&emb, params)?;
    write_with(out, |w| write_clusters(w, &a.labels))?;
    Ok(a)
}

/// Per-super-node risk from a risk file, keyed by the transformed graph's tokens.
fn node_risk(path: Option<&Path>, tokens: &TokenMap, tg: &TransformedGraph) -> Result<Vec<f64>> {
    let mut risk = vec![0.0; tg.num_nodes()];
    let Some(path) = path else {
        return Ok(risk);
    };
    let mut b = GraphBuilder::new();
    for t in tokens.tokens() {
        b.add_account(t);
    }
    read_with(path, |r| read_risk(r, &mut b))?;
    let (g, _) = b.build();
    if g.num_accounts() > tokens.len() {
        let unknown = g.tokens.tokens()[tokens.len()].clone();
        return Err(Error::in_file(path, Error::UnknownAccount(unknown)));
    }
    for (account, &s) in tg.membership.iter().enumerate() {
        risk[s as usize] += g.risk[account];
    }
    Ok(risk)
}

/// Scores and ranks the stored clusters, writing the report and, if asked,
/// the per-cluster score components.
pub fn rank_stage(
    transformed: &Path,
    embedding: &Path,
    clusters: &Path,
    risk: Option<&Path>,
    weights: &RiskWeights,
    report: &Path,
    scores: Option<&Path>,
) -> Result<Vec<RankedCluster>> {
    weights.validate()?;
    let (tokens, tg) = read_with(transformed, read_transformed)?;
    let emb = read_with(embedding, read_embedding)?;
    let labels = read_with(clusters, read_clusters)?;
    for found in [emb.rows(), labels.len()] {
        if found != tg.num_nodes() {
            return Err(Error::DimensionMismatch {
                expected: tg.num_nodes(),
                found,
            });
        }
    }
    let node_risk = node_risk(risk, &tokens, &tg)?;
    let ranked = rank_clusters(&labels, &tg, &emb, &node_risk, weights);
    write_with(report, |w| write_report(w, &tokens, &ranked))?;
    if let Some(p) = scores {
        write_with(p, |w| write_scores(w, &ranked))?;
    }
    Ok(ranked)
}

/// Where [`run_pipeline`] left its outputs.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub transformed: PathBuf,
    pub embedding: PathBuf,
    pub clusters: PathBuf,
    pub report: PathBuf,
    pub scores: PathBuf,
    pub ranked: Vec<RankedCluster>,
}

/// Runs all stages through their files in `paths.out_dir`, so the result is
/// the same as invoking the stages one by one. On failure, every artifact
/// this run wrote is removed and the error names the failing stage.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<Artifacts> {
    cfg.validate()?;
    let p = &cfg.paths;
    let dir = p
        .out_dir
        .as_deref()
        .ok_or_else(|| Error::Config("paths.out_dir is required".into()))?;
    if p.hard_links.is_none() && p.soft_links.is_none() {
        return Err(Error::Config("need paths.hard_links or paths.soft_links".into()));
    }
    fs::create_dir_all(dir).map_err(|e| Error::in_file(dir, e.into()))?;
    let transformed = dir.join(TRANSFORMED_FILE);
    let embedding = dir.join(EMBEDDING_FILE);
    let clusters = dir.join(CLUSTERS_FILE);
    let report = dir.join(REPORT_FILE);
    let scores = dir.join(SCORES_FILE);

    let run = || -> Result<Vec<RankedCluster>> {
        let stage = |name| move |e| Error::in_stage(name, e);
        transform_stage(
            p.hard_links.as_deref(),
            p.soft_links.as_deref(),
            p.risk.as_deref(),
            &transformed,
        )
        .map_err(stage("transform"))?;
        embed_stage(&transformed, &embedding, &cfg.embedding_config()).map_err(stage("embed"))?;
        cluster_stage(&embedding, &clusters, &cfg.clustering).map_err(stage("cluster"))?;
        rank_stage(
            &transformed,
            &embedding,
            &clusters,
            p.risk.as_deref(),
            &cfg.risk,
            &report,
            Some(&scores),
        )
        .map_err(stage("rank"))
    };
    match run() {
        Ok(ranked) => Ok(Artifacts {
            transformed,
            embedding,
            clusters,
            report,
            scores,
            ranked,
        }),
        Err(e) => {
            for f in [&transformed, &embedding, &clusters, &report, &scores] {
                let _ = fs::remove_file(f);
            }
            Err(e)
        }
    }
}
