//! HDBSCAN over combined embeddings with cosine distance.
//!
//! Core distances → mutual reachability → minimum spanning tree → condensed
//! hierarchy → excess-of-mass cluster selection. Points outside every
//! selected cluster are labeled [`NOISE`].

mod hdbscan;
mod io;

use serde::Deserialize;

pub use hdbscan::{build_mst, core_distances, extract_clusters, mutual_reachability, MstEdge};
pub use io::{read_clusters, write_clusters};

use crate::embedding::CombinedEmbedding;
use crate::{Error, Result};

pub const NOISE: i32 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClusterParams {
    pub min_cluster_size: usize,
    /// Neighbor rank used for core distances; defaults to `min_cluster_size`.
    pub min_samples: Option<usize>,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            min_cluster_size: 5,
            min_samples: None,
        }
    }
}

impl ClusterParams {
    pub fn new(min_cluster_size: usize) -> Self {
        ClusterParams {
            min_cluster_size,
            min_samples: None,
        }
    }

    pub fn min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }

    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::Config("min_cluster_size must be at least 2".into()));
        }
        if self.min_samples == Some(0) {
            return Err(Error::Config("min_samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Either a point or a cluster leaving its parent in the condensed tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CondensedChild {
    Point(usize),
    Cluster(usize),
}

/// One condensed-tree record. Cluster 0 is the root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CondensedEntry {
    pub parent: usize,
    pub child: CondensedChild,
    pub lambda: f64,
    pub child_size: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClusterAssignment {
    /// Per point: cluster label, or [`NOISE`].
    pub labels: Vec<i32>,
    /// Stability of each selected cluster, indexed by label.
    pub stabilities: Vec<f64>,
    pub hierarchy: Vec<CondensedEntry>,
}

impl ClusterAssignment {
    pub fn all_noise(n: usize) -> Self {
        ClusterAssignment {
            labels: vec![NOISE; n],
            ..Default::default()
        }
    }

    pub fn num_clusters(&self) -> usize {
        self.labels
            .iter()
            .filter(|&&l| l >= 0)
            .map(|&l| l as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    /// Point indices per cluster label.
    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_clusters()];
        for (i, &l) in self.labels.iter().enumerate() {
            if l >= 0 {
                out[l as usize].push(i);
            }
        }
        out
    }
}

/// `1 - a·b / (‖a‖‖b‖)`, clamped to [0, 2]. Defined as 1 when either side is zero.
pub fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    if aa == 0.0 || bb == 0.0 {
        return 1.0;
    }
    (1.0 - ab / (aa.sqrt() * bb.sqrt())).clamp(0.0, 2.0)
}

/// Full HDBSCAN over the embedding rows. Zero rows (edgeless super-nodes)
/// are labeled noise up front and take no part in distances.
pub fn cluster(embedding: &CombinedEmbedding, params: &ClusterParams) -> Result<ClusterAssignment> {
    params.validate()?;
    let n = embedding.rows();
    let active: Vec<usize> = (0..n).filter(|&i| !embedding.is_zero(i)).collect();
    if active.len() < 2 {
        return Ok(ClusterAssignment::all_noise(n));
    }
    let points: Vec<&[f64]> = active.iter().map(|&i| embedding.row(i)).collect();
    let k = params.min_samples().min(points.len() - 1);
    let cores = core_distances(&points, k)?;
    let mst = build_mst(&points, &cores)?;
    let sub = extract_clusters(&mst, params);

    let mut labels = vec![NOISE; n];
    for (&orig, &l) in active.iter().zip(&sub.labels) {
        labels[orig] = l;
    }
    let hierarchy = sub
        .hierarchy
        .into_iter()
        .map(|mut e| {
            if let CondensedChild::Point(p) = e.child {
                e.child = CondensedChild::Point(active[p]);
            }
            e
        })
        .collect();
    Ok(ClusterAssignment {
        labels,
        stabilities: sub.stabilities,
        hierarchy,
    })
}
