//! Clustering of embeddings, k selection and partition scores.
//!
//! Every algorithm implements [`ClusterAlgorithm`] and is looked up by name
//! in an [`AlgorithmRegistry`], so the set that runs is chosen at runtime.

mod affinity;
mod birch;
mod kmeans;
mod mean_shift;
mod metrics;
mod spectral;
mod suite;
mod ward;

use std::fmt;

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use affinity::{AffinityParams, AffinityPropagation};
pub use birch::{Birch, BirchParams};
pub use kmeans::{
    bisecting_kmeans, elbow, elbow_from_inertias, kmeans, kmeans_restarts, BisectingKMeans, ElbowResult, KMeans,
    KMeansFit, KMeansParams,
};
pub use mean_shift::{MeanShift, MeanShiftParams};
pub use metrics::{adjusted_rand_index, calinski_harabasz, davies_bouldin, score_partition, silhouette, ClusterScores};
pub use spectral::{Spectral, SpectralParams};
pub use suite::{read_clusters, run_suite, write_clusters, write_scores, AlgorithmRun, ClusterTable, KPolicy, SuiteRun};
pub use ward::{ward_linkage, Agglomerative};

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("unknown clustering algorithm {0:?}")]
    UnknownAlgorithm(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{algorithm} needs a cluster count")]
    MissingK { algorithm: &'static str },
    #[error("cannot form {k} clusters from {n} points")]
    TooFewPoints { n: usize, k: usize },
    #[error("{} did not converge", partial.algorithm)]
    NoConvergence { partial: Box<ClusterAssignment> },
    #[error("affinity matrix is singular: {0}")]
    SingularAffinity(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("score undefined: {0}")]
    UndefinedScore(String),
    #[error("malformed cluster file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Labels produced by one algorithm run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub algorithm: String,
    /// Cluster id per input row; ids are `0..k`, numbered by first appearance.
    pub labels: Vec<usize>,
    pub k: usize,
    pub params: serde_json::Value,
    pub seed: u64,
    /// False when the algorithm stopped on its iteration cap.
    pub converged: bool,
}

impl ClusterAssignment {
    fn new(algorithm: &str, raw: &[usize], params: serde_json::Value, seed: u64) -> Self {
        let (labels, k) = renumber(raw);
        Self {
            algorithm: algorithm.to_string(),
            labels,
            k,
            params,
            seed,
            converged: true,
        }
    }

    /// Row indices of each cluster.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.k];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

/// Relabel so ids are `0..k` in order of first appearance.
pub fn renumber(raw: &[usize]) -> (Vec<usize>, usize) {
    let mut map = std::collections::HashMap::new();
    let labels = raw
        .iter()
        .map(|l| {
            let next = map.len();
            *map.entry(*l).or_insert(next)
        })
        .collect();
    (labels, map.len())
}

pub(crate) fn sq_dist(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub(crate) fn check_k(n: usize, k: usize) -> Result<(), ClusterError> {
    if k == 0 || n < k {
        return Err(ClusterError::TooFewPoints { n, k });
    }
    Ok(())
}

/// A clustering strategy. `k` is ignored by algorithms that choose their own
/// cluster count.
pub trait ClusterAlgorithm: Send + Sync {
    fn name(&self) -> &'static str;

    fn needs_k(&self) -> bool;

    /// Hyperparameters, echoed into assignments and run manifests.
    fn params(&self) -> serde_json::Value;

    fn fit(&self, data: ArrayView2<f64>, k: Option<usize>, seed: u64) -> Result<ClusterAssignment, ClusterError>;
}

pub(crate) fn require_k(alg: &dyn ClusterAlgorithm, k: Option<usize>) -> Result<usize, ClusterError> {
    k.ok_or(ClusterError::MissingK { algorithm: alg.name() })
}

/// Hyperparameters for every registered algorithm.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterConfig {
    pub kmeans: KMeansParams,
    pub mean_shift: MeanShiftParams,
    pub birch: BirchParams,
    pub spectral: SpectralParams,
    pub affinity: AffinityParams,
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        let bad = |m: &str| Err(ClusterError::InvalidConfig(m.to_string()));
        if self.kmeans.n_init == 0 || self.kmeans.max_iter == 0 {
            return bad("kmeans.n_init and kmeans.max_iter must be positive");
        }
        if let Some(b) = self.mean_shift.bandwidth {
            if !(b > 0.0) {
                return bad("mean_shift.bandwidth must be positive");
            }
        }
        if !(self.mean_shift.quantile > 0.0 && self.mean_shift.quantile <= 1.0) {
            return bad("mean_shift.quantile must be in (0, 1]");
        }
        if self.birch.branching < 2 {
            return bad("birch.branching must be at least 2");
        }
        if !(self.affinity.damping >= 0.5 && self.affinity.damping < 1.0) {
            return bad("affinity.damping must be in [0.5, 1)");
        }
        if let Some(g) = self.spectral.gamma {
            if !(g > 0.0) {
                return bad("spectral.gamma must be positive");
            }
        }
        Ok(())
    }
}

/// Named clustering strategies, in registration order.
pub struct AlgorithmRegistry {
    entries: Vec<Box<dyn ClusterAlgorithm>>,
}

impl fmt::Debug for AlgorithmRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.names()).finish()
    }
}

impl AlgorithmRegistry {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    /// The seven built-in algorithms configured from `cfg`.
    pub fn with_defaults(cfg: &ClusterConfig) -> Result<Self, ClusterError> {
        cfg.validate()?;
        let mut r = Self::empty();
        r.register(Box::new(KMeans(cfg.kmeans.clone())));
        r.register(Box::new(MeanShift(cfg.mean_shift.clone())));
        r.register(Box::new(Spectral {
            params: cfg.spectral.clone(),
            kmeans: cfg.kmeans.clone(),
        }));
        r.register(Box::new(Agglomerative));
        r.register(Box::new(Birch(cfg.birch.clone())));
        r.register(Box::new(BisectingKMeans(cfg.kmeans.clone())));
        r.register(Box::new(AffinityPropagation(cfg.affinity.clone())));
        Ok(r)
    }

    /// Add or replace the strategy with the same name.
    pub fn register(&mut self, alg: Box<dyn ClusterAlgorithm>) {
        match self.entries.iter().position(|e| e.name() == alg.name()) {
            Some(i) => self.entries[i] = alg,
            None => self.entries.push(alg),
        }
    }

    pub fn get(&self, name: &str) -> Result<&dyn ClusterAlgorithm, ClusterError> {
        self.entries
            .iter()
            .find(|e| e.name() == name)
            .map(|b| b.as_ref())
            .ok_or_else(|| ClusterError::UnknownAlgorithm(name.to_string()))
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| e.name()).collect()
    }

    /// Resolve `all` or a comma-separated list of names.
    pub fn select(&self, spec: &str) -> Result<Vec<&dyn ClusterAlgorithm>, ClusterError> {
        if spec.trim() == "all" {
            return Ok(self.entries.iter().map(|b| b.as_ref()).collect());
        }
        spec.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| self.get(s))
            .collect()
    }
}
