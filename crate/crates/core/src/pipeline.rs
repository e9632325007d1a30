//! The end-to-end run: ingest, actions, flows, embeddings, clustering and
//! profiles, written to one run directory with a hashed manifest.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::action::{behaviour_graph_for, save_bgraph};
use crate::cluster::{run_suite, write_clusters, write_scores, AlgorithmRegistry, ClusterError, ClusterTable};
use crate::config::PipelineConfig;
use crate::embed::{embed_users, write_embeddings};
use crate::export::{ExportFormat, ExportGraph};
use crate::flow::eligible_users;
use crate::ingest::{load_dataset, save_graph, IngestError};
use crate::profile::{profile_clusters, write_profiles_csv};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT: &str = "chainflow-run/1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FailureKind {
    Input,
    Config,
    Internal,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            Self::Input => 1,
            Self::Config => 2,
            Self::Internal => 3,
        }
    }
}

/// A stage failure, named by stage so the caller can report where it broke.
#[derive(Debug)]
pub struct PipelineError {
    pub stage: &'static str,
    pub kind: FailureKind,
    pub message: String,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} stage failed: {}", self.stage, self.message)
    }
}

impl std::error::Error for PipelineError {}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

fn fail(stage: &'static str, kind: FailureKind) -> impl Fn(&dyn fmt::Display) -> PipelineError {
    move |e| PipelineError {
        stage,
        kind,
        message: e.to_string(),
    }
}

fn internal<E: fmt::Display>(stage: &'static str) -> impl Fn(E) -> PipelineError {
    move |e| fail(stage, FailureKind::Internal)(&e)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunCounts {
    pub transactions: usize,
    pub rejected_lines: usize,
    pub users: usize,
    pub eligible_users: usize,
    pub actions: usize,
    pub nfts: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgorithmSummary {
    pub algorithm: String,
    pub k: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProfileSummary {
    pub cluster: usize,
    pub users: usize,
    pub label: String,
}

/// Everything needed to tell two runs apart: the effective config, what was
/// produced, and a content hash per artifact.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Manifest {
    pub format: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub counts: RunCounts,
    pub k: usize,
    pub inertias: Vec<f64>,
    pub algorithms: Vec<AlgorithmSummary>,
    pub profiles: Vec<ProfileSummary>,
    /// Relative path → sha256 hex, manifest excluded.
    pub artifacts: BTreeMap<String, String>,
}

/// Run every stage on `input`, writing into `out` (created if missing).
pub fn run_pipeline(cfg: &PipelineConfig, seed: u64, input: &Path, out: &Path) -> Result<Manifest, PipelineError> {
    cfg.validate().map_err(|e| fail("config", FailureKind::Config)(&e))?;
    std::fs::create_dir_all(out).map_err(internal("setup"))?;

    let report = load_dataset(input, &cfg.ingest.options()).map_err(|e| match e {
        IngestError::Io { .. } | IngestError::Schema(_) => fail("ingest", FailureKind::Input)(&e),
    })?;
    let graph = report.graph;
    save_graph(&graph, &out.join("graph")).map_err(internal("ingest"))?;

    let (_, bg) = behaviour_graph_for(&graph, &cfg.actions).map_err(internal("actions"))?;
    save_bgraph(&bg, &out.join("bgraph")).map_err(internal("actions"))?;

    let users = eligible_users(&bg, cfg.flow.min_unique_actions);
    if users.is_empty() {
        return Err(PipelineError {
            stage: "flow",
            kind: FailureKind::Input,
            message: format!("no user has {} or more distinct actions", cfg.flow.min_unique_actions),
        });
    }

    let run = embed_users(&bg, &users, &cfg.embed, seed).map_err(internal("embed"))?;
    write_embeddings(&out.join("embeddings.csv"), &run.addresses, &run.z).map_err(internal("embed"))?;

    let cluster_err = |e: ClusterError| {
        let kind = match e {
            ClusterError::UnknownAlgorithm(_) | ClusterError::InvalidConfig(_) => FailureKind::Config,
            ClusterError::TooFewPoints { .. } => FailureKind::Input,
            _ => FailureKind::Internal,
        };
        fail("cluster", kind)(&e)
    };
    let registry = AlgorithmRegistry::with_defaults(&cfg.cluster.algorithm_config()).map_err(cluster_err)?;
    let suite = run_suite(
        run.z.view(),
        &registry,
        &cfg.cluster.algorithms,
        cfg.cluster.policy(),
        seed,
        &cfg.cluster.kmeans,
    )
    .map_err(cluster_err)?;
    let table = ClusterTable::from_runs(&run.addresses, &suite.runs);
    write_clusters(&out.join("clusters.csv"), &table).map_err(internal("cluster"))?;
    write_scores(&out.join("scores.csv"), &suite.runs).map_err(internal("cluster"))?;

    let labels = table.labels(&cfg.cluster.profile_algorithm).map_err(|_| PipelineError {
        stage: "profile",
        kind: FailureKind::Config,
        message: format!(
            "profile algorithm {:?} is not among the clustered algorithms",
            cfg.cluster.profile_algorithm
        ),
    })?;
    let profiles = profile_clusters(&bg, &run.addresses, labels, &cfg.profile).map_err(internal("profile"))?;
    write_profiles_csv(&out.join("profiles.csv"), &profiles.profiles).map_err(internal("profile"))?;
    let flows_dir = out.join("general_flows");
    std::fs::create_dir_all(&flows_dir).map_err(internal("export"))?;
    for g in &profiles.general_flows {
        let graph = ExportGraph::from_general_flow(&bg, g);
        for format in [ExportFormat::Dot, ExportFormat::GraphMl] {
            let path = flows_dir.join(format!("cluster_{}.{}", g.cluster_id, format.extension()));
            graph.write(&path, format).map_err(internal("export"))?;
        }
    }

    let mut config = serde_json::to_value(cfg).map_err(internal("manifest"))?;
    config["seed"] = serde_json::json!(seed);
    let manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        seed,
        config,
        counts: RunCounts {
            transactions: graph.transactions().len(),
            rejected_lines: report.errors.len(),
            users: bg.users().len(),
            eligible_users: users.len(),
            actions: bg.actions().len(),
            nfts: bg.nfts().len(),
        },
        k: suite.k,
        inertias: suite.inertias.clone(),
        algorithms: suite
            .runs
            .iter()
            .map(|r| AlgorithmSummary {
                algorithm: r.assignment.algorithm.clone(),
                k: r.assignment.k,
                converged: r.assignment.converged,
            })
            .collect(),
        profiles: profiles
            .profiles
            .iter()
            .map(|p| ProfileSummary {
                cluster: p.cluster_id,
                users: p.user_count,
                label: p.label.to_string(),
            })
            .collect(),
        artifacts: hash_tree(out).map_err(internal("manifest"))?,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(internal("manifest"))?;
    std::fs::write(out.join(MANIFEST_FILE), text + "\n").map_err(internal("manifest"))?;
    Ok(manifest)
}

/// sha256 of every file under `root` except the manifest, keyed by its
/// `/`-separated relative path.
pub fn hash_tree(root: &Path) -> std::io::Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut stack: Vec<PathBuf> = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir)? {
            let path = entry?.path();
            if path.is_dir() {
                stack.push(path);
                continue;
            }
            let rel = path.strip_prefix(root).expect("under root");
            let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            if key == MANIFEST_FILE {
                continue;
            }
            out.insert(key, hex::encode(Sha256::digest(std::fs::read(&path)?)));
        }
    }
    Ok(out)
}
