//! Running a selection of algorithms on one embedding matrix, and the
//! clusters/scores CSV files.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::{elbow, score_partition, AlgorithmRegistry, ClusterAssignment, ClusterError, ClusterScores, KMeansParams};

/// How the cluster count for k-based algorithms is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KPolicy {
    Fixed(usize),
    Elbow { k_max: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlgorithmRun {
    pub assignment: ClusterAssignment,
    /// `None` when the partition has fewer than two clusters.
    pub scores: Option<ClusterScores>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteRun {
    pub k: usize,
    /// Inertias for k = 1..=k_max when the elbow chose `k`.
    pub inertias: Vec<f64>,
    pub runs: Vec<AlgorithmRun>,
}

/// Fit every selected algorithm with the same k and seed and score it.
/// An elbow over identical points falls back to one cluster. Affinity
/// propagation and mean shift keep their partial result when they stop on
/// the iteration cap; the assignment is flagged as not converged.
pub fn run_suite(
    data: ArrayView2<f64>,
    registry: &AlgorithmRegistry,
    selection: &str,
    policy: KPolicy,
    seed: u64,
    kmeans: &KMeansParams,
) -> Result<SuiteRun, ClusterError> {
    let algorithms = registry.select(selection)?;
    let (k, inertias) = match policy {
        KPolicy::Fixed(k) => (k, Vec::new()),
        KPolicy::Elbow { k_max } => match elbow(data, k_max, seed, kmeans) {
            Ok(e) => (e.k, e.inertias),
            Err(ClusterError::DegenerateInput(_)) => (1, Vec::new()),
            Err(e) => return Err(e),
        },
    };
    let mut runs = Vec::with_capacity(algorithms.len());
    for alg in algorithms {
        let assignment = match alg.fit(data, Some(k), seed) {
            Ok(a) => a,
            Err(ClusterError::NoConvergence { partial }) => *partial,
            Err(e) => return Err(e),
        };
        let scores = match score_partition(data, &assignment.labels) {
            Ok(s) => Some(s),
            Err(ClusterError::UndefinedScore(_)) => None,
            Err(e) => return Err(e),
        };
        runs.push(AlgorithmRun { assignment, scores });
    }
    Ok(SuiteRun { k, inertias, runs })
}

/// Cluster id per address for each algorithm, one column per algorithm.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ClusterTable {
    pub addresses: Vec<String>,
    pub columns: Vec<(String, Vec<usize>)>,
}

impl ClusterTable {
    pub fn from_runs(addresses: &[String], runs: &[AlgorithmRun]) -> Self {
        Self {
            addresses: addresses.to_vec(),
            columns: runs
                .iter()
                .map(|r| (r.assignment.algorithm.clone(), r.assignment.labels.clone()))
                .collect(),
        }
    }

    pub fn labels(&self, algorithm: &str) -> Result<&[usize], ClusterError> {
        self.columns
            .iter()
            .find(|(name, _)| name == algorithm)
            .map(|(_, l)| l.as_slice())
            .ok_or_else(|| ClusterError::UnknownAlgorithm(algorithm.to_string()))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("address");
        for (name, _) in &self.columns {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for (i, addr) in self.addresses.iter().enumerate() {
            s.push_str(addr);
            for (_, labels) in &self.columns {
                let _ = write!(s, ",{}", labels[i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, ClusterError> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines.next().ok_or_else(|| ClusterError::Parse("empty file".into()))?;
        let mut cols = header.split(',');
        if cols.next() != Some("address") {
            return Err(ClusterError::Parse("first column must be address".into()));
        }
        let mut table = Self {
            addresses: Vec::new(),
            columns: cols.map(|c| (c.trim().to_string(), Vec::new())).collect(),
        };
        for (i, line) in lines.enumerate() {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != table.columns.len() + 1 {
                return Err(ClusterError::Parse(format!("line {}: expected {} cells", i + 2, table.columns.len() + 1)));
            }
            table.addresses.push(cells[0].to_string());
            for (col, cell) in table.columns.iter_mut().zip(&cells[1..]) {
                let v = cell
                    .trim()
                    .parse()
                    .map_err(|e| ClusterError::Parse(format!("line {}: {e}", i + 2)))?;
                col.1.push(v);
            }
        }
        Ok(table)
    }
}

pub fn write_clusters(path: &Path, table: &ClusterTable) -> Result<(), ClusterError> {
    std::fs::write(path, table.to_csv())?;
    Ok(())
}

pub fn read_clusters(path: &Path) -> Result<ClusterTable, ClusterError> {
    ClusterTable::parse(&std::fs::read_to_string(path)?)
}

/// `algorithm,k,sc,dbi,chi`; undefined scores are left empty.
pub fn write_scores(path: &Path, runs: &[AlgorithmRun]) -> Result<(), ClusterError> {
    let mut s = String::from("algorithm,k,sc,dbi,chi\n");
    for r in runs {
        let a = &r.assignment;
        match r.scores {
            Some(sc) => {
                let _ = writeln!(s, "{},{},{},{},{}", a.algorithm, a.k, sc.sc, sc.dbi, sc.chi);
            }
            None => {
                let _ = writeln!(s, "{},{},,,", a.algorithm, a.k);
            }
        }
    }
    std::fs::write(path, s)?;
    Ok(())
}
