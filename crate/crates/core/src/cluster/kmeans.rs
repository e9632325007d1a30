use ndarray::{Array2, ArrayView2, Axis};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_k, require_k, sq_dist, ClusterAlgorithm, ClusterAssignment, ClusterError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansParams {
    pub n_init: usize,
    pub max_iter: usize,
    /// Stop when no centroid moves further than this.
    pub tol: f64,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            n_init: 10,
            max_iter: 300,
            tol: 1e-8,
        }
    }
}

/// Result of one k-means run. `labels[i]` indexes a row of `centroids`.
#[derive(Clone, Debug, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    pub inertia: f64,
    /// Inertia after each assignment step, ending with the final one.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Nearest centroid per row (lowest id on ties) and the total squared distance.
fn assign(data: ArrayView2<f64>, centroids: &Array2<f64>) -> (Vec<usize>, Vec<f64>) {
    data.rows()
        .into_iter()
        .map(|x| {
            let mut best = (0, f64::INFINITY);
            for (c, row) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(x, row);
                if d < best.1 {
                    best = (c, d);
                }
            }
            best
        })
        .unzip()
}

fn plus_plus(data: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = data.rows().into_iter().map(|x| sq_dist(x, data.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let r = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, d) in d2.iter().enumerate() {
                acc += d;
                if acc > r && *d > 0.0 {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| d2.iter().rposition(|d| *d > 0.0).expect("total > 0"))
        } else {
            rng.random_range(0..n)
        };
        chosen.push(next);
        for (i, x) in data.rows().into_iter().enumerate() {
            d2[i] = d2[i].min(sq_dist(x, data.row(next)));
        }
    }
    data.select(Axis(0), &chosen)
}

/// Mean of each cluster; an empty cluster takes the point furthest from its
/// current centroid.
fn update(data: ArrayView2<f64>, labels: &[usize], dists: &[f64], k: usize) -> Array2<f64> {
    let mut sums = Array2::zeros((k, data.ncols()));
    let mut counts = vec![0usize; k];
    for (x, &l) in data.rows().into_iter().zip(labels) {
        let mut row = sums.row_mut(l);
        row += &x;
        counts[l] += 1;
    }
    let mut order: Vec<usize> = (0..labels.len()).collect();
    order.sort_by(|a, b| dists[*b].total_cmp(&dists[*a]).then(a.cmp(b)));
    let mut donors = order.into_iter();
    for c in 0..k {
        if counts[c] == 0 {
            if let Some(i) = donors.next() {
                sums.row_mut(c).assign(&data.row(i));
                counts[c] = 1;
            }
        } else {
            let n = counts[c] as f64;
            sums.row_mut(c).mapv_inplace(|v| v / n);
        }
    }
    sums
}

fn lloyd(data: ArrayView2<f64>, k: usize, p: &KMeansParams, rng: &mut ChaCha8Rng) -> KMeansFit {
    let mut centroids = plus_plus(data, k, rng);
    let mut history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    for _ in 0..p.max_iter {
        iterations += 1;
        let (labels, dists) = assign(data, &centroids);
        history.push(dists.iter().sum());
        let next = update(data, &labels, &dists, k);
        let shift = centroids
            .rows()
            .into_iter()
            .zip(next.rows())
            .map(|(a, b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < p.tol {
            converged = true;
            break;
        }
    }
    let (labels, dists) = assign(data, &centroids);
    let inertia = dists.iter().sum();
    history.push(inertia);
    KMeansFit {
        labels,
        centroids,
        inertia,
        inertia_history: history,
        iterations,
        converged,
    }
}

/// Every restart of a seeded k-means, in restart order.
pub fn kmeans_restarts(data: ArrayView2<f64>, k: usize, seed: u64, p: &KMeansParams) -> Result<Vec<KMeansFit>, ClusterError> {
    check_k(data.nrows(), k)?;
    Ok((0..p.n_init.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            lloyd(data, k, p, &mut rng)
        })
        .collect())
}

/// k-means++ seeded Lloyd iterations, best of `n_init` restarts by inertia
/// (earliest restart on ties).
pub fn kmeans(data: ArrayView2<f64>, k: usize, seed: u64, p: &KMeansParams) -> Result<KMeansFit, ClusterError> {
    let fits = kmeans_restarts(data, k, seed, p)?;
    let mut best: Option<KMeansFit> = None;
    for f in fits {
        if best.as_ref().is_none_or(|b| f.inertia < b.inertia) {
            best = Some(f);
        }
    }
    Ok(best.expect("at least one restart"))
}

fn sse(data: ArrayView2<f64>, rows: &[usize]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let sub = data.select(Axis(0), rows);
    let mean = sub.mean_axis(Axis(0)).expect("non-empty");
    sub.rows().into_iter().map(|x| sq_dist(x, mean.view())).sum()
}

/// Repeatedly split the cluster with the largest squared error in two.
pub fn bisecting_kmeans(data: ArrayView2<f64>, k: usize, seed: u64, p: &KMeansParams) -> Result<Vec<usize>, ClusterError> {
    let n = data.nrows();
    check_k(n, k)?;
    let mut labels = vec![0usize; n];
    let mut members: Vec<Vec<usize>> = vec![(0..n).collect()];
    let mut errors = vec![sse(data, &members[0])];
    while members.len() < k {
        let target = (0..members.len())
            .filter(|&c| members[c].len() >= 2)
            .fold(None, |best: Option<usize>, c| match best {
                Some(b) if errors[b] >= errors[c] => Some(b),
                _ => Some(c),
            })
            .ok_or_else(|| ClusterError::DegenerateInput("no cluster left to split".into()))?;
        let rows = std::mem::take(&mut members[target]);
        let fit = kmeans(data.select(Axis(0), &rows).view(), 2, seed, p)?;
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for (&r, &l) in rows.iter().zip(&fit.labels) {
            if l == 0 { left.push(r) } else { right.push(r) }
        }
        if left.is_empty() || right.is_empty() {
            return Err(ClusterError::DegenerateInput(format!(
                "cluster of {} identical points cannot be split",
                rows.len()
            )));
        }
        let new_id = members.len();
        for &r in &right {
            labels[r] = new_id;
        }
        errors[target] = sse(data, &left);
        errors.push(sse(data, &right));
        members[target] = left;
        members.push(right);
    }
    Ok(labels)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ElbowResult {
    pub k: usize,
    /// Best inertia for k = 1..=k_max.
    pub inertias: Vec<f64>,
}

/// Knee of an inertia curve indexed from k = 1: the interior point furthest
/// from the chord joining the end points. Near-ties go to the smaller k.
pub fn elbow_from_inertias(inertias: &[f64]) -> Result<usize, ClusterError> {
    let m = inertias.len();
    if m < 2 {
        return Err(ClusterError::DegenerateInput("need inertias for at least k = 1, 2".into()));
    }
    if inertias.iter().any(|v| !v.is_finite()) {
        return Err(ClusterError::DegenerateInput("non-finite inertia".into()));
    }
    if inertias[0] <= 0.0 {
        return Err(ClusterError::DegenerateInput("all points identical".into()));
    }
    let (x0, y0) = (1.0, inertias[0]);
    let (x1, y1) = (m as f64, inertias[m - 1]);
    let norm = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
    let dist = |k: usize| {
        let (x, y) = (k as f64, inertias[k - 1]);
        ((y1 - y0) * x - (x1 - x0) * y + x1 * y0 - y1 * x0).abs() / norm
    };
    if m == 2 {
        return Ok(2);
    }
    let d: Vec<f64> = (2..m).map(dist).collect();
    let max = d.iter().cloned().fold(0.0, f64::max);
    let slack = 1e-9 * max.max(inertias[0] * 1e-3);
    Ok(2 + d.iter().position(|v| *v >= max - slack).expect("non-empty"))
}

/// Run k-means for k = 1..=k_max and pick the knee.
pub fn elbow(data: ArrayView2<f64>, k_max: usize, seed: u64, p: &KMeansParams) -> Result<ElbowResult, ClusterError> {
    if k_max < 2 {
        return Err(ClusterError::InvalidConfig("k_max must be at least 2".into()));
    }
    if data.nrows() <= k_max {
        return Err(ClusterError::TooFewPoints {
            n: data.nrows(),
            k: k_max + 1,
        });
    }
    let inertias = (1..=k_max)
        .map(|k| kmeans(data, k, seed, p).map(|f| f.inertia))
        .collect::<Result<Vec<_>, _>>()?;
    let k = elbow_from_inertias(&inertias)?;
    Ok(ElbowResult { k, inertias })
}

#[derive(Clone, Debug, Default)]
pub struct KMeans(pub KMeansParams);

impl ClusterAlgorithm for KMeans {
    fn name(&self) -> &'static str {
        "kmeans"
    }

    fn needs_k(&self) -> bool {
        true
    }

    fn params(&self) -> serde_json::Value {
        serde_json::to_value(&self.0).expect("plain struct")
    }

    fn fit(&self, data: ArrayView2<f64>, k: Option<usize>, seed: u64) -> Result<ClusterAssignment, ClusterError> {
        let k = require_k(self, k)?;
        let fit = kmeans(data, k, seed, &self.0)?;
        Ok(ClusterAssignment::new(self.name(), &fit.labels, self.params(), seed))
    }
}

#[derive(Clone, Debug, Default)]
pub struct BisectingKMeans(pub KMeansParams);

impl ClusterAlgorithm for BisectingKMeans {
    fn name(&self) -> &'static str {
        "bisecting-kmeans"
    }

    fn needs_k(&self) -> bool {
        true
    }

    fn params(&self) -> serde_json::Value {
        serde_json::to_value(&self.0).expect("plain struct")
    }

    fn fit(&self, data: ArrayView2<f64>, k: Option<usize>, seed: u64) -> Result<ClusterAssignment, ClusterError> {
        let k = require_k(self, k)?;
        let labels = bisecting_kmeans(data, k, seed, &self.0)?;
        Ok(ClusterAssignment::new(self.name(), &labels, self.params(), seed))
    }
}
