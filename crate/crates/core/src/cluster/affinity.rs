use ndarray::{Array2, ArrayView2};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{sq_dist, ClusterAlgorithm, ClusterAssignment, ClusterError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AffinityParams {
    pub damping: f64,
    pub max_iter: usize,
    /// Iterations with an unchanged exemplar set that count as converged.
    pub convergence_iter: usize,
    /// Self-similarity; `None` uses the median of the full similarity matrix,
    /// zero diagonal included.
    pub preference: Option<f64>,
}

impl Default for AffinityParams {
    fn default() -> Self {
        Self {
            damping: 0.5,
            max_iter: 200,
            convergence_iter: 15,
            preference: None,
        }
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}

#[derive(Clone, Debug, Default)]
pub struct AffinityPropagation(pub AffinityParams);

impl AffinityPropagation {
    /// Negative squared distances with the preference on the diagonal and a
    /// seeded perturbation far below the data scale to break ties.
    fn similarities(&self, data: ArrayView2<f64>, seed: u64) -> Array2<f64> {
        let n = data.nrows();
        let mut s = Array2::zeros((n, n));
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s[(i, j)] = -sq_dist(data.row(i), data.row(j));
                }
            }
        }
        let pref = self.0.preference.unwrap_or_else(|| median(s.iter().cloned().collect()));
        for i in 0..n {
            s[(i, i)] = pref;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let tiny = f64::MIN_POSITIVE * 100.0;
        s.mapv_inplace(|v| v + (f64::EPSILON * v + tiny) * (rng.random::<f64>() - 0.5));
        s
    }
}

impl ClusterAlgorithm for AffinityPropagation {
    fn name(&self) -> &'static str {
        "affinity-propagation"
    }

    fn needs_k(&self) -> bool {
        false
    }

    fn params(&self) -> serde_json::Value {
        serde_json::to_value(&self.0).expect("plain struct")
    }

    fn fit(&self, data: ArrayView2<f64>, _k: Option<usize>, seed: u64) -> Result<ClusterAssignment, ClusterError> {
        let n = data.nrows();
        if n == 0 {
            return Err(ClusterError::TooFewPoints { n, k: 1 });
        }
        if n == 1 {
            return Ok(ClusterAssignment::new(self.name(), &[0], self.params(), seed));
        }
        let s = self.similarities(data, seed);
        let lam = self.0.damping;
        let mut r = Array2::<f64>::zeros((n, n));
        let mut a = Array2::<f64>::zeros((n, n));
        let mut exemplars: Vec<bool> = vec![false; n];
        let mut stable = 0usize;
        let mut converged = false;

        for _ in 0..self.0.max_iter {
            for i in 0..n {
                let (mut first, mut second, mut arg) = (f64::NEG_INFINITY, f64::NEG_INFINITY, 0);
                for k in 0..n {
                    let v = a[(i, k)] + s[(i, k)];
                    if v > first {
                        second = first;
                        first = v;
                        arg = k;
                    } else if v > second {
                        second = v;
                    }
                }
                for k in 0..n {
                    let other = if k == arg { second } else { first };
                    r[(i, k)] = lam * r[(i, k)] + (1.0 - lam) * (s[(i, k)] - other);
                }
            }
            for k in 0..n {
                let col: f64 = (0..n).map(|i| if i == k { r[(k, k)] } else { r[(i, k)].max(0.0) }).sum();
                for i in 0..n {
                    let new = if i == k {
                        col - r[(k, k)]
                    } else {
                        (col - r[(i, k)].max(0.0)).min(0.0)
                    };
                    a[(i, k)] = lam * a[(i, k)] + (1.0 - lam) * new;
                }
            }
            let next: Vec<bool> = (0..n).map(|k| a[(k, k)] + r[(k, k)] > 0.0).collect();
            if next == exemplars {
                stable += 1;
            } else {
                stable = 0;
                exemplars = next;
            }
            if stable >= self.0.convergence_iter && exemplars.iter().any(|e| *e) {
                converged = true;
                break;
            }
        }

        let centers: Vec<usize> = (0..n).filter(|&k| exemplars[k]).collect();
        let raw: Vec<usize> = if centers.is_empty() {
            vec![0; n]
        } else {
            (0..n)
                .map(|i| {
                    if exemplars[i] {
                        return i;
                    }
                    let mut best = centers[0];
                    for &c in &centers[1..] {
                        if s[(i, c)] > s[(i, best)] {
                            best = c;
                        }
                    }
                    best
                })
                .collect()
        };
        let mut out = ClusterAssignment::new(self.name(), &raw, self.params(), seed);
        if !converged {
            out.converged = false;
            return Err(ClusterError::NoConvergence { partial: Box::new(out) });
        }
        Ok(out)
    }
}
