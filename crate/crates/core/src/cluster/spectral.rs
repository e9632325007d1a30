use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans, KMeansParams};
use super::{check_k, require_k, sq_dist, ClusterAlgorithm, ClusterAssignment, ClusterError};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectralParams {
    /// RBF width; `None` means 1 / dimension.
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct Spectral {
    pub params: SpectralParams,
    pub kmeans: KMeansParams,
}

fn distinct_rows(data: ArrayView2<f64>) -> usize {
    let mut rows: Vec<Vec<u64>> = data
        .rows()
        .into_iter()
        .map(|r| r.iter().map(|v| v.to_bits()).collect())
        .collect();
    rows.sort();
    rows.dedup();
    rows.len()
}

impl Spectral {
    /// Row-normalized top-k eigenvectors of D^-1/2 W D^-1/2.
    pub fn embedding(&self, data: ArrayView2<f64>, k: usize) -> Result<Array2<f64>, ClusterError> {
        let n = data.nrows();
        let gamma = self.params.gamma.unwrap_or(1.0 / data.ncols().max(1) as f64);
        let mut w = DMatrix::<f64>::zeros(n, n);
        for i in 0..n {
            w[(i, i)] = 1.0;
            for j in i + 1..n {
                let v = (-gamma * sq_dist(data.row(i), data.row(j))).exp();
                w[(i, j)] = v;
                w[(j, i)] = v;
            }
        }
        let inv_sqrt: Vec<f64> = (0..n).map(|i| 1.0 / w.row(i).sum().sqrt()).collect();
        for i in 0..n {
            for j in 0..n {
                w[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
            }
        }
        let eig = SymmetricEigen::new(w);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|a, b| eig.eigenvalues[*b].total_cmp(&eig.eigenvalues[*a]).then(a.cmp(b)));
        let mut u = Array2::zeros((n, k));
        for (c, &e) in idx.iter().take(k).enumerate() {
            // fix the sign so the largest-magnitude entry is positive
            let col = eig.eigenvectors.column(e);
            let pivot = col.iter().cloned().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
            let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
            for i in 0..n {
                u[(i, c)] = sign * col[i];
            }
        }
        for mut row in u.rows_mut() {
            let norm = row.dot(&row).sqrt();
            if norm > 0.0 {
                row /= norm;
            }
        }
        if u.iter().any(|v| !v.is_finite()) {
            return Err(ClusterError::SingularAffinity("non-finite spectral embedding".into()));
        }
        Ok(u)
    }
}

impl ClusterAlgorithm for Spectral {
    fn name(&self) -> &'static str {
        "spectral"
    }

    fn needs_k(&self) -> bool {
        true
    }

    fn params(&self) -> serde_json::Value {
        serde_json::json!({ "gamma": self.params.gamma, "kmeans": self.kmeans })
    }

    fn fit(&self, data: ArrayView2<f64>, k: Option<usize>, seed: u64) -> Result<ClusterAssignment, ClusterError> {
        let k = require_k(self, k)?;
        check_k(data.nrows(), k)?;
        let distinct = distinct_rows(data);
        if distinct < k {
            return Err(ClusterError::SingularAffinity(format!(
                "{distinct} distinct points cannot span {k} clusters"
            )));
        }
        let u = self.embedding(data, k)?;
        let fit = kmeans(u.view(), k, seed, &self.kmeans)?;
        Ok(ClusterAssignment::new(self.name(), &fit.labels, self.params(), seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn duplicate_only_data_is_singular() {
        let d = arr2(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(
            Spectral::default().fit(d.view(), Some(2), 0),
            Err(ClusterError::SingularAffinity(_))
        ));
    }

    #[test]
    fn separated_groups() {
        let d = arr2(&[[0.0, 0.0], [0.1, 0.0], [0.0, 0.2], [6.0, 6.0], [6.1, 6.0], [6.0, 6.2]]);
        let a = Spectral::default().fit(d.view(), Some(2), 3).unwrap();
        assert_eq!(a.labels, vec![0, 0, 0, 1, 1, 1]);
    }
}
