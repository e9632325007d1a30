use ndarray::{Array1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{sq_dist, ClusterAlgorithm, ClusterAssignment, ClusterError};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MeanShiftParams {
    /// Kernel radius; `None` uses the `quantile` of pairwise distances.
    pub bandwidth: Option<f64>,
    pub quantile: f64,
    pub max_iter: usize,
}

impl Default for MeanShiftParams {
    fn default() -> Self {
        Self {
            bandwidth: None,
            quantile: 0.3,
            max_iter: 300,
        }
    }
}

/// Linear-interpolated quantile of all pairwise distances.
pub(crate) fn pairwise_quantile(data: ArrayView2<f64>, q: f64) -> f64 {
    let n = data.nrows();
    let mut d = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            d.push(sq_dist(data.row(i), data.row(j)).sqrt());
        }
    }
    if d.is_empty() {
        return 0.0;
    }
    d.sort_by(f64::total_cmp);
    let pos = q * (d.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    d[lo] + (d[hi] - d[lo]) * (pos - lo as f64)
}

#[derive(Clone, Debug, Default)]
pub struct MeanShift(pub MeanShiftParams);

impl MeanShift {
    fn bandwidth(&self, data: ArrayView2<f64>) -> f64 {
        self.0
            .bandwidth
            .unwrap_or_else(|| pairwise_quantile(data, self.0.quantile))
    }
}

impl ClusterAlgorithm for MeanShift {
    fn name(&self) -> &'static str {
        "mean-shift"
    }

    fn needs_k(&self) -> bool {
        false
    }

    fn params(&self) -> serde_json::Value {
        serde_json::to_value(&self.0).expect("plain struct")
    }

    /// Flat-kernel mode seeking from every point. Modes within one bandwidth
    /// of a better-supported mode are merged; points go to the nearest mode.
    fn fit(&self, data: ArrayView2<f64>, _k: Option<usize>, seed: u64) -> Result<ClusterAssignment, ClusterError> {
        let n = data.nrows();
        if n == 0 {
            return Err(ClusterError::TooFewPoints { n, k: 1 });
        }
        let bw = self.bandwidth(data);
        if bw <= 0.0 {
            // all points coincide
            return Ok(ClusterAssignment::new(self.name(), &vec![0; n], self.params(), seed));
        }
        let bw2 = bw * bw;
        let stop = 1e-3 * bw;
        let mut converged = true;
        let mut modes: Vec<(Array1<f64>, usize)> = Vec::with_capacity(n);
        for start in data.rows() {
            let mut m = start.to_owned();
            let mut support = 0;
            let mut done = false;
            for _ in 0..self.0.max_iter {
                let mut sum = Array1::zeros(data.ncols());
                let mut count = 0usize;
                for x in data.rows() {
                    if sq_dist(x, m.view()) <= bw2 {
                        sum += &x;
                        count += 1;
                    }
                }
                let next = sum / count.max(1) as f64;
                let shift = sq_dist(next.view(), m.view()).sqrt();
                m = next;
                support = count;
                if shift < stop {
                    done = true;
                    break;
                }
            }
            converged &= done;
            modes.push((m, support));
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|a, b| modes[*b].1.cmp(&modes[*a].1).then(a.cmp(b)));
        let mut centers: Vec<&Array1<f64>> = Vec::new();
        for i in order {
            let m = &modes[i].0;
            if centers.iter().all(|c| sq_dist(c.view(), m.view()) > bw2) {
                centers.push(m);
            }
        }
        let raw: Vec<usize> = data
            .rows()
            .into_iter()
            .map(|x| {
                let mut best = (0, f64::INFINITY);
                for (c, m) in centers.iter().enumerate() {
                    let d = sq_dist(x, m.view());
                    if d < best.1 {
                        best = (c, d);
                    }
                }
                best.0
            })
            .collect();
        let mut a = ClusterAssignment::new(self.name(), &raw, self.params(), seed);
        if !converged {
            a.converged = false;
            return Err(ClusterError::NoConvergence { partial: Box::new(a) });
        }
        Ok(a)
    }
}
