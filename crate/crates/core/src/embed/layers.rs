//! Stateless building blocks of the embedding model.

use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::EmbedError;

pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Per-row standardization `(x − mean) / sqrt(var + ε)` with population
/// variance and no affine parameters.
pub fn layer_norm(x: ArrayView2<f64>) -> Array2<f64> {
    let mut out = x.to_owned();
    let d = x.ncols() as f64;
    for mut row in out.rows_mut() {
        let mean = row.sum() / d;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / d;
        let denom = (var + LAYER_NORM_EPS).sqrt();
        row.mapv_inplace(|v| (v - mean) / denom);
    }
    out
}

/// Mean of edge attribute rows grouped by source node; nodes without
/// outgoing edges get zero rows.
pub fn edge_scatter_mean(edge_attr: ArrayView2<f64>, edges: &[(usize, usize)], n: usize) -> Array2<f64> {
    let mut out = Array2::zeros((n, edge_attr.ncols()));
    let mut count = vec![0usize; n];
    for (j, &(src, _)) in edges.iter().enumerate() {
        let mut row = out.row_mut(src);
        row += &edge_attr.row(j);
        count[src] += 1;
    }
    for (i, c) in count.into_iter().enumerate() {
        if c > 0 {
            out.row_mut(i).mapv_inplace(|v| v / c as f64);
        }
    }
    out
}

/// Mean over in-neighbours (sources of edges pointing at each node).
pub fn neighbour_mean(x: ArrayView2<f64>, edges: &[(usize, usize)]) -> Array2<f64> {
    let n = x.nrows();
    let mut out = Array2::zeros(x.dim());
    let mut indeg = vec![0usize; n];
    for &(src, dst) in edges {
        let mut row = out.row_mut(dst);
        row += &x.row(src);
        indeg[dst] += 1;
    }
    for (i, c) in indeg.into_iter().enumerate() {
        if c > 0 {
            out.row_mut(i).mapv_inplace(|v| v / c as f64);
        }
    }
    out
}

/// Mean-aggregating SAGE convolution:
/// `H[v] = x_v · W_self + mean_{u→v} x_u · W_neigh + b`.
pub fn sage_forward(
    x: ArrayView2<f64>,
    edges: &[(usize, usize)],
    w_self: ArrayView2<f64>,
    w_neigh: ArrayView2<f64>,
    bias: &Array1<f64>,
) -> Result<Array2<f64>, EmbedError> {
    if w_self.nrows() != x.ncols() || w_neigh.dim() != w_self.dim() || bias.len() != w_self.ncols() {
        return Err(EmbedError::ShapeMismatch(format!(
            "input width {}, W_self {:?}, W_neigh {:?}, bias {}",
            x.ncols(),
            w_self.dim(),
            w_neigh.dim(),
            bias.len()
        )));
    }
    let agg = neighbour_mean(x, edges);
    Ok(x.dot(&w_self) + agg.dot(&w_neigh) + bias)
}

pub fn relu(h: &Array2<f64>) -> Array2<f64> {
    h.mapv(|v| v.max(0.0))
}

/// Column means over rows (single-graph global mean pool).
pub fn mean_pool(h: ArrayView2<f64>) -> Array1<f64> {
    if h.nrows() == 0 {
        return Array1::zeros(h.ncols());
    }
    h.sum_axis(Axis(0)) / h.nrows() as f64
}
