use ndarray::{concatenate, Array1, Array2, Axis};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::layers::{edge_scatter_mean, layer_norm, mean_pool, neighbour_mean, relu};
use super::tensor::{GraphTensor, D_IN_EDGE, D_IN_NODE};
use super::EmbedError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub d_in_node: usize,
    pub d_in_edge: usize,
    pub d_hidden: usize,
    pub d_out: usize,
}

impl Dims {
    pub fn new(d_hidden: usize, d_out: usize) -> Self {
        Self {
            d_in_node: D_IN_NODE,
            d_in_edge: D_IN_EDGE,
            d_hidden,
            d_out,
        }
    }

    pub fn d_cat(&self) -> usize {
        self.d_in_node + self.d_in_edge
    }
}

impl Default for Dims {
    fn default() -> Self {
        Self::new(64, 32)
    }
}

/// Weights of the embedding model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    pub dims: Dims,
    /// d_cat × d_hidden
    pub w_self: Array2<f64>,
    /// d_cat × d_hidden
    pub w_neigh: Array2<f64>,
    pub b_sage: Array1<f64>,
    /// d_hidden × d_out
    pub w_linear: Array2<f64>,
    pub b_linear: Array1<f64>,
    pub seed: u64,
}

pub(crate) fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-a..a))
}

impl ModelParams {
    /// Xavier-uniform weights and zero biases from `seed`.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let w_self = xavier(&mut rng, dims.d_cat(), dims.d_hidden);
        let w_neigh = xavier(&mut rng, dims.d_cat(), dims.d_hidden);
        let w_linear = xavier(&mut rng, dims.d_hidden, dims.d_out);
        Self {
            dims,
            w_self,
            w_neigh,
            b_sage: Array1::zeros(dims.d_hidden),
            w_linear,
            b_linear: Array1::zeros(dims.d_out),
            seed,
        }
    }

    /// All-zero parameters of the given shape.
    pub fn zeros(dims: Dims) -> Self {
        Self {
            dims,
            w_self: Array2::zeros((dims.d_cat(), dims.d_hidden)),
            w_neigh: Array2::zeros((dims.d_cat(), dims.d_hidden)),
            b_sage: Array1::zeros(dims.d_hidden),
            w_linear: Array2::zeros((dims.d_hidden, dims.d_out)),
            b_linear: Array1::zeros(dims.d_out),
            seed: 0,
        }
    }

    pub fn is_finite(&self) -> bool {
        [&self.w_self, &self.w_neigh, &self.w_linear]
            .iter()
            .all(|w| w.iter().all(|v| v.is_finite()))
            && self.b_sage.iter().chain(self.b_linear.iter()).all(|v| v.is_finite())
    }

    fn check(&self, t: &GraphTensor) -> Result<(), EmbedError> {
        let d = self.dims;
        if t.x.ncols() != d.d_in_node || t.edge_attr.ncols() != d.d_in_edge {
            return Err(EmbedError::ShapeMismatch(format!(
                "tensor widths ({}, {}) do not match model ({}, {})",
                t.x.ncols(),
                t.edge_attr.ncols(),
                d.d_in_node,
                d.d_in_edge
            )));
        }
        if t.num_nodes() == 0 {
            return Err(EmbedError::ShapeMismatch("graph has no nodes".into()));
        }
        Ok(())
    }
}

/// Intermediate activations of one forward pass.
#[derive(Clone, Debug)]
pub(crate) struct Activations {
    /// Layer-normalized node features (before masking).
    pub x_norm: Array2<f64>,
    /// Concatenated SAGE input.
    pub x_cat: Array2<f64>,
    /// In-neighbour mean of `x_cat`.
    pub agg: Array2<f64>,
    pub h: Array2<f64>,
    pub h_relu: Array2<f64>,
    /// Node-level output of the linear layer.
    pub h_linear: Array2<f64>,
}

/// Run the layer stack. `mask` (same shape as the node features) zeroes the
/// marked normalized entries before concatenation.
pub(crate) fn forward(params: &ModelParams, t: &GraphTensor, mask: Option<&Array2<bool>>) -> Result<Activations, EmbedError> {
    params.check(t)?;
    let x_norm = layer_norm(t.x.view());
    let mut x_in = x_norm.clone();
    if let Some(mask) = mask {
        x_in.zip_mut_with(mask, |v, &m| {
            if m {
                *v = 0.0;
            }
        });
    }
    let e = edge_scatter_mean(t.edge_attr.view(), &t.edges, t.num_nodes());
    let x_cat = concatenate(Axis(1), &[x_in.view(), e.view()]).expect("row counts agree");
    let agg = neighbour_mean(x_cat.view(), &t.edges);
    let h = x_cat.dot(&params.w_self) + agg.dot(&params.w_neigh) + &params.b_sage;
    let h_relu = relu(&h);
    let h_linear = h_relu.dot(&params.w_linear) + &params.b_linear;
    Ok(Activations {
        x_norm,
        x_cat,
        agg,
        h,
        h_relu,
        h_linear,
    })
}

/// Graph-level embedding of one tensor.
pub fn embed_tensor(params: &ModelParams, t: &GraphTensor) -> Result<Array1<f64>, EmbedError> {
    let act = forward(params, t, None)?;
    let z = mean_pool(act.h_linear.view());
    if z.iter().any(|v| !v.is_finite()) {
        return Err(EmbedError::NonFinite);
    }
    Ok(z)
}

/// Embed a batch; output row g belongs to tensor g. Forward passes run in
/// parallel but each is sequential, so results do not depend on thread count.
pub fn embed_batch(params: &ModelParams, tensors: &[GraphTensor]) -> Result<Array2<f64>, EmbedError> {
    let rows: Vec<Array1<f64>> = tensors
        .par_iter()
        .map(|t| embed_tensor(params, t))
        .collect::<Result<_, _>>()?;
    let mut out = Array2::zeros((rows.len(), params.dims.d_out));
    for (i, r) in rows.into_iter().enumerate() {
        out.row_mut(i).assign(&r);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn small() -> GraphTensor {
        let x = Array2::from_shape_fn((3, D_IN_NODE), |(i, j)| ((i * 7 + j * 3) % 11) as f64 - 4.0);
        GraphTensor::new(x, vec![(0, 1), (1, 2), (2, 0)], arr2(&[[1.0, 0.0], [2.0, 0.5], [3.0, 1.0]])).unwrap()
    }

    #[test]
    fn init_is_seeded() {
        let a = ModelParams::init(Dims::default(), 7);
        let b = ModelParams::init(Dims::default(), 7);
        let c = ModelParams::init(Dims::default(), 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
        let bound = (6.0 / (19.0 + 64.0f64)).sqrt();
        assert!(a.w_self.iter().all(|v| v.abs() <= bound));
        assert_eq!(a.w_self.dim(), (19, 64));
        assert_eq!(a.w_linear.dim(), (64, 32));
    }

    #[test]
    fn zero_fixed_point() {
        let p = ModelParams::init(Dims::default(), 1);
        let t = GraphTensor::new(
            Array2::zeros((4, D_IN_NODE)),
            vec![(0, 1), (1, 2)],
            Array2::zeros((2, D_IN_EDGE)),
        )
        .unwrap();
        let act = forward(&p, &t, None).unwrap();
        for m in [&act.x_norm, &act.x_cat, &act.agg, &act.h, &act.h_relu, &act.h_linear] {
            assert!(m.iter().all(|v| *v == 0.0));
        }
        assert!(embed_tensor(&p, &t).unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn permutation_and_duplication_invariance() {
        let p = ModelParams::init(Dims::new(16, 8), 3);
        let t = small();
        let z = embed_tensor(&p, &t).unwrap();
        let zp = embed_tensor(&p, &t.permuted(&[2, 0, 1])).unwrap();
        let zd = embed_tensor(&p, &t.doubled()).unwrap();
        for i in 0..z.len() {
            assert!((z[i] - zp[i]).abs() < 1e-9);
            assert!((z[i] - zd[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn batch_rows_match_single() {
        let p = ModelParams::init(Dims::new(16, 8), 3);
        let t = small();
        let b = embed_batch(&p, &[t.clone(), t.doubled()]).unwrap();
        assert_eq!(b.dim(), (2, 8));
        assert_eq!(b.row(0), embed_tensor(&p, &t).unwrap());
    }

    #[test]
    fn width_mismatch_rejected() {
        let p = ModelParams::init(Dims::new(4, 2), 0);
        let t = GraphTensor::new(Array2::zeros((1, 3)), vec![], Array2::zeros((0, 2))).unwrap();
        assert!(matches!(embed_tensor(&p, &t), Err(EmbedError::ShapeMismatch(_))));
    }
}
