//! Self-supervised training by masked node-feature reconstruction.
//!
//! A fixed random subset of normalized node-feature entries is zeroed at the
//! input and reconstructed from the node-level output through a linear
//! decoder head. The head is discarded after training. Optimization is
//! full-batch gradient descent with hand-derived gradients.

use ndarray::{Array1, Array2, Axis};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::model::{embed_tensor, forward, xavier, Dims, ModelParams};
use super::tensor::GraphTensor;
use super::EmbedError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    /// Fraction of node-feature entries hidden from the encoder.
    pub mask_rate: f64,
    /// Edge drop probability used to build validation copies.
    pub edge_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            lr: 0.05,
            mask_rate: 0.15,
            edge_dropout: 0.2,
        }
    }
}

/// Linear decoder mapping node outputs back to node features.
#[derive(Clone, Debug, PartialEq)]
pub struct ReconstructionHead {
    /// d_out × d_in_node
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl ReconstructionHead {
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_dec0);
        Self {
            w: xavier(&mut rng, dims.d_out, dims.d_in_node),
            b: Array1::zeros(dims.d_in_node),
        }
    }
}

/// Gradient of the objective, one field per trainable block.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub w_self: Array2<f64>,
    pub w_neigh: Array2<f64>,
    pub b_sage: Array1<f64>,
    pub w_linear: Array2<f64>,
    pub b_linear: Array1<f64>,
    pub w_dec: Array2<f64>,
    pub b_dec: Array1<f64>,
}

impl Gradients {
    fn zeros(p: &ModelParams, head: &ReconstructionHead) -> Self {
        Self {
            w_self: Array2::zeros(p.w_self.dim()),
            w_neigh: Array2::zeros(p.w_neigh.dim()),
            b_sage: Array1::zeros(p.b_sage.len()),
            w_linear: Array2::zeros(p.w_linear.dim()),
            b_linear: Array1::zeros(p.b_linear.len()),
            w_dec: Array2::zeros(head.w.dim()),
            b_dec: Array1::zeros(head.b.len()),
        }
    }

    fn add(&mut self, o: &Gradients) {
        self.w_self += &o.w_self;
        self.w_neigh += &o.w_neigh;
        self.b_sage += &o.b_sage;
        self.w_linear += &o.w_linear;
        self.b_linear += &o.b_linear;
        self.w_dec += &o.w_dec;
        self.b_dec += &o.b_dec;
    }

    /// Flat views in [`ParamBlock::ALL`] order.
    pub fn block(&self, b: ParamBlock) -> &[f64] {
        let s = match b {
            ParamBlock::WSelf => self.w_self.as_slice(),
            ParamBlock::WNeigh => self.w_neigh.as_slice(),
            ParamBlock::BSage => self.b_sage.as_slice(),
            ParamBlock::WLinear => self.w_linear.as_slice(),
            ParamBlock::BLinear => self.b_linear.as_slice(),
            ParamBlock::WDec => self.w_dec.as_slice(),
            ParamBlock::BDec => self.b_dec.as_slice(),
        };
        s.expect("standard layout")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ParamBlock {
    WSelf,
    WNeigh,
    BSage,
    WLinear,
    BLinear,
    WDec,
    BDec,
}

impl ParamBlock {
    pub const ALL: [ParamBlock; 7] = [
        ParamBlock::WSelf,
        ParamBlock::WNeigh,
        ParamBlock::BSage,
        ParamBlock::WLinear,
        ParamBlock::BLinear,
        ParamBlock::WDec,
        ParamBlock::BDec,
    ];
}

/// Mutable flat view of one parameter block.
pub fn block_mut<'a>(p: &'a mut ModelParams, head: &'a mut ReconstructionHead, b: ParamBlock) -> &'a mut [f64] {
    let s = match b {
        ParamBlock::WSelf => p.w_self.as_slice_mut(),
        ParamBlock::WNeigh => p.w_neigh.as_slice_mut(),
        ParamBlock::BSage => p.b_sage.as_slice_mut(),
        ParamBlock::WLinear => p.w_linear.as_slice_mut(),
        ParamBlock::BLinear => p.b_linear.as_slice_mut(),
        ParamBlock::WDec => head.w.as_slice_mut(),
        ParamBlock::BDec => head.b.as_slice_mut(),
    };
    s.expect("standard layout")
}

/// Reconstruction objective over a fixed set of graphs and masks.
#[derive(Clone, Debug)]
pub struct Objective {
    tensors: Vec<GraphTensor>,
    masks: Vec<Array2<bool>>,
}

fn sample_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, rate: f64) -> Array2<bool> {
    let mut m = Array2::from_shape_fn((rows, cols), |_| rng.random_bool(rate));
    if rows * cols > 0 && !m.iter().any(|v| *v) {
        let k = rng.random_range(0..rows * cols);
        m[(k / cols, k % cols)] = true;
    }
    m
}

impl Objective {
    pub fn new(tensors: Vec<GraphTensor>, mask_rate: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6d61_736b);
        let masks = tensors
            .iter()
            .map(|t| sample_mask(&mut rng, t.x.nrows(), t.x.ncols(), mask_rate))
            .collect();
        Self { tensors, masks }
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    fn one(&self, i: usize, p: &ModelParams, head: &ReconstructionHead, grad: bool) -> Result<(f64, Option<Gradients>), EmbedError> {
        let (t, mask) = (&self.tensors[i], &self.masks[i]);
        let act = forward(p, t, Some(mask))?;
        let recon = act.h_linear.dot(&head.w) + &head.b;
        let masked = mask.iter().filter(|m| **m).count() as f64;
        let scale = 1.0 / (masked * self.len() as f64);

        let mut diff = recon - &act.x_norm;
        diff.zip_mut_with(mask, |d, &m| {
            if !m {
                *d = 0.0;
            }
        });
        let loss = diff.iter().map(|d| d * d).sum::<f64>() * scale;
        if !grad {
            return Ok((loss, None));
        }

        let d_recon = diff * (2.0 * scale);
        let w_dec = act.h_linear.t().dot(&d_recon);
        let b_dec = d_recon.sum_axis(Axis(0));
        let d_lin = d_recon.dot(&head.w.t());
        let w_linear = act.h_relu.t().dot(&d_lin);
        let b_linear = d_lin.sum_axis(Axis(0));
        let mut d_h = d_lin.dot(&p.w_linear.t());
        d_h.zip_mut_with(&act.h, |g, &h| {
            if h <= 0.0 {
                *g = 0.0;
            }
        });
        let w_self = act.x_cat.t().dot(&d_h);
        let w_neigh = act.agg.t().dot(&d_h);
        let b_sage = d_h.sum_axis(Axis(0));
        Ok((
            loss,
            Some(Gradients {
                w_self,
                w_neigh,
                b_sage,
                w_linear,
                b_linear,
                w_dec,
                b_dec,
            }),
        ))
    }

    pub fn loss(&self, p: &ModelParams, head: &ReconstructionHead) -> Result<f64, EmbedError> {
        let parts: Vec<f64> = (0..self.len())
            .into_par_iter()
            .map(|i| self.one(i, p, head, false).map(|r| r.0))
            .collect::<Result<_, _>>()?;
        Ok(parts.iter().sum())
    }

    /// Loss and gradient. Per-graph terms are computed in parallel and summed
    /// in index order.
    pub fn gradient(&self, p: &ModelParams, head: &ReconstructionHead) -> Result<(f64, Gradients), EmbedError> {
        let parts: Vec<(f64, Option<Gradients>)> = (0..self.len())
            .into_par_iter()
            .map(|i| self.one(i, p, head, true))
            .collect::<Result<_, _>>()?;
        let mut total = Gradients::zeros(p, head);
        let mut loss = 0.0;
        for (l, g) in parts {
            loss += l;
            total.add(&g.expect("requested"));
        }
        Ok((loss, total))
    }
}

fn descend(p: &mut ModelParams, head: &mut ReconstructionHead, g: &Gradients, lr: f64) {
    p.w_self.scaled_add(-lr, &g.w_self);
    p.w_neigh.scaled_add(-lr, &g.w_neigh);
    p.b_sage.scaled_add(-lr, &g.b_sage);
    p.w_linear.scaled_add(-lr, &g.w_linear);
    p.b_linear.scaled_add(-lr, &g.b_linear);
    head.w.scaled_add(-lr, &g.w_dec);
    head.b.scaled_add(-lr, &g.b_dec);
}

fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    match (na > 0.0, nb > 0.0) {
        (true, true) => a.dot(b) / (na * nb),
        (false, false) => 1.0,
        _ => 0.0,
    }
}

/// Mean cosine similarity between each graph's embedding and the embedding
/// of its perturbed copy.
pub fn embedding_similarity(p: &ModelParams, pairs: &[(GraphTensor, GraphTensor)]) -> Result<f64, EmbedError> {
    if pairs.is_empty() {
        return Ok(f64::NAN);
    }
    let sims: Vec<f64> = pairs
        .par_iter()
        .map(|(a, b)| Ok(cosine(&embed_tensor(p, a)?, &embed_tensor(p, b)?)))
        .collect::<Result<_, EmbedError>>()?;
    Ok(sims.iter().sum::<f64>() / sims.len() as f64)
}

/// Copies of `tensors` with each edge dropped independently.
pub fn edge_dropout_pairs(tensors: &[GraphTensor], rate: f64, seed: u64) -> Vec<(GraphTensor, GraphTensor)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6472_6f70);
    tensors
        .iter()
        .map(|t| {
            let keep: Vec<bool> = (0..t.num_edges()).map(|_| !rng.random_bool(rate)).collect();
            (t.clone(), t.without_edges(&keep))
        })
        .collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct TrainReport {
    /// Objective value at the start of each epoch, followed by the final value.
    pub losses: Vec<f64>,
    /// Validation similarity after each epoch.
    pub validation: Vec<f64>,
}

/// Train encoder parameters on `train_set`, reporting similarity on `test_set`.
pub fn train(
    train_set: &[GraphTensor],
    test_set: &[GraphTensor],
    dims: Dims,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(ModelParams, TrainReport), EmbedError> {
    if train_set.is_empty() {
        return Err(EmbedError::EmptyTrainingSet);
    }
    let mut params = ModelParams::init(dims, seed);
    let mut head = ReconstructionHead::init(dims, seed);
    let objective = Objective::new(train_set.to_vec(), cfg.mask_rate, seed);
    let pairs = edge_dropout_pairs(test_set, cfg.edge_dropout, seed);
    let mut report = TrainReport::default();

    for epoch in 0..cfg.epochs {
        let (loss, grad) = objective.gradient(&params, &head)?;
        if !loss.is_finite() {
            return Err(EmbedError::Divergence { epoch, loss });
        }
        report.losses.push(loss);
        descend(&mut params, &mut head, &grad, cfg.lr);
        if !params.is_finite() {
            return Err(EmbedError::Divergence { epoch, loss: f64::NAN });
        }
        report.validation.push(embedding_similarity(&params, &pairs)?);
    }
    let final_loss = objective.loss(&params, &head)?;
    if !final_loss.is_finite() {
        return Err(EmbedError::Divergence {
            epoch: cfg.epochs,
            loss: final_loss,
        });
    }
    report.losses.push(final_loss);
    Ok((params, report))
}

/// Seeded split: `floor(fraction · n)` addresses train, the rest test.
pub fn split_train_test(addresses: &[String], fraction: f64, seed: u64) -> (Vec<String>, Vec<String>) {
    use rand::seq::SliceRandom;
    let mut all = addresses.to_vec();
    all.sort();
    all.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    // guard against products like 0.7 · 30 = 20.999…
    let n_train = ((fraction * all.len() as f64) + 1e-9).floor() as usize;
    let test = all.split_off(n_train.min(all.len()));
    (all, test)
}
