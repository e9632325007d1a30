//! Graph embeddings of extended user flows.
//!
//! The encoder is layer norm, edge-attribute mean concatenation, one
//! mean-aggregating SAGE convolution, ReLU, a linear layer and global mean
//! pooling. Parameters are either seeded Xavier draws or trained with a
//! masked-feature reconstruction objective.

mod io;
mod layers;
mod model;
mod tensor;
mod train;

use std::collections::BTreeMap;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use io::{read_embeddings, write_embeddings};
pub use layers::{edge_scatter_mean, layer_norm, mean_pool, neighbour_mean, relu, sage_forward, LAYER_NORM_EPS};
pub use model::{embed_batch, embed_tensor, Dims, ModelParams};
pub use tensor::{tensor_from_rows, to_graph_tensor, FeatureScaling, GraphTensor, D_IN_EDGE, D_IN_NODE, NODE_STATS};
pub use train::{
    block_mut, edge_dropout_pairs, embedding_similarity, split_train_test, train, Gradients, Objective, ParamBlock,
    ReconstructionHead, TrainConfig, TrainReport,
};

use crate::action::BehaviourGraph;
use crate::flow::extract_flow;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("flow cannot be embedded: {0}")]
    IneligibleFlow(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite value in embedding input or output")]
    NonFinite,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed embeddings file: {0}")]
    Parse(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbedConfig {
    pub d_hidden: usize,
    pub d_out: usize,
    /// Skip training and embed with the seeded initial parameters.
    pub untrained: bool,
    pub train_fraction: f64,
    pub train: TrainConfig,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            d_hidden: 64,
            d_out: 32,
            untrained: false,
            train_fraction: 0.7,
            train: TrainConfig::default(),
        }
    }
}

impl EmbedConfig {
    pub fn dims(&self) -> Dims {
        Dims::new(self.d_hidden, self.d_out)
    }
}

/// Embeddings for a set of users plus how they were produced.
#[derive(Clone, Debug)]
pub struct EmbedRun {
    /// Row order of `z`.
    pub addresses: Vec<String>,
    pub z: Array2<f64>,
    pub params: ModelParams,
    pub report: Option<TrainReport>,
    pub train_set: Vec<String>,
    pub test_set: Vec<String>,
}

/// Build tensors for `users` (extended flows), split, optionally train, and
/// embed every user. Rows follow the order of `users`.
pub fn embed_users(bg: &BehaviourGraph, users: &[String], cfg: &EmbedConfig, seed: u64) -> Result<EmbedRun, EmbedError> {
    let scaling = FeatureScaling::for_graph(bg);
    let mut tensors = BTreeMap::new();
    for u in users {
        let flow = extract_flow(bg, u, true).map_err(|e| EmbedError::IneligibleFlow(e.to_string()))?;
        tensors.insert(u.clone(), to_graph_tensor(bg, &flow, &scaling)?);
    }
    let (train_set, test_set) = split_train_test(users, cfg.train_fraction, seed);
    let dims = cfg.dims();
    let (params, report) = if cfg.untrained {
        (ModelParams::init(dims, seed), None)
    } else {
        let pick = |set: &[String]| set.iter().map(|a| tensors[a].clone()).collect::<Vec<_>>();
        let (p, r) = train(&pick(&train_set), &pick(&test_set), dims, &cfg.train, seed)?;
        (p, Some(r))
    };
    let ordered: Vec<GraphTensor> = users.iter().map(|u| tensors[u].clone()).collect();
    let z = embed_batch(&params, &ordered)?;
    Ok(EmbedRun {
        addresses: users.to_vec(),
        z,
        params,
        report,
        train_set,
        test_set,
    })
}
