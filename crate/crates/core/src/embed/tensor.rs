use std::collections::HashMap;

use ndarray::{Array2, ArrayView2};

use super::EmbedError;
use crate::action::BehaviourGraph;
use crate::flow::FlowGraph;

/// Width of the per-node statistics block (action statistics; NFT rows are
/// zero-padded to it).
pub const NODE_STATS: usize = 15;
/// Node feature width: statistics block plus a two-way node-type one-hot.
pub const D_IN_NODE: usize = NODE_STATS + 2;
/// Edge attribute width: step order and normalized timestamp.
pub const D_IN_EDGE: usize = 2;


/// Numeric form of one flow.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphTensor {
    /// N × D_IN_NODE node features.
    pub x: Array2<f64>,
    /// Edges as (source row, target row).
    pub edges: Vec<(usize, usize)>,
    /// M × D_IN_EDGE edge attributes, row-aligned with `edges`.
    pub edge_attr: Array2<f64>,
}

impl GraphTensor {
    pub fn new(x: Array2<f64>, edges: Vec<(usize, usize)>, edge_attr: Array2<f64>) -> Result<Self, EmbedError> {
        let n = x.nrows();
        if edge_attr.nrows() != edges.len() {
            return Err(EmbedError::ShapeMismatch(format!(
                "{} edges but {} attribute rows",
                edges.len(),
                edge_attr.nrows()
            )));
        }
        if let Some(&(s, t)) = edges.iter().find(|(s, t)| *s >= n || *t >= n) {
            return Err(EmbedError::ShapeMismatch(format!("edge ({s}, {t}) out of range for {n} nodes")));
        }
        if x.iter().chain(edge_attr.iter()).any(|v| !v.is_finite()) {
            return Err(EmbedError::NonFinite);
        }
        Ok(Self { x, edges, edge_attr })
    }

    pub fn num_nodes(&self) -> usize {
        self.x.nrows()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// The 2 × M edge index.
    pub fn edge_index(&self) -> Array2<usize> {
        let mut out = Array2::zeros((2, self.edges.len()));
        for (j, (s, t)) in self.edges.iter().enumerate() {
            out[(0, j)] = *s;
            out[(1, j)] = *t;
        }
        out
    }

    /// Relabel nodes: new row `i` is old row `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        let mut inverse = vec![0; perm.len()];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let x = Array2::from_shape_fn(self.x.dim(), |(i, j)| self.x[(perm[i], j)]);
        let edges = self.edges.iter().map(|&(s, t)| (inverse[s], inverse[t])).collect();
        Self {
            x,
            edges,
            edge_attr: self.edge_attr.clone(),
        }
    }

    /// Disjoint union of the graph with a copy of itself.
    pub fn doubled(&self) -> Self {
        let n = self.num_nodes();
        let x = ndarray::concatenate(ndarray::Axis(0), &[self.x.view(), self.x.view()]).expect("same widths");
        let edge_attr = ndarray::concatenate(ndarray::Axis(0), &[self.edge_attr.view(), self.edge_attr.view()])
            .expect("same widths");
        let edges = self
            .edges
            .iter()
            .copied()
            .chain(self.edges.iter().map(|&(s, t)| (s + n, t + n)))
            .collect();
        Self { x, edges, edge_attr }
    }

    /// Copy with the listed edges removed.
    pub fn without_edges(&self, keep: &[bool]) -> Self {
        let rows: Vec<usize> = (0..self.num_edges()).filter(|&j| keep[j]).collect();
        let edge_attr = self.edge_attr.select(ndarray::Axis(0), &rows);
        let edges = rows.iter().map(|&j| self.edges[j]).collect();
        Self {
            x: self.x.clone(),
            edges,
            edge_attr,
        }
    }
}

/// Scaling applied to action statistics before they enter the model.
///
/// Call counts are log-compressed and timestamps become their position in
/// the graph's time span (0 at the first step, 1 at the last), so no single
/// column dwarfs the others under layer norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureScaling {
    pub start: u64,
    /// Seconds from first to last step; at least 1.
    pub span: u64,
}

impl FeatureScaling {
    pub fn for_graph(bg: &BehaviourGraph) -> Self {
        let (start, end) = bg.time_span().unwrap_or((0, 0));
        Self {
            start,
            span: (end - start).max(1),
        }
    }

    fn position(&self, ts: f64) -> f64 {
        (ts - self.start as f64) / self.span as f64
    }

    pub fn action_row(&self, stats: [f64; NODE_STATS]) -> [f64; NODE_STATS] {
        let mut out = stats;
        for v in &mut out[0..4] {
            *v = v.ln_1p();
        }
        out[13] = self.position(stats[13]);
        out[14] = self.position(stats[14]);
        out
    }
}

/// Build the model input for an extended flow. The user node and its entry
/// edge are dropped; rows are actions (sorted by id) then NFTs (sorted by key).
pub fn to_graph_tensor(bg: &BehaviourGraph, flow: &FlowGraph, scaling: &FeatureScaling) -> Result<GraphTensor, EmbedError> {
    if !flow.extended {
        return Err(EmbedError::IneligibleFlow(format!("{}: flow is not extended", flow.address)));
    }
    if flow.actions.is_empty() {
        return Err(EmbedError::IneligibleFlow(format!("{}: flow has no actions", flow.address)));
    }

    let n = flow.actions.len() + flow.nfts.len();
    let mut x = Array2::zeros((n, D_IN_NODE));
    let mut row_of_action = HashMap::new();
    for (i, id) in flow.actions.iter().enumerate() {
        let def = bg
            .action(id)
            .ok_or_else(|| EmbedError::IneligibleFlow(format!("{}: unknown action {id}", flow.address)))?;
        for (j, v) in scaling.action_row(def.stats.as_array()).into_iter().enumerate() {
            x[(i, j)] = v;
        }
        x[(i, NODE_STATS)] = 1.0;
        row_of_action.insert(id, i);
    }
    let multiple: HashMap<_, _> = bg.nfts().iter().map(|n| (&n.key, n.is_multiple)).collect();
    let mut row_of_nft = HashMap::new();
    for (k, key) in flow.nfts.iter().enumerate() {
        let i = flow.actions.len() + k;
        x[(i, 0)] = if multiple.get(key).copied().unwrap_or(false) { 1.0 } else { 0.0 };
        x[(i, NODE_STATS + 1)] = 1.0;
        row_of_nft.insert(key, i);
    }

    let mut edges = Vec::new();
    let mut raw = Vec::new();
    for e in &flow.next_step {
        if let Some(src) = &e.source {
            edges.push((row_of_action[src], row_of_action[&e.target]));
            raw.push((e.order as f64, e.timestamp as f64));
        }
    }
    for e in &flow.used_by {
        edges.push((row_of_nft[&e.nft], row_of_action[&e.action]));
        raw.push((e.order as f64, e.timestamp as f64));
    }
    let t_min = raw.iter().map(|r| r.1).fold(f64::INFINITY, f64::min);
    let t_max = raw.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let span = t_max - t_min;
    let mut edge_attr = Array2::zeros((raw.len(), D_IN_EDGE));
    for (j, (order, ts)) in raw.into_iter().enumerate() {
        edge_attr[(j, 0)] = order;
        edge_attr[(j, 1)] = if span > 0.0 { (ts - t_min) / span } else { 0.0 };
    }
    GraphTensor::new(x, edges, edge_attr)
}

/// Convenience for tests and tools: a tensor from plain rows.
pub fn tensor_from_rows(x: ArrayView2<f64>, edges: &[(usize, usize)], edge_attr: ArrayView2<f64>) -> Result<GraphTensor, EmbedError> {
    GraphTensor::new(x.to_owned(), edges.to_vec(), edge_attr.to_owned())
}
