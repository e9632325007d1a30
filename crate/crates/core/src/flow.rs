//! Per-user flows, the eligibility filter, and per-cluster general flows.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionId, BehaviourGraph, NextStepEdge, UsedByEdge};
use crate::ingest::BURN_ADDRESS;
use crate::sequence::NftKey;

/// Minimum number of distinct actions for a user to be analysed.
pub const DEFAULT_MIN_UNIQUE_ACTIONS: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FlowError {
    #[error("address {0} is not a user in the behaviour graph")]
    UnknownAddress(String),
    #[error("cannot build a general flow from an empty cluster")]
    EmptyCluster,
}

/// The subgraph of one user: their actions, optionally their NFTs, and every
/// edge carrying their address.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlowGraph {
    pub address: String,
    pub extended: bool,
    /// Distinct actions, sorted.
    pub actions: Vec<ActionId>,
    /// Distinct NFTs, sorted. Empty unless extended.
    pub nfts: Vec<NftKey>,
    pub next_step: Vec<NextStepEdge>,
    pub used_by: Vec<UsedByEdge>,
}

impl FlowGraph {
    pub fn step_count(&self) -> usize {
        self.next_step.len()
    }

    pub fn edge_count(&self) -> usize {
        self.next_step.len() + self.used_by.len()
    }

    /// Action at each step position.
    pub fn sequence(&self) -> impl Iterator<Item = &ActionId> {
        self.next_step.iter().map(|e| &e.target)
    }
}

pub fn extract_flow(bg: &BehaviourGraph, addr: &str, extended: bool) -> Result<FlowGraph, FlowError> {
    if !bg.has_user(addr) {
        return Err(FlowError::UnknownAddress(addr.to_string()));
    }
    let next_step = bg.next_steps_of(addr).to_vec();
    let used_by = if extended { bg.used_by_of(addr).to_vec() } else { Vec::new() };
    let actions: BTreeSet<ActionId> = next_step
        .iter()
        .map(|e| e.target.clone())
        .chain(used_by.iter().map(|e| e.action.clone()))
        .collect();
    let nfts: BTreeSet<NftKey> = used_by.iter().map(|e| e.nft.clone()).collect();
    Ok(FlowGraph {
        address: addr.to_string(),
        extended,
        actions: actions.into_iter().collect(),
        nfts: nfts.into_iter().collect(),
        next_step,
        used_by,
    })
}

/// Users with at least `min_unique` distinct actions, burn address excluded,
/// sorted ascending.
pub fn eligible_users(bg: &BehaviourGraph, min_unique: usize) -> Vec<String> {
    bg.users()
        .iter()
        .filter(|u| u.as_str() != BURN_ADDRESS)
        .filter(|u| {
            let distinct: BTreeSet<&ActionId> = bg.next_steps_of(u).iter().map(|e| &e.target).collect();
            distinct.len() >= min_unique
        })
        .cloned()
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VirtualStepEdge {
    pub cluster_id: usize,
    pub order: u64,
    /// `None` for the edge leaving the virtual user node.
    pub source: Option<ActionId>,
    pub target: ActionId,
}

/// Mode-action flow summarizing a cluster.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneralFlow {
    pub cluster_id: usize,
    /// Mode action per step position; length is the rounded mean step count.
    pub steps: Vec<ActionId>,
    pub virtual_edges: Vec<VirtualStepEdge>,
    /// Distinct NFTs with a USED_BY relation to each selected action, over
    /// the cluster's users.
    pub nft_usage: BTreeMap<ActionId, BTreeSet<NftKey>>,
}

impl GeneralFlow {
    /// Distinct action nodes, in first-visit order.
    pub fn nodes(&self) -> Vec<&ActionId> {
        let mut seen = BTreeSet::new();
        self.steps.iter().filter(|a| seen.insert(*a)).collect()
    }

    /// Distinct NFT count per distinct node, in node order.
    pub fn usage_counts(&self) -> Vec<usize> {
        self.nodes()
            .into_iter()
            .map(|a| self.nft_usage.get(a).map_or(0, BTreeSet::len))
            .collect()
    }

    pub fn nfts(&self) -> BTreeSet<&NftKey> {
        self.nft_usage.values().flatten().collect()
    }
}

/// Round half up; inputs are non-negative means.
fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

pub fn general_flow(flows: &[FlowGraph], cluster_id: usize) -> Result<GeneralFlow, FlowError> {
    if flows.is_empty() {
        return Err(FlowError::EmptyCluster);
    }
    let total: usize = flows.iter().map(FlowGraph::step_count).sum();
    let len = round_half_up(total as f64 / flows.len() as f64);

    let mut steps = Vec::with_capacity(len);
    for j in 0..len {
        let mut tally: BTreeMap<&ActionId, usize> = BTreeMap::new();
        for f in flows {
            if let Some(e) = f.next_step.get(j) {
                *tally.entry(&e.target).or_default() += 1;
            }
        }
        // BTreeMap iterates ascending, so strict `>` keeps the smallest id on ties.
        let mut best: Option<(&ActionId, usize)> = None;
        for (id, n) in tally {
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((id, n));
            }
        }
        if let Some((id, _)) = best {
            steps.push(id.clone());
        }
    }

    let virtual_edges = steps
        .iter()
        .enumerate()
        .map(|(j, target)| VirtualStepEdge {
            cluster_id,
            order: j as u64,
            source: j.checked_sub(1).map(|p| steps[p].clone()),
            target: target.clone(),
        })
        .collect();

    let selected: BTreeSet<&ActionId> = steps.iter().collect();
    let mut nft_usage: BTreeMap<ActionId, BTreeSet<NftKey>> =
        selected.iter().map(|a| ((*a).clone(), BTreeSet::new())).collect();
    for f in flows {
        for e in &f.used_by {
            if let Some(set) = nft_usage.get_mut(&e.action) {
                set.insert(e.nft.clone());
            }
        }
    }

    Ok(GeneralFlow {
        cluster_id,
        steps,
        virtual_edges,
        nft_usage,
    })
}
