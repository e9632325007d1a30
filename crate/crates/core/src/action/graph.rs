use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::catalogue::{ActionDef, ActionId, ActionStep, TokenStep};
use super::ActionError;
use crate::error::StoreError;
use crate::lineio;
use crate::sequence::NftKey;

pub const BGRAPH_FORMAT: &str = "chainflow-bgraph/1";
const NODES_FILE: &str = "nodes.jsonl";
const EDGES_FILE: &str = "edges.jsonl";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NftNode {
    pub key: NftKey,
    pub is_multiple: bool,
}

/// Progression edge. `source` is `None` for the entry edge leaving the user
/// node at order 0.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextStepEdge {
    pub address: String,
    pub order: u64,
    pub timestamp: u64,
    pub source: Option<ActionId>,
    pub target: ActionId,
    pub tx_hash: String,
    pub assets: u64,
    pub tickets: u64,
    pub packs: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UsedByEdge {
    pub nft: NftKey,
    pub action: ActionId,
    pub address: String,
    pub order: u64,
    pub timestamp: u64,
}

/// Users, actions and NFTs joined by NEXT_STEP and USED_BY edges. Edge lists
/// are sorted by `(address, order)`.
#[derive(Clone, Debug, Default)]
pub struct BehaviourGraph {
    users: Vec<String>,
    actions: Vec<ActionDef>,
    nfts: Vec<NftNode>,
    next_step: Vec<NextStepEdge>,
    used_by: Vec<UsedByEdge>,
    action_pos: HashMap<ActionId, usize>,
    next_ranges: HashMap<String, Range<usize>>,
    used_ranges: HashMap<String, Range<usize>>,
}

impl PartialEq for BehaviourGraph {
    fn eq(&self, other: &Self) -> bool {
        self.users == other.users
            && self.actions == other.actions
            && self.nfts == other.nfts
            && self.next_step == other.next_step
            && self.used_by == other.used_by
    }
}

fn ranges<T>(items: &[T], addr: impl Fn(&T) -> &str) -> HashMap<String, Range<usize>> {
    let mut out: HashMap<String, Range<usize>> = HashMap::new();
    for (i, item) in items.iter().enumerate() {
        out.entry(addr(item).to_string()).and_modify(|r| r.end = i + 1).or_insert(i..i + 1);
    }
    out
}

impl BehaviourGraph {
    fn assemble(
        users: Vec<String>,
        mut actions: Vec<ActionDef>,
        mut nfts: Vec<NftNode>,
        mut next_step: Vec<NextStepEdge>,
        mut used_by: Vec<UsedByEdge>,
    ) -> Self {
        actions.sort_by(|a, b| a.uuid.cmp(&b.uuid));
        nfts.sort_by(|a, b| a.key.cmp(&b.key));
        next_step.sort_by(|a, b| (&a.address, a.order).cmp(&(&b.address, b.order)));
        used_by.sort_by(|a, b| (&a.address, a.order, &a.nft).cmp(&(&b.address, b.order, &b.nft)));
        let action_pos = actions.iter().enumerate().map(|(i, a)| (a.uuid.clone(), i)).collect();
        let next_ranges = ranges(&next_step, |e| &e.address);
        let used_ranges = ranges(&used_by, |e| &e.address);
        Self {
            users,
            actions,
            nfts,
            next_step,
            used_by,
            action_pos,
            next_ranges,
            used_ranges,
        }
    }

    pub fn users(&self) -> &[String] {
        &self.users
    }

    pub fn actions(&self) -> &[ActionDef] {
        &self.actions
    }

    pub fn action(&self, id: &ActionId) -> Option<&ActionDef> {
        self.action_pos.get(id).map(|&i| &self.actions[i])
    }

    pub fn nfts(&self) -> &[NftNode] {
        &self.nfts
    }

    pub fn next_step_edges(&self) -> &[NextStepEdge] {
        &self.next_step
    }

    pub fn used_by_edges(&self) -> &[UsedByEdge] {
        &self.used_by
    }

    pub fn has_user(&self, addr: &str) -> bool {
        self.users.binary_search_by(|u| u.as_str().cmp(addr)).is_ok()
    }

    /// NEXT_STEP edges owned by `addr`, in order.
    pub fn next_steps_of(&self, addr: &str) -> &[NextStepEdge] {
        self.next_ranges.get(addr).map(|r| &self.next_step[r.clone()]).unwrap_or(&[])
    }

    pub fn used_by_of(&self, addr: &str) -> &[UsedByEdge] {
        self.used_ranges.get(addr).map(|r| &self.used_by[r.clone()]).unwrap_or(&[])
    }

    /// Earliest and latest timestamp over all NEXT_STEP edges.
    pub fn time_span(&self) -> Option<(u64, u64)> {
        let min = self.next_step.iter().map(|e| e.timestamp).min()?;
        let max = self.next_step.iter().map(|e| e.timestamp).max()?;
        Some((min, max))
    }
}

/// Assemble the behaviour graph from formed steps.
pub fn build_behaviour_graph(
    catalogue: &[ActionDef],
    steps: &[ActionStep],
    token_steps: &[TokenStep],
    nft_multiple: &BTreeMap<NftKey, bool>,
) -> Result<BehaviourGraph, ActionError> {
    let known: BTreeSet<&ActionId> = catalogue.iter().map(|a| &a.uuid).collect();
    let check = |id: &ActionId| {
        if known.contains(id) {
            Ok(())
        } else {
            Err(ActionError::DanglingUuid(id.clone()))
        }
    };

    let users: BTreeSet<String> = steps.iter().map(|s| s.address.clone()).collect();
    let mut next_step = Vec::with_capacity(steps.len());
    for s in steps {
        check(&s.uuid)?;
        if let Some(p) = &s.prev_uuid {
            check(p)?;
        }
        next_step.push(NextStepEdge {
            address: s.address.clone(),
            order: s.order,
            timestamp: s.timestamp,
            source: s.prev_uuid.clone(),
            target: s.uuid.clone(),
            tx_hash: s.tx_hash.clone(),
            assets: s.data.assets.len() as u64,
            tickets: s.data.tickets.len() as u64,
            packs: s.data.packs.len() as u64,
        });
    }

    let mut nft_keys = BTreeSet::new();
    let mut used_by = Vec::with_capacity(token_steps.len());
    for t in token_steps {
        check(&t.uuid)?;
        nft_keys.insert(t.nft.clone());
        used_by.push(UsedByEdge {
            nft: t.nft.clone(),
            action: t.uuid.clone(),
            address: t.address.clone(),
            order: t.order,
            timestamp: t.timestamp,
        });
    }
    let nfts = nft_keys
        .into_iter()
        .map(|key| {
            let is_multiple = nft_multiple.get(&key).copied().unwrap_or(false);
            NftNode { key, is_multiple }
        })
        .collect();

    Ok(BehaviourGraph::assemble(
        users.into_iter().collect(),
        catalogue.to_vec(),
        nfts,
        next_step,
        used_by,
    ))
}

#[derive(Serialize, Deserialize)]
struct Header {
    users: usize,
    actions: usize,
    nfts: usize,
    next_step: usize,
    used_by: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NodeLine {
    User { address: String },
    Action(ActionDef),
    Nft(NftNode),
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind")]
enum EdgeLine {
    #[serde(rename = "NEXT_STEP")]
    NextStep(NextStepEdge),
    #[serde(rename = "USED_BY")]
    UsedBy(UsedByEdge),
}

pub fn save_bgraph(bg: &BehaviourGraph, dir: &Path) -> Result<(), StoreError> {
    lineio::write_header(
        dir,
        BGRAPH_FORMAT,
        &Header {
            users: bg.users.len(),
            actions: bg.actions.len(),
            nfts: bg.nfts.len(),
            next_step: bg.next_step.len(),
            used_by: bg.used_by.len(),
        },
    )?;
    let nodes = bg
        .users
        .iter()
        .map(|u| NodeLine::User { address: u.clone() })
        .chain(bg.actions.iter().cloned().map(NodeLine::Action))
        .chain(bg.nfts.iter().cloned().map(NodeLine::Nft));
    lineio::write_lines(&dir.join(NODES_FILE), nodes)?;
    let edges = bg
        .next_step
        .iter()
        .cloned()
        .map(EdgeLine::NextStep)
        .chain(bg.used_by.iter().cloned().map(EdgeLine::UsedBy));
    lineio::write_lines(&dir.join(EDGES_FILE), edges)?;
    Ok(())
}

pub fn load_bgraph(dir: &Path) -> Result<BehaviourGraph, StoreError> {
    let header: Header = lineio::read_header(dir, BGRAPH_FORMAT)?;
    let mut users = Vec::new();
    let mut actions = Vec::new();
    let mut nfts = Vec::new();
    for n in lineio::read_lines::<NodeLine>(&dir.join(NODES_FILE))? {
        match n {
            NodeLine::User { address } => users.push(address),
            NodeLine::Action(a) => actions.push(a),
            NodeLine::Nft(n) => nfts.push(n),
        }
    }
    let mut next_step = Vec::new();
    let mut used_by = Vec::new();
    for e in lineio::read_lines::<EdgeLine>(&dir.join(EDGES_FILE))? {
        match e {
            EdgeLine::NextStep(e) => next_step.push(e),
            EdgeLine::UsedBy(e) => used_by.push(e),
        }
    }
    let declared = (header.users, header.actions, header.nfts, header.next_step, header.used_by);
    let found = (users.len(), actions.len(), nfts.len(), next_step.len(), used_by.len());
    if declared != found {
        return Err(StoreError::Corrupt(format!(
            "header declares {declared:?} (users, actions, nfts, next_step, used_by), found {found:?}"
        )));
    }
    users.sort();
    Ok(BehaviourGraph::assemble(users, actions, nfts, next_step, used_by))
}
