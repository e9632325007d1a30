use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::pattern::{reduce_events, PatternKind};
use super::{ActionConfig, ActionError};
use crate::ingest::PropertyGraph;
use crate::sequence::{sequences_for_address, NftKey, Origin, StepData};

/// Content-derived action identifier in UUID text layout.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionId(pub String);

impl ActionId {
    /// Hash of the canonical event list. Equal lists give equal ids.
    pub fn for_events<S: AsRef<str>>(events: &[S]) -> Self {
        let mut h = Sha256::new();
        for e in events {
            h.update(e.as_ref().as_bytes());
            h.update([0x1f]);
        }
        let d = hex::encode(&h.finalize()[..16]);
        Self(format!("{}-{}-{}-{}-{}", &d[0..8], &d[8..12], &d[12..16], &d[16..20], &d[20..32]))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionType {
    Primary,
    Secondary,
    Both,
}

impl ActionType {
    fn of(origin: Origin) -> Self {
        match origin {
            Origin::FromAddress => Self::Primary,
            Origin::PropertyMatch => Self::Secondary,
        }
    }

    fn merge(self, other: Self) -> Self {
        if self == other {
            self
        } else {
            Self::Both
        }
    }
}

/// Which sequence kinds to form actions from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KindSelection {
    Primary,
    Secondary,
    /// Both kinds interleaved in time order under one step counter.
    All,
}

impl KindSelection {
    fn admits(self, origin: Origin) -> bool {
        match self {
            Self::Primary => origin == Origin::FromAddress,
            Self::Secondary => origin == Origin::PropertyMatch,
            Self::All => true,
        }
    }
}

/// Per-action statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionStats {
    pub total_count: u64,
    pub min_call: f64,
    pub max_call: f64,
    pub mean_call: f64,
    pub min_assets: f64,
    pub max_assets: f64,
    pub mean_assets: f64,
    pub min_tickets: f64,
    pub max_tickets: f64,
    pub mean_tickets: f64,
    pub min_packs: f64,
    pub max_packs: f64,
    pub mean_packs: f64,
    pub min_timestamp: u64,
    pub max_timestamp: u64,
}

impl ActionStats {
    /// The 15 statistics in fixed order.
    pub fn as_array(&self) -> [f64; 15] {
        [
            self.total_count as f64,
            self.min_call,
            self.max_call,
            self.mean_call,
            self.min_assets,
            self.max_assets,
            self.mean_assets,
            self.min_tickets,
            self.max_tickets,
            self.mean_tickets,
            self.min_packs,
            self.max_packs,
            self.mean_packs,
            self.min_timestamp as f64,
            self.max_timestamp as f64,
        ]
    }
}

#[derive(Clone, Debug, Default)]
struct MinMaxSum {
    min: u64,
    max: u64,
    sum: u64,
}

impl MinMaxSum {
    fn push(&mut self, v: u64, first: bool) {
        if first {
            self.min = v;
            self.max = v;
        } else {
            self.min = self.min.min(v);
            self.max = self.max.max(v);
        }
        self.sum += v;
    }

    fn finish(&self, n: u64) -> (f64, f64, f64) {
        (self.min as f64, self.max as f64, self.sum as f64 / n as f64)
    }
}

/// Incremental accumulator behind [`ActionStats`]. Every component is an
/// integer min/max/sum, so accumulation order does not change the result.
#[derive(Clone, Debug, Default)]
pub(crate) struct StatsAccumulator {
    total: u64,
    calls: BTreeMap<String, u64>,
    assets: MinMaxSum,
    tickets: MinMaxSum,
    packs: MinMaxSum,
    min_ts: u64,
    max_ts: u64,
}

impl StatsAccumulator {
    pub(crate) fn push(&mut self, address: &str, data: &StepData, timestamp: u64) {
        let first = self.total == 0;
        self.total += 1;
        *self.calls.entry(address.to_string()).or_default() += 1;
        self.assets.push(data.assets.len() as u64, first);
        self.tickets.push(data.tickets.len() as u64, first);
        self.packs.push(data.packs.len() as u64, first);
        if first {
            self.min_ts = timestamp;
            self.max_ts = timestamp;
        } else {
            self.min_ts = self.min_ts.min(timestamp);
            self.max_ts = self.max_ts.max(timestamp);
        }
    }

    pub(crate) fn finish(&self) -> ActionStats {
        let calls: Vec<u64> = self.calls.values().copied().collect();
        let n = self.total;
        let (min_assets, max_assets, mean_assets) = self.assets.finish(n);
        let (min_tickets, max_tickets, mean_tickets) = self.tickets.finish(n);
        let (min_packs, max_packs, mean_packs) = self.packs.finish(n);
        ActionStats {
            total_count: n,
            min_call: calls.iter().copied().min().unwrap_or(0) as f64,
            max_call: calls.iter().copied().max().unwrap_or(0) as f64,
            mean_call: n as f64 / calls.len().max(1) as f64,
            min_assets,
            max_assets,
            mean_assets,
            min_tickets,
            max_tickets,
            mean_tickets,
            min_packs,
            max_packs,
            mean_packs,
            min_timestamp: self.min_ts,
            max_timestamp: self.max_ts,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActionDef {
    pub uuid: ActionId,
    pub action_type: ActionType,
    pub events: Vec<String>,
    pub stats: ActionStats,
}

/// One timestamped performance of an action by an address.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionStep {
    pub order: u64,
    pub uuid: ActionId,
    pub prev_uuid: Option<ActionId>,
    pub address: String,
    pub origin: Origin,
    pub pattern: PatternKind,
    pub tx_hash: String,
    pub timestamp: u64,
    pub block_number: u64,
    pub tx_index: u64,
    pub data: StepData,
}

/// One use of an NFT by an action step.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStep {
    pub nft: NftKey,
    pub uuid: ActionId,
    pub address: String,
    /// Per-address counter over this address's NFT uses.
    pub order: u64,
    pub tx_hash: String,
    pub timestamp: u64,
}

/// Output of action formation: catalogue sorted by uuid, steps sorted by
/// `(address, order)`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Formation {
    pub catalogue: Vec<ActionDef>,
    pub steps: Vec<ActionStep>,
}

struct Entry {
    action_type: ActionType,
    events: Vec<String>,
    stats: StatsAccumulator,
}

/// Find-or-create action formation over the event sequences of `addresses`.
///
/// Each sequence entry is classified, reduced to its canonical event list and
/// looked up in the growing catalogue; exactly one step is recorded per
/// entry, chained to the previous step of the same address.
pub fn form_actions(
    g: &PropertyGraph,
    kinds: KindSelection,
    addresses: &[String],
    cfg: &ActionConfig,
) -> Result<Formation, ActionError> {
    let mut catalogue: HashMap<ActionId, Entry> = HashMap::new();
    let mut steps = Vec::new();
    let unique: BTreeSet<&String> = addresses.iter().collect();

    for addr in unique {
        let seqs = sequences_for_address(g, addr, &cfg.sequence);
        let mut order = 0u64;
        let mut prev: Option<ActionId> = None;
        for entry in seqs.entries.iter().filter(|e| kinds.admits(e.origin)) {
            if entry.events.is_empty() {
                continue;
            }
            let names = entry.event_names();
            let (pattern, events) = reduce_events(&names, cfg.repeat_threshold)?;
            let uuid = ActionId::for_events(&events);
            let kind = ActionType::of(entry.origin);
            let slot = catalogue.entry(uuid.clone()).or_insert_with(|| Entry {
                action_type: kind,
                events,
                stats: StatsAccumulator::default(),
            });
            slot.action_type = slot.action_type.merge(kind);
            slot.stats.push(addr, &entry.data, entry.timestamp);

            steps.push(ActionStep {
                order,
                uuid: uuid.clone(),
                prev_uuid: prev.replace(uuid),
                address: addr.clone(),
                origin: entry.origin,
                pattern,
                tx_hash: entry.tx_hash.clone(),
                timestamp: entry.timestamp,
                block_number: entry.block_number,
                tx_index: entry.tx_index,
                data: entry.data.clone(),
            });
            order += 1;
        }
    }

    let mut catalogue: Vec<ActionDef> = catalogue
        .into_iter()
        .map(|(uuid, e)| ActionDef {
            uuid,
            action_type: e.action_type,
            events: e.events,
            stats: e.stats.finish(),
        })
        .collect();
    catalogue.sort_by(|a, b| a.uuid.cmp(&b.uuid));
    Ok(Formation { catalogue, steps })
}

/// Derive NFT usage steps from action steps: one per (step, NFT) pair, with a
/// per-address order counter in step order.
pub fn token_steps(steps: &[ActionStep]) -> Vec<TokenStep> {
    let mut by_addr: BTreeMap<&str, Vec<&ActionStep>> = BTreeMap::new();
    for s in steps {
        by_addr.entry(s.address.as_str()).or_default().push(s);
    }
    let mut out = Vec::new();
    for (addr, mut list) in by_addr {
        list.sort_by_key(|s| s.order);
        let mut order = 0;
        for s in list {
            for nft in &s.data.nfts {
                out.push(TokenStep {
                    nft: nft.clone(),
                    uuid: s.uuid.clone(),
                    address: addr.to_string(),
                    order,
                    tx_hash: s.tx_hash.clone(),
                    timestamp: s.timestamp,
                });
                order += 1;
            }
        }
    }
    out
}

/// Recompute statistics from scratch over `steps`.
pub fn stats_from_steps<'a>(steps: impl IntoIterator<Item = &'a ActionStep>) -> BTreeMap<ActionId, ActionStats> {
    let mut acc: BTreeMap<ActionId, StatsAccumulator> = BTreeMap::new();
    for s in steps {
        acc.entry(s.uuid.clone()).or_default().push(&s.address, &s.data, s.timestamp);
    }
    acc.into_iter().map(|(k, v)| (k, v.finish())).collect()
}
