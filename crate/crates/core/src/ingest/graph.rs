use std::collections::{BTreeMap, BTreeSet, HashMap};

use super::record::{is_address, TxRecord};

/// Default number of SAME_VALUE links above which they are no longer stored
/// as edges and are answered from the value index instead.
pub const DEFAULT_SAME_VALUE_THRESHOLD: usize = 1_000_000;

/// Position of one event property inside the graph's transaction table.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct PropertyRef {
    pub tx: u32,
    pub event: u32,
    pub prop: u32,
}

impl PropertyRef {
    fn event_key(self) -> (u32, u32) {
        (self.tx, self.event)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeKey {
    Transaction { tx: u32 },
    Event { tx: u32, event: u32 },
    Property(PropertyRef),
    /// Hub for a canonical value carried by properties of two or more events.
    UniquePropertyPair { value: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum EdgeKind {
    Emits,
    Has,
    /// UniquePropertyPair hub → member property.
    PairMember,
    SameValue,
}

impl EdgeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EdgeKind::Emits => "EMITS",
            EdgeKind::Has => "HAS",
            EdgeKind::PairMember => "PAIR_MEMBER",
            EdgeKind::SameValue => "SAME_VALUE",
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GraphCounts {
    pub transactions: usize,
    pub events: usize,
    pub properties: usize,
    pub unique_pairs: usize,
    pub emits: usize,
    pub has: usize,
    pub pair_members: usize,
    pub same_value: usize,
}

impl GraphCounts {
    pub fn nodes(&self) -> usize {
        self.transactions + self.events + self.properties + self.unique_pairs
    }

    pub fn edges(&self) -> usize {
        self.emits + self.has + self.pair_members + self.same_value
    }
}

/// In-memory property graph of transactions, events and event properties.
///
/// Immutable once built. Transactions are held in canonical order
/// `(block_number, tx_index, tx_hash)` so equal inputs produce equal graphs
/// regardless of line order.
#[derive(Clone, Debug)]
pub struct PropertyGraph {
    txs: Vec<TxRecord>,
    same_value_threshold: usize,
    by_hash: HashMap<String, u32>,
    by_from: HashMap<String, Vec<u32>>,
    /// canonical value → every property carrying it, in canonical order
    by_value: BTreeMap<String, Vec<PropertyRef>>,
    same_value_links: usize,
    same_value_edges: Option<Vec<(PropertyRef, PropertyRef)>>,
}

impl PartialEq for PropertyGraph {
    fn eq(&self, other: &Self) -> bool {
        self.txs == other.txs && self.same_value_threshold == other.same_value_threshold
    }
}

impl Eq for PropertyGraph {}

impl Default for PropertyGraph {
    fn default() -> Self {
        Self::from_transactions(Vec::new(), DEFAULT_SAME_VALUE_THRESHOLD)
    }
}

fn pair_count(refs: &[PropertyRef]) -> usize {
    // links only join properties of different events
    let mut per_event: BTreeMap<(u32, u32), usize> = BTreeMap::new();
    for r in refs {
        *per_event.entry(r.event_key()).or_default() += 1;
    }
    let n = refs.len();
    let same_event: usize = per_event.values().map(|c| c * (c - 1) / 2).sum();
    n * (n - 1) / 2 - same_event
}

fn spans_events(refs: &[PropertyRef]) -> bool {
    refs.first()
        .is_some_and(|first| refs.iter().any(|r| r.event_key() != first.event_key()))
}

impl PropertyGraph {
    /// Build a graph from validated transactions. Input order is irrelevant.
    pub fn from_transactions(mut txs: Vec<TxRecord>, same_value_threshold: usize) -> Self {
        txs.sort_by(|a, b| a.sort_key().cmp(&b.sort_key()));

        let mut by_hash = HashMap::with_capacity(txs.len());
        let mut by_from: HashMap<String, Vec<u32>> = HashMap::new();
        let mut by_value: BTreeMap<String, Vec<PropertyRef>> = BTreeMap::new();
        for (ti, tx) in txs.iter().enumerate() {
            let ti = ti as u32;
            by_hash.insert(tx.tx_hash.clone(), ti);
            by_from.entry(tx.from_addr.clone()).or_default().push(ti);
            for (ei, ev) in tx.events.iter().enumerate() {
                for (pi, (_, value)) in ev.properties.iter().enumerate() {
                    by_value.entry(value.clone()).or_default().push(PropertyRef {
                        tx: ti,
                        event: ei as u32,
                        prop: pi as u32,
                    });
                }
            }
        }

        let same_value_links = by_value.values().map(|refs| pair_count(refs)).sum();
        let same_value_edges = (same_value_links <= same_value_threshold).then(|| {
            let mut edges = Vec::with_capacity(same_value_links);
            for refs in by_value.values() {
                for (i, a) in refs.iter().enumerate() {
                    for b in &refs[i + 1..] {
                        if a.event_key() != b.event_key() {
                            edges.push((*a, *b));
                        }
                    }
                }
            }
            edges
        });

        Self {
            txs,
            same_value_threshold,
            by_hash,
            by_from,
            by_value,
            same_value_links,
            same_value_edges,
        }
    }

    pub fn transactions(&self) -> &[TxRecord] {
        &self.txs
    }

    pub fn transaction(&self, index: u32) -> &TxRecord {
        &self.txs[index as usize]
    }

    pub fn transaction_by_hash(&self, hash: &str) -> Option<&TxRecord> {
        self.by_hash.get(hash).map(|&i| self.transaction(i))
    }

    pub fn same_value_threshold(&self) -> usize {
        self.same_value_threshold
    }

    /// Whether SAME_VALUE links are stored as edges (as opposed to lazily
    /// derived from the value index).
    pub fn same_value_materialized(&self) -> bool {
        self.same_value_edges.is_some()
    }

    /// Indices of transactions submitted by `addr`, canonical order.
    pub fn submitted_by(&self, addr: &str) -> &[u32] {
        self.by_from.get(addr).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Every property whose canonical value equals `value`.
    pub fn properties_with_value(&self, value: &str) -> &[PropertyRef] {
        self.by_value.get(value).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn property(&self, r: PropertyRef) -> (&str, &str) {
        let (k, v) = &self.txs[r.tx as usize].events[r.event as usize].properties[r.prop as usize];
        (k, v)
    }

    /// SAME_VALUE links in canonical order, from stored edges or the index.
    pub fn same_value_links(&self) -> Box<dyn Iterator<Item = (PropertyRef, PropertyRef)> + '_> {
        match &self.same_value_edges {
            Some(edges) => Box::new(edges.iter().copied()),
            None => Box::new(self.by_value.values().flat_map(|refs| {
                refs.iter().enumerate().flat_map(move |(i, a)| {
                    refs[i + 1..]
                        .iter()
                        .filter(move |b| a.event_key() != b.event_key())
                        .map(move |b| (*a, *b))
                })
            })),
        }
    }

    /// Properties linked to `r` by SAME_VALUE, excluding `r` itself.
    pub fn same_value_neighbours(&self, r: PropertyRef) -> impl Iterator<Item = PropertyRef> + '_ {
        let (_, value) = self.property(r);
        self.properties_with_value(value)
            .iter()
            .copied()
            .filter(move |o| o.event_key() != r.event_key())
    }

    /// Values shared by properties of at least two distinct events.
    pub fn shared_values(&self) -> impl Iterator<Item = (&str, &[PropertyRef])> + '_ {
        self.by_value
            .iter()
            .filter(|(_, refs)| spans_events(refs))
            .map(|(v, refs)| (v.as_str(), refs.as_slice()))
    }

    pub fn counts(&self) -> GraphCounts {
        let mut c = GraphCounts {
            transactions: self.txs.len(),
            ..GraphCounts::default()
        };
        for tx in &self.txs {
            c.events += tx.events.len();
            c.properties += tx.events.iter().map(|e| e.properties.len()).sum::<usize>();
        }
        c.emits = c.events;
        c.has = c.properties;
        for (_, refs) in self.shared_values() {
            c.unique_pairs += 1;
            c.pair_members += refs.len();
        }
        c.same_value = self.same_value_links;
        c
    }

    pub fn node_count(&self) -> usize {
        self.counts().nodes()
    }

    pub fn edge_count(&self) -> usize {
        self.counts().edges()
    }

    /// All nodes in canonical order.
    pub fn nodes(&self) -> Vec<NodeKey> {
        let mut out = Vec::new();
        for (ti, tx) in self.txs.iter().enumerate() {
            let tx_i = ti as u32;
            out.push(NodeKey::Transaction { tx: tx_i });
            for (ei, ev) in tx.events.iter().enumerate() {
                out.push(NodeKey::Event { tx: tx_i, event: ei as u32 });
                for pi in 0..ev.properties.len() {
                    out.push(NodeKey::Property(PropertyRef {
                        tx: tx_i,
                        event: ei as u32,
                        prop: pi as u32,
                    }));
                }
            }
        }
        for (value, _) in self.shared_values() {
            out.push(NodeKey::UniquePropertyPair { value: value.to_string() });
        }
        out
    }

    /// Union of senders, receivers and address-valued properties, sorted.
    pub fn distinct_addresses(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for tx in &self.txs {
            out.insert(tx.from_addr.clone());
            out.insert(tx.to_addr.clone());
        }
        for value in self.by_value.keys() {
            if is_address(value) {
                out.insert(value.clone());
            }
        }
        out
    }
}
