use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::graph::{NodeKey, PropertyGraph, PropertyRef};
use super::record::{EventRecord, TxRecord};
use crate::error::StoreError;
use crate::lineio;

pub const GRAPH_FORMAT: &str = "chainflow-graph/1";
const NODES_FILE: &str = "nodes.jsonl";
const EDGES_FILE: &str = "edges.jsonl";

#[derive(Serialize, Deserialize)]
struct Header {
    same_value_threshold: usize,
    nodes: usize,
    edges: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum NodeLine {
    Transaction {
        id: String,
        tx_hash: String,
        block_number: u64,
        tx_index: u64,
        from: String,
        to: String,
        value: String,
        timestamp: u64,
    },
    Event {
        id: String,
        tx: String,
        log_index: u64,
        name: String,
    },
    Property {
        id: String,
        event: String,
        key: String,
        value: String,
    },
    UniquePropertyPair {
        id: String,
        value: String,
        members: usize,
    },
}

#[derive(Serialize, Deserialize)]
struct EdgeLine {
    kind: String,
    src: String,
    dst: String,
}

fn tx_id(tx: &TxRecord) -> String {
    format!("tx:{}", tx.tx_hash)
}

fn event_id(tx: &TxRecord, ev: &EventRecord) -> String {
    format!("ev:{}:{}", tx.tx_hash, ev.log_index)
}

fn property_id(g: &PropertyGraph, r: PropertyRef) -> String {
    let tx = g.transaction(r.tx);
    format!("prop:{}:{}:{}", tx.tx_hash, tx.events[r.event as usize].log_index, r.prop)
}

fn pair_id(value: &str) -> String {
    format!("pair:{value}")
}

fn node_line(g: &PropertyGraph, key: &NodeKey) -> NodeLine {
    match key {
        NodeKey::Transaction { tx } => {
            let t = g.transaction(*tx);
            NodeLine::Transaction {
                id: tx_id(t),
                tx_hash: t.tx_hash.clone(),
                block_number: t.block_number,
                tx_index: t.tx_index,
                from: t.from_addr.clone(),
                to: t.to_addr.clone(),
                value: t.value.clone(),
                timestamp: t.timestamp,
            }
        }
        NodeKey::Event { tx, event } => {
            let t = g.transaction(*tx);
            let ev = &t.events[*event as usize];
            NodeLine::Event {
                id: event_id(t, ev),
                tx: tx_id(t),
                log_index: ev.log_index,
                name: ev.name.clone(),
            }
        }
        NodeKey::Property(r) => {
            let t = g.transaction(r.tx);
            let (k, v) = g.property(*r);
            NodeLine::Property {
                id: property_id(g, *r),
                event: event_id(t, &t.events[r.event as usize]),
                key: k.to_string(),
                value: v.to_string(),
            }
        }
        NodeKey::UniquePropertyPair { value } => NodeLine::UniquePropertyPair {
            id: pair_id(value),
            value: value.clone(),
            members: g.properties_with_value(value).len(),
        },
    }
}

fn edge_lines(g: &PropertyGraph) -> Vec<EdgeLine> {
    let mut out = Vec::new();
    for tx in g.transactions() {
        for ev in &tx.events {
            out.push(EdgeLine {
                kind: "EMITS".into(),
                src: tx_id(tx),
                dst: event_id(tx, ev),
            });
        }
    }
    for (ti, tx) in g.transactions().iter().enumerate() {
        for (ei, ev) in tx.events.iter().enumerate() {
            for pi in 0..ev.properties.len() {
                out.push(EdgeLine {
                    kind: "HAS".into(),
                    src: event_id(tx, ev),
                    dst: property_id(
                        g,
                        PropertyRef {
                            tx: ti as u32,
                            event: ei as u32,
                            prop: pi as u32,
                        },
                    ),
                });
            }
        }
    }
    for (value, refs) in g.shared_values() {
        for r in refs {
            out.push(EdgeLine {
                kind: "PAIR_MEMBER".into(),
                src: pair_id(value),
                dst: property_id(g, *r),
            });
        }
    }
    if g.same_value_materialized() {
        for (a, b) in g.same_value_links() {
            out.push(EdgeLine {
                kind: "SAME_VALUE".into(),
                src: property_id(g, a),
                dst: property_id(g, b),
            });
        }
    }
    out
}

/// Persist `g` under `dir`. Output is byte-identical for equal graphs.
pub fn save_graph(g: &PropertyGraph, dir: &Path) -> Result<(), StoreError> {
    let counts = g.counts();
    lineio::write_header(
        dir,
        GRAPH_FORMAT,
        &Header {
            same_value_threshold: g.same_value_threshold(),
            nodes: counts.nodes(),
            edges: counts.edges(),
        },
    )?;
    let nodes = g.nodes();
    lineio::write_lines(&dir.join(NODES_FILE), nodes.iter().map(|n| node_line(g, n)))?;
    lineio::write_lines(&dir.join(EDGES_FILE), edge_lines(g))?;
    Ok(())
}

/// Load a graph written by [`save_graph`].
pub fn load_graph(dir: &Path) -> Result<PropertyGraph, StoreError> {
    let header: Header = lineio::read_header(dir, GRAPH_FORMAT)?;
    let nodes: Vec<NodeLine> = lineio::read_lines(&dir.join(NODES_FILE))?;

    let mut txs: Vec<TxRecord> = Vec::new();
    let mut tx_pos: HashMap<String, usize> = HashMap::new();
    let mut event_pos: HashMap<String, (usize, usize)> = HashMap::new();
    for node in nodes {
        match node {
            NodeLine::Transaction {
                id,
                tx_hash,
                block_number,
                tx_index,
                from,
                to,
                value,
                timestamp,
            } => {
                tx_pos.insert(id, txs.len());
                txs.push(TxRecord {
                    tx_hash,
                    block_number,
                    tx_index,
                    from_addr: from,
                    to_addr: to,
                    value,
                    timestamp,
                    events: Vec::new(),
                });
            }
            NodeLine::Event { id, tx, log_index, name } => {
                let &ti = tx_pos
                    .get(&tx)
                    .ok_or_else(|| StoreError::Corrupt(format!("event {id} references unknown {tx}")))?;
                event_pos.insert(id, (ti, txs[ti].events.len()));
                txs[ti].events.push(EventRecord {
                    log_index,
                    name,
                    properties: Vec::new(),
                });
            }
            NodeLine::Property { id, event, key, value } => {
                let &(ti, ei) = event_pos
                    .get(&event)
                    .ok_or_else(|| StoreError::Corrupt(format!("property {id} references unknown {event}")))?;
                txs[ti].events[ei].properties.push((key, value));
            }
            NodeLine::UniquePropertyPair { .. } => {}
        }
    }

    let g = PropertyGraph::from_transactions(txs, header.same_value_threshold);
    let counts = g.counts();
    if counts.nodes() != header.nodes || counts.edges() != header.edges {
        return Err(StoreError::Corrupt(format!(
            "header declares {} nodes / {} edges, store rebuilds to {} / {}",
            header.nodes,
            header.edges,
            counts.nodes(),
            counts.edges()
        )));
    }
    Ok(g)
}
