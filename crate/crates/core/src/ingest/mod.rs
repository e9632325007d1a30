//! Decoded transaction logs → in-memory property graph.
//!
//! Input is one JSON transaction per line with embedded events. Lines are
//! parsed in parallel, validated, and folded into a [`PropertyGraph`] whose
//! contents do not depend on line order.

mod graph;
mod record;
mod store;

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use rayon::prelude::*;
use thiserror::Error;

pub use graph::{EdgeKind, GraphCounts, NodeKey, PropertyGraph, PropertyRef, DEFAULT_SAME_VALUE_THRESHOLD};
pub use record::{
    canonical_address, canonical_value, is_address, parse_tx_line, EventRecord, SchemaError, TxRecord, BURN_ADDRESS,
};
pub use store::{load_graph, save_graph, GRAPH_FORMAT};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{} schema error(s), first: {}", .0.len(), .0[0])]
    Schema(Vec<SchemaError>),
}

#[derive(Clone, Debug)]
pub struct IngestOptions {
    /// Abort on the first malformed line instead of skipping it.
    pub strict: bool,
    pub same_value_threshold: usize,
}

impl Default for IngestOptions {
    fn default() -> Self {
        Self {
            strict: false,
            same_value_threshold: DEFAULT_SAME_VALUE_THRESHOLD,
        }
    }
}

/// A loaded graph plus the lines that were rejected.
#[derive(Debug)]
pub struct LoadReport {
    pub graph: PropertyGraph,
    pub errors: Vec<SchemaError>,
}

/// Parse dataset text. Rejected lines are reported, not fatal, unless strict.
pub fn parse_dataset(text: &str, opts: &IngestOptions) -> Result<LoadReport, IngestError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| (i + 1, l))
        .collect();

    let parsed: Vec<(usize, Result<TxRecord, String>)> =
        lines.par_iter().map(|&(n, l)| (n, parse_tx_line(l))).collect();

    let mut errors = Vec::new();
    let mut records = Vec::with_capacity(parsed.len());
    for (line, result) in parsed {
        match result {
            Ok(tx) => records.push((line, tx)),
            Err(message) => errors.push(SchemaError { line, message }),
        }
    }

    // Duplicates are resolved in canonical order so the surviving record does
    // not depend on line order.
    records.sort_by(|(la, a), (lb, b)| {
        a.sort_key()
            .cmp(&b.sort_key())
            .then_with(|| format!("{a:?}").cmp(&format!("{b:?}")))
            .then(la.cmp(lb))
    });
    let mut seen_hash: HashMap<String, ()> = HashMap::new();
    let mut seen_pos: BTreeSet<(u64, u64)> = BTreeSet::new();
    let mut txs = Vec::with_capacity(records.len());
    for (line, tx) in records {
        if seen_hash.contains_key(&tx.tx_hash) {
            errors.push(SchemaError {
                line,
                message: format!("duplicate tx_hash {}", tx.tx_hash),
            });
        } else if !seen_pos.insert((tx.block_number, tx.tx_index)) {
            errors.push(SchemaError {
                line,
                message: format!("duplicate (block_number, tx_index) ({}, {})", tx.block_number, tx.tx_index),
            });
        } else {
            seen_hash.insert(tx.tx_hash.clone(), ());
            txs.push(tx);
        }
    }
    errors.sort_by_key(|e| e.line);

    if opts.strict && !errors.is_empty() {
        return Err(IngestError::Schema(errors));
    }
    Ok(LoadReport {
        graph: PropertyGraph::from_transactions(txs, opts.same_value_threshold),
        errors,
    })
}

/// Read and parse a line-delimited dataset file.
pub fn load_dataset(path: &Path, opts: &IngestOptions) -> Result<LoadReport, IngestError> {
    let text = std::fs::read_to_string(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_dataset(&text, opts)
}

/// Every address in the graph: senders, receivers and address-valued
/// properties, deduplicated and sorted.
pub fn distinct_addresses(g: &PropertyGraph) -> BTreeSet<String> {
    g.distinct_addresses()
}
