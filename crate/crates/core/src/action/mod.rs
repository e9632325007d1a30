//! Action synthesis from event sequences and the behaviour graph.

mod catalogue;
mod graph;
mod pattern;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use catalogue::{
    form_actions, stats_from_steps, token_steps, ActionDef, ActionId, ActionStats, ActionStep, ActionType, Formation,
    KindSelection, TokenStep,
};
pub use graph::{build_behaviour_graph, load_bgraph, save_bgraph, BehaviourGraph, NextStepEdge, NftNode, UsedByEdge, BGRAPH_FORMAT};
pub use pattern::{get_events, match_pattern, reduce_events, PatternKind, DEFAULT_REPEAT_THRESHOLD};

use crate::ingest::PropertyGraph;
use crate::sequence::{nft_usage, SequenceConfig};

#[derive(Debug, Error)]
pub enum ActionError {
    #[error("event sequence is empty")]
    EmptySequence,
    #[error("pattern {expected:?} does not match events (classified as {actual:?})")]
    PatternMismatch { expected: PatternKind, actual: PatternKind },
    #[error("step references unknown action {0}")]
    DanglingUuid(ActionId),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ActionConfig {
    pub repeat_threshold: usize,
    pub sequence: SequenceConfig,
}

impl Default for ActionConfig {
    fn default() -> Self {
        Self {
            repeat_threshold: DEFAULT_REPEAT_THRESHOLD,
            sequence: SequenceConfig::default(),
        }
    }
}

/// Form actions for every address in `g` (both sequence kinds, one step
/// counter per address) and assemble the behaviour graph.
pub fn behaviour_graph_for(g: &PropertyGraph, cfg: &ActionConfig) -> Result<(Formation, BehaviourGraph), ActionError> {
    let addresses: Vec<String> = g.distinct_addresses().into_iter().collect();
    let formation = form_actions(g, KindSelection::All, &addresses, cfg)?;
    let tokens = token_steps(&formation.steps);
    let usage = nft_usage(g, &cfg.sequence);
    let bg = build_behaviour_graph(&formation.catalogue, &formation.steps, &tokens, &usage)?;
    Ok((formation, bg))
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::ingest::{parse_dataset, IngestOptions};

    fn a(n: u32) -> String {
        format!("0x{n:040x}")
    }

    fn ev(i: usize, name: &str, props: &str) -> String {
        format!(r#"{{"log_index":{i},"name":"{name}","properties":{{{props}}}}}"#)
    }

    fn tx(n: u32, ts: u64, from: &str, events: &[String]) -> String {
        format!(
            r#"{{"tx_hash":"0x{n:064x}","block_number":{n},"tx_index":0,"from":"{from}","to":"{}","value":"0","timestamp":{ts},"events":[{}]}}"#,
            a(900),
            events.join(",")
        )
    }

    fn graph(lines: &[String]) -> PropertyGraph {
        parse_dataset(&lines.join("\n"), &IngestOptions::default()).unwrap().graph
    }

    #[test]
    fn repeated_action_reuses_uuid_and_chains() {
        let u = a(1);
        let g = graph(&[
            tx(1, 10, &u, &[ev(0, "A", ""), ev(1, "B", ""), ev(2, "A", ""), ev(3, "B", "")]),
            tx(2, 20, &u, &[ev(0, "A", ""), ev(1, "B", "")]),
        ]);
        // [A,B,A,B] reduces to [A,B] which equals the unique list [A,B]
        let f = form_actions(&g, KindSelection::Primary, &[u.clone()], &ActionConfig::default()).unwrap();
        assert_eq!(f.catalogue.len(), 1);
        assert_eq!(f.steps.len(), 2);
        assert_eq!((f.steps[0].order, f.steps[1].order), (0, 1));
        assert_eq!(f.steps[0].prev_uuid, None);
        assert_eq!(f.steps[1].prev_uuid.as_ref(), Some(&f.steps[0].uuid));
        assert_eq!(f.catalogue[0].stats.total_count, 2);
        assert_eq!(f.catalogue[0].stats.max_call, 2.0);
    }

    #[test]
    fn no_addresses_no_actions() {
        let g = graph(&[tx(1, 10, &a(1), &[ev(0, "A", "")])]);
        let f = form_actions(&g, KindSelection::All, &[], &ActionConfig::default()).unwrap();
        assert!(f.catalogue.is_empty() && f.steps.is_empty());
    }

    #[test]
    fn both_kinds_merge_to_both() {
        let (x, y) = (a(1), a(2));
        let g = graph(&[
            tx(1, 10, &x, &[ev(0, "Gift", &format!(r#""to":"{y}""#))]),
            tx(2, 20, &a(3), &[ev(0, "Gift", &format!(r#""to":"{x}""#))]),
        ]);
        let cfg = ActionConfig::default();
        let f = form_actions(&g, KindSelection::All, &[x.clone()], &cfg).unwrap();
        assert_eq!(f.catalogue.len(), 1);
        assert_eq!(f.catalogue[0].action_type, ActionType::Both);

        let only_primary = form_actions(&g, KindSelection::Primary, &[x.clone(), y.clone()], &cfg).unwrap();
        assert_eq!(only_primary.catalogue[0].action_type, ActionType::Primary);
        let only_secondary = form_actions(&g, KindSelection::Secondary, &[y], &cfg).unwrap();
        assert_eq!(only_secondary.catalogue[0].action_type, ActionType::Secondary);
    }

    #[test]
    fn behaviour_graph_edges() {
        let u = a(1);
        let g = graph(&[
            tx(1, 10, &u, &[ev(0, "A", "")]),
            tx(2, 20, &u, &[ev(0, "B", r#""tokenId":"5""#)]),
            tx(3, 30, &u, &[ev(0, "B", r#""tokenId":"5""#)]),
        ]);
        let (f, bg) = behaviour_graph_for(&g, &ActionConfig::default()).unwrap();
        assert_eq!(f.steps.len(), 3);
        assert_eq!(bg.users(), &[u.clone()]);
        assert_eq!(bg.actions().len(), 2);
        let ns = bg.next_steps_of(&u);
        assert_eq!(ns.len(), 3);
        assert!(ns[0].source.is_none());
        assert_eq!(ns[1].source.as_ref(), Some(&ns[0].target));
        assert_eq!(ns[2].source.as_ref(), Some(&ns[1].target));
        // token 5 used twice by the same address on the same action
        let ub = bg.used_by_of(&u);
        assert_eq!(ub.len(), 2);
        assert_eq!(ub[0].action, ub[1].action);
        assert_ne!(ub[0].order, ub[1].order);
        assert_eq!(bg.nfts().len(), 1);
        assert!(bg.nfts()[0].is_multiple);
    }

    #[test]
    fn no_token_steps_no_nfts() {
        let u = a(1);
        let g = graph(&[tx(1, 10, &u, &[ev(0, "A", "")])]);
        let (_, bg) = behaviour_graph_for(&g, &ActionConfig::default()).unwrap();
        assert!(bg.nfts().is_empty());
        assert!(bg.used_by_edges().is_empty());
    }

    #[test]
    fn dangling_uuid_rejected() {
        let u = a(1);
        let g = graph(&[tx(1, 10, &u, &[ev(0, "A", "")])]);
        let f = form_actions(&g, KindSelection::All, &[u], &ActionConfig::default()).unwrap();
        let err = build_behaviour_graph(&[], &f.steps, &[], &BTreeMap::new()).unwrap_err();
        assert!(matches!(err, ActionError::DanglingUuid(_)));
    }

    #[test]
    fn bgraph_round_trip() {
        let u = a(1);
        let g = graph(&[
            tx(1, 10, &u, &[ev(0, "A", r#""assetId":"1""#)]),
            tx(2, 20, &u, &[ev(0, "B", r#""tokenId":"5""#)]),
        ]);
        let (_, bg) = behaviour_graph_for(&g, &ActionConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bgraph(&bg, dir.path()).unwrap();
        let back = load_bgraph(dir.path()).unwrap();
        assert_eq!(back, bg);
        assert_eq!(back.next_steps_of(&u).len(), 2);
    }

    #[test]
    fn bgraph_load_rejects_missing_header() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            load_bgraph(dir.path()),
            Err(crate::StoreError::FormatVersion { .. })
        ));
    }
}
