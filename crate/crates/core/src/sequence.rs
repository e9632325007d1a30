//! Timestamp-ordered event sequences per wallet address and per NFT.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::{is_address, EventRecord, PropertyGraph, TxRecord};

/// How an entry came to be associated with the queried address.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    /// The address submitted the transaction.
    FromAddress,
    /// The address only appears as an event property value.
    PropertyMatch,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TokenKeyMode {
    /// Key NFTs by the transaction target contract plus token id.
    #[default]
    #[serde(rename = "contract+id")]
    ContractAndId,
    /// Key NFTs by token id alone; ids from different collections collide.
    TokenidOnly,
}

impl FromStr for TokenKeyMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "contract+id" => Ok(Self::ContractAndId),
            "tokenid-only" => Ok(Self::TokenidOnly),
            other => Err(format!("unknown token key mode `{other}` (expected contract+id or tokenid-only)")),
        }
    }
}

impl fmt::Display for TokenKeyMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::ContractAndId => "contract+id",
            Self::TokenidOnly => "tokenid-only",
        })
    }
}

/// NFT identity.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NftKey {
    pub contract: Option<String>,
    pub token_id: String,
}

impl fmt::Display for NftKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.contract {
            Some(c) => write!(f, "{c}:{}", self.token_id),
            None => f.write_str(&self.token_id),
        }
    }
}

impl FromStr for NftKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.split_once(':') {
            Some((c, id)) => Ok(Self {
                contract: Some(c.to_string()),
                token_id: id.to_string(),
            }),
            None => Ok(Self {
                contract: None,
                token_id: s.to_string(),
            }),
        }
    }
}

/// Property key sets used to pull tokens and counted items out of events.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SequenceConfig {
    pub token_keys: BTreeSet<String>,
    pub asset_keys: BTreeSet<String>,
    pub ticket_keys: BTreeSet<String>,
    pub pack_keys: BTreeSet<String>,
    pub token_key: TokenKeyMode,
}

fn keys(ks: &[&str]) -> BTreeSet<String> {
    ks.iter().map(|k| k.to_string()).collect()
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            token_keys: keys(&["tokenId", "_tokenId", "id"]),
            asset_keys: keys(&["assetId"]),
            ticket_keys: keys(&["ticketId"]),
            pack_keys: keys(&["packId"]),
            token_key: TokenKeyMode::ContractAndId,
        }
    }
}

impl SequenceConfig {
    pub fn nft_key(&self, tx: &TxRecord, token_id: &str) -> NftKey {
        NftKey {
            contract: match self.token_key {
                TokenKeyMode::ContractAndId => Some(tx.to_addr.clone()),
                TokenKeyMode::TokenidOnly => None,
            },
            token_id: token_id.to_string(),
        }
    }
}

/// Payload extracted from one transaction's event properties.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepData {
    pub nfts: Vec<NftKey>,
    pub assets: Vec<String>,
    pub tickets: Vec<String>,
    pub packs: Vec<String>,
    pub related_addresses: Vec<String>,
    pub value: String,
}

impl StepData {
    pub fn extract(tx: &TxRecord, cfg: &SequenceConfig) -> Self {
        let mut nfts = BTreeSet::new();
        let mut assets = BTreeSet::new();
        let mut tickets = BTreeSet::new();
        let mut packs = BTreeSet::new();
        let mut related = BTreeSet::new();
        for ev in &tx.events {
            for (k, v) in &ev.properties {
                if cfg.token_keys.contains(k) {
                    nfts.insert(cfg.nft_key(tx, v));
                }
                if cfg.asset_keys.contains(k) {
                    assets.insert(v.clone());
                }
                if cfg.ticket_keys.contains(k) {
                    tickets.insert(v.clone());
                }
                if cfg.pack_keys.contains(k) {
                    packs.insert(v.clone());
                }
                if is_address(v) {
                    related.insert(v.clone());
                }
            }
        }
        Self {
            nfts: nfts.into_iter().collect(),
            assets: assets.into_iter().collect(),
            tickets: tickets.into_iter().collect(),
            packs: packs.into_iter().collect(),
            related_addresses: related.into_iter().collect(),
            value: tx.value.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventSeqEntry {
    pub tx_hash: String,
    pub timestamp: u64,
    pub block_number: u64,
    pub tx_index: u64,
    /// Submitter of the transaction.
    pub from_addr: String,
    pub events: Vec<EventRecord>,
    pub origin: Origin,
    pub data: StepData,
}

impl EventSeqEntry {
    fn new(tx: &TxRecord, origin: Origin, cfg: &SequenceConfig) -> Self {
        Self {
            tx_hash: tx.tx_hash.clone(),
            timestamp: tx.timestamp,
            block_number: tx.block_number,
            tx_index: tx.tx_index,
            from_addr: tx.from_addr.clone(),
            events: tx.events.clone(),
            origin,
            data: StepData::extract(tx, cfg),
        }
    }

    pub fn order_key(&self) -> (u64, u64, u64) {
        (self.timestamp, self.block_number, self.tx_index)
    }

    pub fn event_names(&self) -> Vec<String> {
        self.events.iter().map(|e| e.name.clone()).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressSequences {
    pub address: String,
    pub entries: Vec<EventSeqEntry>,
}

impl AddressSequences {
    pub fn primary(&self) -> impl Iterator<Item = &EventSeqEntry> {
        self.entries.iter().filter(|e| e.origin == Origin::FromAddress)
    }

    pub fn secondary(&self) -> impl Iterator<Item = &EventSeqEntry> {
        self.entries.iter().filter(|e| e.origin == Origin::PropertyMatch)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequences {
    pub key: NftKey,
    pub entries: Vec<EventSeqEntry>,
    pub is_multiple: bool,
}

fn sort_entries(entries: &mut [EventSeqEntry]) {
    entries.sort_by(|a, b| a.order_key().cmp(&b.order_key()).then_with(|| a.tx_hash.cmp(&b.tx_hash)));
}

/// Primary entries (transactions submitted by `addr`) and secondary entries
/// (other transactions carrying `addr` as a property value), sorted by
/// `(timestamp, block_number, tx_index)`.
pub fn sequences_for_address(g: &PropertyGraph, addr: &str, cfg: &SequenceConfig) -> AddressSequences {
    let mut entries: Vec<EventSeqEntry> = g
        .submitted_by(addr)
        .iter()
        .map(|&ti| EventSeqEntry::new(g.transaction(ti), Origin::FromAddress, cfg))
        .collect();

    let matched: BTreeSet<u32> = g.properties_with_value(addr).iter().map(|r| r.tx).collect();
    for ti in matched {
        let tx = g.transaction(ti);
        if tx.from_addr != addr {
            entries.push(EventSeqEntry::new(tx, Origin::PropertyMatch, cfg));
        }
    }
    sort_entries(&mut entries);
    AddressSequences {
        address: addr.to_string(),
        entries,
    }
}

fn token_txs(g: &PropertyGraph, key: &NftKey, cfg: &SequenceConfig) -> BTreeSet<u32> {
    g.properties_with_value(&key.token_id)
        .iter()
        .filter(|r| cfg.token_keys.contains(g.property(**r).0))
        .map(|r| r.tx)
        .filter(|&ti| cfg.nft_key(g.transaction(ti), &key.token_id) == *key)
        .collect()
}

/// All transactions touching the NFT `key`.
pub fn sequences_for_nft(g: &PropertyGraph, key: &NftKey, cfg: &SequenceConfig) -> TokenSequences {
    let mut entries: Vec<EventSeqEntry> = token_txs(g, key, cfg)
        .into_iter()
        .map(|ti| EventSeqEntry::new(g.transaction(ti), Origin::PropertyMatch, cfg))
        .collect();
    sort_entries(&mut entries);
    let is_multiple = is_multiple_use(&entries);
    TokenSequences {
        key: key.clone(),
        entries,
        is_multiple,
    }
}

/// Sequences for every NFT carrying `token_id`; under `contract+id` keying
/// one id may name several NFTs.
pub fn sequences_for_token(g: &PropertyGraph, token_id: &str, cfg: &SequenceConfig) -> Vec<TokenSequences> {
    let keys: BTreeSet<NftKey> = g
        .properties_with_value(token_id)
        .iter()
        .filter(|r| cfg.token_keys.contains(g.property(**r).0))
        .map(|r| cfg.nft_key(g.transaction(r.tx), token_id))
        .collect();
    keys.iter().map(|k| sequences_for_nft(g, k, cfg)).collect()
}

/// An NFT is multi-use when it appears in more than one transaction or is
/// touched by more than one submitting address.
pub fn is_multiple_use(entries: &[EventSeqEntry]) -> bool {
    let txs: BTreeSet<&str> = entries.iter().map(|e| e.tx_hash.as_str()).collect();
    let addrs: BTreeSet<&str> = entries.iter().map(|e| e.from_addr.as_str()).collect();
    txs.len() > 1 || addrs.len() > 1
}

/// Multi-use flag for every NFT in the graph.
pub fn nft_usage(g: &PropertyGraph, cfg: &SequenceConfig) -> BTreeMap<NftKey, bool> {
    let mut txs: BTreeMap<NftKey, BTreeSet<u32>> = BTreeMap::new();
    for (ti, tx) in g.transactions().iter().enumerate() {
        for ev in &tx.events {
            for (k, v) in &ev.properties {
                if cfg.token_keys.contains(k) {
                    txs.entry(cfg.nft_key(tx, v)).or_default().insert(ti as u32);
                }
            }
        }
    }
    txs.into_iter()
        .map(|(key, set)| {
            let senders: BTreeSet<&str> = set.iter().map(|&t| g.transaction(t).from_addr.as_str()).collect();
            (key, set.len() > 1 || senders.len() > 1)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{parse_dataset, IngestOptions};

    fn a(n: u32) -> String {
        format!("0x{n:040x}")
    }

    fn tx(n: u32, block: u64, idx: u64, ts: u64, from: &str, events: &str) -> String {
        format!(
            r#"{{"tx_hash":"0x{n:064x}","block_number":{block},"tx_index":{idx},"from":"{from}","to":"{}","value":"0","timestamp":{ts},"events":[{events}]}}"#,
            a(999)
        )
    }

    fn graph(lines: &[String]) -> PropertyGraph {
        parse_dataset(&lines.join("\n"), &IngestOptions::default()).unwrap().graph
    }

    #[test]
    fn primary_and_secondary_entries() {
        let me = a(1);
        let g = graph(&[
            tx(1, 1, 0, 100, &me, r#"{"log_index":0,"name":"Play"}"#),
            tx(
                2,
                2,
                0,
                200,
                &a(2),
                &format!(r#"{{"log_index":0,"name":"Gift","properties":{{"to":"{me}"}}}}"#),
            ),
        ]);
        let s = sequences_for_address(&g, &me, &SequenceConfig::default());
        let origins: Vec<_> = s.entries.iter().map(|e| e.origin).collect();
        assert_eq!(origins, [Origin::FromAddress, Origin::PropertyMatch]);
        assert_eq!(s.primary().count(), 1);
        assert_eq!(s.secondary().count(), 1);
    }

    #[test]
    fn own_tx_with_self_property_counted_once() {
        let me = a(1);
        let g = graph(&[tx(
            1,
            1,
            0,
            100,
            &me,
            &format!(r#"{{"log_index":0,"name":"Play","properties":{{"user":"{me}"}}}}"#),
        )]);
        let s = sequences_for_address(&g, &me, &SequenceConfig::default());
        assert_eq!(s.entries.len(), 1);
        assert_eq!(s.entries[0].origin, Origin::FromAddress);
    }

    #[test]
    fn unknown_address_is_empty() {
        let g = graph(&[tx(1, 1, 0, 100, &a(1), "")]);
        assert!(sequences_for_address(&g, &a(7), &SequenceConfig::default()).entries.is_empty());
    }

    #[test]
    fn timestamp_ties_broken_by_chain_position() {
        let me = a(1);
        let g = graph(&[
            tx(3, 5, 1, 100, &me, ""),
            tx(2, 5, 0, 100, &me, ""),
            tx(1, 4, 7, 100, &me, ""),
        ]);
        let s = sequences_for_address(&g, &me, &SequenceConfig::default());
        let pos: Vec<_> = s.entries.iter().map(|e| (e.block_number, e.tx_index)).collect();
        assert_eq!(pos, [(4, 7), (5, 0), (5, 1)]);
    }

    #[test]
    fn one_time_and_multi_time_nfts() {
        let cfg = SequenceConfig::default();
        let g = graph(&[
            tx(1, 1, 0, 10, &a(1), r#"{"log_index":0,"name":"Placed","properties":{"tokenId":"42"}}"#),
            tx(2, 2, 0, 20, &a(1), r#"{"log_index":0,"name":"AvatarClaimed","properties":{"tokenId":"7"}}"#),
            tx(3, 3, 0, 30, &a(1), r#"{"log_index":0,"name":"AvatarClaimed","properties":{"tokenId":"7"}}"#),
            tx(4, 4, 0, 40, &a(1), r#"{"log_index":0,"name":"AvatarClaimed","properties":{"tokenId":"7"}}"#),
        ]);
        let placed = sequences_for_token(&g, "42", &cfg);
        assert_eq!(placed.len(), 1);
        assert_eq!(placed[0].entries.len(), 1);
        assert!(!placed[0].is_multiple);

        let avatar = sequences_for_token(&g, "7", &cfg);
        assert_eq!(avatar[0].entries.len(), 3);
        assert!(avatar[0].is_multiple);

        assert!(sequences_for_token(&g, "5", &cfg).is_empty());
        let usage = nft_usage(&g, &cfg);
        assert_eq!(usage.values().filter(|m| **m).count(), 1);
    }

    #[test]
    fn token_keying_modes() {
        let mk = |n: u32, to: u32| {
            format!(
                r#"{{"tx_hash":"0x{n:064x}","block_number":{n},"tx_index":0,"from":"{}","to":"{}","value":"0","timestamp":{n},"events":[{{"log_index":0,"name":"Use","properties":{{"tokenId":"1"}}}}]}}"#,
                a(1),
                a(to)
            )
        };
        let g = graph(&[mk(1, 50), mk(2, 51)]);
        let by_contract = sequences_for_token(&g, "1", &SequenceConfig::default());
        assert_eq!(by_contract.len(), 2);
        assert!(by_contract.iter().all(|t| !t.is_multiple));

        let weak = SequenceConfig {
            token_key: TokenKeyMode::TokenidOnly,
            ..SequenceConfig::default()
        };
        let merged = sequences_for_token(&g, "1", &weak);
        assert_eq!(merged.len(), 1);
        assert!(merged[0].is_multiple);
    }

    #[test]
    fn nft_key_text_round_trip() {
        for k in [
            NftKey {
                contract: Some(a(3)),
                token_id: "9".into(),
            },
            NftKey {
                contract: None,
                token_id: "9".into(),
            },
        ] {
            assert_eq!(k.to_string().parse::<NftKey>().unwrap(), k);
        }
    }
}
