//! Synthetic transaction logs with planted behavioural archetypes.
//!
//! Every user follows their archetype's action order with a little noise:
//! a shared onboarding step, then actions from the archetype's own template
//! pool. NFT-bearing actions are spread along the order so the share of
//! general-flow nodes with NFT usage follows `nft_usage`, and token counts
//! decay geometrically by `nft_concentration` so the top node's share of
//! usage follows it too.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::Path;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::action::{match_pattern, PatternKind, DEFAULT_REPEAT_THRESHOLD};
use crate::ingest::BURN_ADDRESS;
use crate::profile::ActivityLabel;

/// 2023-01-01T00:00:00Z.
pub const WINDOW_START: u64 = 1_672_531_200;
pub const WINDOW_SECONDS: u64 = 30 * 86_400;
const FIRST_BLOCK: u64 = 38_000_000;
const ASSET_CLASSES: u64 = 12;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid archetype spec: {0}")]
    InvalidSpec(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// One action: a repetition shape applied to a list of event names.
///
/// `AllRepeatK` repeats every name, `AllRepeatKPlusBulk` repeats all but the
/// last, `OneRepeatsRestOnce` repeats the first, `Mixed` emits the first name
/// three times and the second twice. Token-bearing repeats grow with the
/// token count; the action they reduce to does not change.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActionTemplate {
    pub kind: PatternKind,
    pub events: Vec<String>,
}

impl ActionTemplate {
    fn min_events(kind: PatternKind) -> usize {
        match kind {
            PatternKind::UniqueEvents | PatternKind::AllRepeatK => 1,
            _ => 2,
        }
    }

    /// Event names in emission order, with the positions that carry a token.
    fn realize(&self, tokens: usize) -> (Vec<&str>, Vec<usize>) {
        let e: Vec<&str> = self.events.iter().map(String::as_str).collect();
        let mut names = Vec::new();
        let mut carriers = Vec::new();
        match self.kind {
            PatternKind::UniqueEvents => {
                names.extend(&e);
                carriers.extend(0..tokens.min(e.len()));
            }
            PatternKind::AllRepeatK | PatternKind::AllRepeatKPlusBulk => {
                let (chunk, bulk) = if self.kind == PatternKind::AllRepeatK {
                    (&e[..], None)
                } else {
                    (&e[..e.len() - 1], e.last())
                };
                for r in 0..tokens.max(2) {
                    if r < tokens {
                        carriers.push(names.len());
                    }
                    names.extend(chunk);
                }
                names.extend(bulk);
            }
            PatternKind::OneRepeatsRestOnce => {
                for r in 0..tokens.max(DEFAULT_REPEAT_THRESHOLD) {
                    if r < tokens {
                        carriers.push(names.len());
                    }
                    names.push(e[0]);
                }
                names.extend(&e[1..]);
            }
            PatternKind::Mixed => {
                names.extend([e[0], e[0], e[0], e[1], e[1]]);
                names.extend(&e[2..]);
                carriers.extend(0..tokens.min(names.len()));
            }
        }
        (names, carriers)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchetypeSpec {
    pub name: String,
    /// Activity label the archetype is meant to receive.
    #[serde(default)]
    pub label: Option<ActivityLabel>,
    /// Must hold at least `length.1 - 1` templates.
    pub templates: Vec<ActionTemplate>,
    /// Inclusive step-count range, onboarding step included.
    pub length: (usize, usize),
    /// Target share of general-flow actions with NFT usage.
    pub nft_usage: f64,
    /// 1 puts (nearly) all usage on one action, 0 spreads it evenly.
    pub nft_concentration: f64,
    /// Mean tickets per step.
    pub ticket_rate: f64,
    /// Mean packs per step.
    pub pack_rate: f64,
    /// Mean assets per step that are not NFTs.
    #[serde(default)]
    pub asset_rate: f64,
    /// Mean hours between a user's first and last step.
    pub session_hours: f64,
    #[serde(default = "default_tokens")]
    pub tokens_per_step: f64,
    /// Per-step probability of swapping in an unused pool action.
    #[serde(default = "default_noise")]
    pub noise: f64,
    /// Share of the window, as fractions, in which sessions start.
    #[serde(default = "default_cohort")]
    pub cohort: (f64, f64),
    /// Fraction of token slots that reuse the user's latest token.
    #[serde(default)]
    pub token_reuse: f64,
    /// Consecutive performances of each action; tokens go to the first.
    #[serde(default = "one")]
    pub calls_per_action: usize,
}

fn one() -> usize {
    1
}

fn default_tokens() -> f64 {
    3.0
}

fn default_noise() -> f64 {
    0.1
}

fn default_cohort() -> (f64, f64) {
    (0.0, 1.0)
}

fn unit(name: &str, v: f64) -> Result<(), SynthError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(SynthError::InvalidSpec(format!("{name} = {v} is outside [0, 1]")))
    }
}

impl ArchetypeSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(format!("{}: {m}", self.name)));
        unit("nft_usage", self.nft_usage)?;
        unit("nft_concentration", self.nft_concentration)?;
        for (name, v) in [
            ("ticket_rate", self.ticket_rate),
            ("pack_rate", self.pack_rate),
            ("asset_rate", self.asset_rate),
        ] {
            if !(v.is_finite() && (0.0..=8.0).contains(&v)) {
                return bad(format!("{name} = {v} is outside [0, 8]"));
            }
        }
        unit("noise", self.noise)?;
        unit("token_reuse", self.token_reuse)?;
        if !(1..=4).contains(&self.calls_per_action) {
            return bad(format!("calls_per_action {} outside 1..=4", self.calls_per_action));
        }
        unit("cohort start", self.cohort.0)?;
        unit("cohort end", self.cohort.1)?;
        if self.cohort.0 > self.cohort.1 {
            return bad(format!("cohort ({}, {}) is empty", self.cohort.0, self.cohort.1));
        }
        let (lo, hi) = self.length;
        if lo == 0 || lo > hi {
            return bad(format!("length range ({lo}, {hi}) is empty"));
        }
        if self.templates.len() + 1 < hi {
            return bad(format!("{} templates cannot fill {hi} distinct steps", self.templates.len()));
        }
        if !(self.session_hours.is_finite() && self.session_hours >= 0.0)
            || self.session_hours * 1.1 * 3600.0 >= WINDOW_SECONDS as f64
        {
            return bad(format!("session_hours {} does not fit the window", self.session_hours));
        }
        if !(self.tokens_per_step.is_finite() && self.tokens_per_step >= 0.0) {
            return bad("tokens_per_step must be non-negative".into());
        }
        let mut seen = BTreeSet::new();
        for t in &self.templates {
            if t.events.len() < ActionTemplate::min_events(t.kind) || t.events.iter().any(String::is_empty) {
                return bad(format!("template {:?} has too few events for {:?}", t.events, t.kind));
            }
            if t.events.iter().collect::<BTreeSet<_>>().len() != t.events.len() {
                return bad(format!("template {:?} repeats an event name", t.events));
            }
            for tokens in [0, 1, 4] {
                let (names, _) = t.realize(tokens);
                let got = match_pattern(&names, DEFAULT_REPEAT_THRESHOLD).expect("non-empty");
                if got != t.kind {
                    return bad(format!("template {:?} classifies as {got:?}, not {:?}", t.events, t.kind));
                }
            }
            if !seen.insert(&t.events) {
                return bad(format!("duplicate template {:?}", t.events));
            }
        }
        Ok(())
    }

    fn mean_length(&self) -> f64 {
        (self.length.0 + self.length.1) as f64 / 2.0
    }

    /// Tokens per visit for each of the first `length.1 - 1` pool positions
    /// (the onboarding step carries none).
    fn token_plan(&self) -> Vec<usize> {
        let m = (self.mean_length() + 0.5).floor() as usize;
        let slots = self.length.1 - 1;
        let mut plan = vec![0; slots];
        let n_nft = ((self.nft_usage * m as f64).round() as usize).min(m.saturating_sub(1));
        if n_nft == 0 || self.tokens_per_step == 0.0 {
            return plan;
        }
        // Spread over positions 1..m, first one right after onboarding.
        let span = (m - 1) as f64;
        let positions: Vec<usize> = (0..n_nft)
            .map(|i| (i as f64 * span / n_nft as f64).floor() as usize)
            .collect();
        let keep = 1.0 - self.nft_concentration;
        let raw: Vec<f64> = (0..n_nft).map(|i| keep.powi(i as i32)).collect();
        let total: f64 = raw.iter().sum();
        let budget = self.tokens_per_step * n_nft as f64;
        for (p, w) in positions.into_iter().zip(raw) {
            plan[p] = ((budget * w / total).round() as usize).max(1);
        }
        plan
    }

    /// Share of general-flow nodes with usage and the node count covering
    /// `beta` of usage, as planned.
    pub fn planned_usage(&self, beta: f64) -> (f64, usize) {
        let m = (self.mean_length() + 0.5).floor() as usize;
        let plan = self.token_plan();
        let counts: Vec<usize> = std::iter::once(0).chain(plan.iter().copied()).take(m).collect();
        let rho = counts.iter().filter(|x| **x > 0).count() as f64 / m as f64;
        (rho, crate::profile::phi(&counts, beta).value)
    }
}

const VERBS: [&str; 24] = [
    "Stake", "Claim", "Craft", "Deploy", "Harvest", "Upgrade", "Scan", "Trade", "Repair", "Explore", "Merge", "Refine",
    "Launch", "Salvage", "Enlist", "Assemble", "Boost", "Convert", "Dock", "Equip", "Forge", "Gather", "Patrol",
    "Survey",
];
const SUFFIXES: [&str; 4] = ["", "Item", "Done", "Log"];

/// `count` templates with kinds cycling through every pattern kind.
pub fn template_pool(prefix: &str, count: usize) -> Vec<ActionTemplate> {
    (0..count)
        .map(|i| {
            // Repeating kinds first: they can carry any number of tokens.
            let kind = PatternKind::ALL[(i + 1) % PatternKind::ALL.len()];
            let verb = VERBS[i % VERBS.len()];
            let round = i / VERBS.len();
            let width = match kind {
                PatternKind::UniqueEvents => 3,
                PatternKind::AllRepeatK => 2,
                PatternKind::AllRepeatKPlusBulk | PatternKind::OneRepeatsRestOnce | PatternKind::Mixed => 3,
            };
            let events = (0..width)
                .map(|j| {
                    let tail = if round == 0 { String::new() } else { round.to_string() };
                    format!("{prefix}{verb}{}{tail}", SUFFIXES[j])
                })
                .collect();
            ActionTemplate { kind, events }
        })
        .collect()
}

/// Per-archetype knobs of the default set: usage, concentration, tokens per
/// step, tickets, packs, assets, token reuse, calls per action, hours.
type Knobs = (f64, f64, f64, f64, f64, f64, f64, usize, f64);

fn archetype(name: &str, prefix: &str, label: ActivityLabel, k: Knobs) -> ArchetypeSpec {
    let length = (8, 8);
    ArchetypeSpec {
        name: name.into(),
        label: Some(label),
        templates: template_pool(prefix, length.1 + 2),
        length,
        nft_usage: k.0,
        nft_concentration: k.1,
        tokens_per_step: k.2,
        ticket_rate: k.3,
        pack_rate: k.4,
        asset_rate: k.5,
        token_reuse: k.6,
        calls_per_action: k.7,
        session_hours: k.8,
        noise: 0.0,
        cohort: default_cohort(),
    }
}

/// Six archetypes, one per activity label, all with eight-step flows.
///
/// Each archetype carries its own signature (packs, token reuse, assets,
/// call counts, tickets) on top of the usage pattern its label asks for.
/// The signatures are sized so the archetype centres sit at similar
/// distances from each other in the embedding, which is what the chord
/// elbow needs to see six groups rather than two or three.
pub fn default_archetypes() -> Vec<ArchetypeSpec> {
    use ActivityLabel::*;
    vec![
        archetype("active", "Fleet", Active, (0.75, 0.1, 1.71, 0.0, 4.0, 0.0, 0.0, 3, 200.0)),
        archetype("semi-active", "Colony", SemiActive, (0.6, 0.4, 2.4, 0.0, 0.0, 0.0, 0.5, 3, 42.0)),
        archetype("dropout", "Mine", Dropout, (0.6, 0.5, 2.4, 0.0, 0.0, 4.0, 0.0, 3, 20.0)),
        archetype("inactive-no-interest", "Outpost", InactiveNoInterest, (0.6, 0.8, 2.4, 0.0, 0.0, 0.0, 0.0, 1, 50.0)),
        archetype("brief-engager", "Market", BriefEngager, (0.3, 0.5, 4.0, 0.0, 0.0, 0.0, 0.0, 1, 40.0)),
        archetype("inactive-with-interest", "Lotto", InactiveWithInterest, (0.3, 0.5, 4.0, 4.0, 0.0, 0.0, 0.0, 3, 10.0)),
    ]
}

/// Archetype specs from a JSON array.
pub fn load_archetypes(path: &Path) -> Result<Vec<ArchetypeSpec>, SynthError> {
    let text = std::fs::read_to_string(path)?;
    let specs: Vec<ArchetypeSpec> =
        serde_json::from_str(&text).map_err(|e| SynthError::InvalidSpec(format!("{}: {e}", path.display())))?;
    Ok(specs)
}

/// Which archetype each generated address belongs to.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub archetypes: Vec<String>,
    pub labels: Vec<Option<ActivityLabel>>,
    pub assignment: BTreeMap<String, usize>,
}

impl GroundTruth {
    pub fn write_csv(&self, path: &Path) -> Result<(), SynthError> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(w, "address,archetype_id,archetype,label")?;
        for (addr, &a) in &self.assignment {
            let label = self.labels[a].map_or("", |l| l.as_str());
            writeln!(w, "{addr},{a},{},{label}", self.archetypes[a])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self, SynthError> {
        let text = std::fs::read_to_string(path)?;
        let mut out = Self::default();
        let mut names: BTreeMap<usize, (String, Option<ActivityLabel>)> = BTreeMap::new();
        for (i, line) in text.lines().enumerate().skip(1) {
            let cols: Vec<&str> = line.split(',').collect();
            let bad = || SynthError::InvalidSpec(format!("truth line {}: {line:?}", i + 1));
            if cols.len() != 4 {
                return Err(bad());
            }
            let id: usize = cols[1].parse().map_err(|_| bad())?;
            let label = if cols[3].is_empty() { None } else { Some(cols[3].parse().map_err(|_| bad())?) };
            names.insert(id, (cols[2].to_string(), label));
            out.assignment.insert(cols[0].to_string(), id);
        }
        for (i, (id, (name, label))) in names.into_iter().enumerate() {
            if i != id {
                return Err(SynthError::InvalidSpec(format!("truth skips archetype id {i}")));
            }
            out.archetypes.push(name);
            out.labels.push(label);
        }
        Ok(out)
    }
}

/// A generated dataset: ingest-format lines sorted by chain position.
#[derive(Clone, Debug)]
pub struct Synthetic {
    pub lines: Vec<String>,
    pub truth: GroundTruth,
}

impl Synthetic {
    pub fn text(&self) -> String {
        let mut s = self.lines.join("\n");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<(), SynthError> {
        std::fs::write(path, self.text())?;
        Ok(())
    }
}

fn digest(parts: &[&str]) -> [u8; 32] {
    let mut h = Sha256::new();
    for p in parts {
        h.update(p.as_bytes());
        h.update([0]);
    }
    h.finalize().into()
}

fn address(parts: &[&str]) -> String {
    format!("0x{}", hex::encode(&digest(parts)[..20]))
}

struct PendingTx {
    timestamp: u64,
    from: String,
    to: String,
    value: u64,
    events: Vec<Value>,
    key: String,
}

fn event(i: usize, name: &str, props: Map<String, Value>) -> Value {
    json!({ "log_index": i, "name": name, "properties": props })
}

struct Counters {
    token: u64,
    asset: u64,
    ticket: u64,
    pack: u64,
}

/// Generate `users_per` users for every archetype.
pub fn generate(specs: &[ArchetypeSpec], users_per: usize, seed: u64) -> Result<Synthetic, SynthError> {
    if specs.is_empty() {
        return Err(SynthError::InvalidSpec("no archetypes".into()));
    }
    if users_per == 0 {
        return Err(SynthError::InvalidSpec("users per archetype must be at least 1".into()));
    }
    let mut names = BTreeSet::new();
    for s in specs {
        s.validate()?;
        if !names.insert(&s.name) {
            return Err(SynthError::InvalidSpec(format!("duplicate archetype name {}", s.name)));
        }
    }
    let mut owners: BTreeMap<&Vec<String>, &str> = BTreeMap::new();
    for s in specs {
        for t in &s.templates {
            if let Some(other) = owners.insert(&t.events, &s.name) {
                if other != s.name {
                    return Err(SynthError::InvalidSpec(format!(
                        "template {:?} shared by {other} and {}",
                        t.events, s.name
                    )));
                }
            }
        }
    }

    let seed_s = seed.to_string();
    let game = address(&["chainflow-synth", "game", &seed_s]);
    let nft_contract = address(&["chainflow-synth", "nft", &seed_s]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut counters = Counters {
        token: 1,
        asset: 0,
        ticket: 1,
        pack: 1,
    };
    let mut pending = Vec::new();
    let mut truth = GroundTruth {
        archetypes: specs.iter().map(|s| s.name.clone()).collect(),
        labels: specs.iter().map(|s| s.label).collect(),
        assignment: BTreeMap::new(),
    };

    for (ai, spec) in specs.iter().enumerate() {
        let plan = spec.token_plan();
        for ui in 0..users_per {
            let user = address(&["chainflow-synth", "user", &seed_s, &spec.name, &ui.to_string()]);
            truth.assignment.insert(user.clone(), ai);
            user_txs(spec, &plan, &user, (&game, &nft_contract), &mut rng, &mut counters, &mut pending);
        }
    }

    // Chain positions: two-second blocks, indices in generation order.
    pending.sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.key.cmp(&b.key)));
    let mut next_index: BTreeMap<u64, u64> = BTreeMap::new();
    let mut lines = Vec::with_capacity(pending.len());
    for p in pending {
        let block = FIRST_BLOCK + (p.timestamp - WINDOW_START) / 2;
        let slot = next_index.entry(block).or_default();
        let tx_index = *slot;
        *slot += 1;
        let hash = hex::encode(digest(&["chainflow-synth", "tx", &seed_s, &p.key]));
        let line = json!({
            "tx_hash": format!("0x{hash}"),
            "block_number": block,
            "tx_index": tx_index,
            "from": p.from,
            "to": p.to,
            "value": p.value.to_string(),
            "timestamp": p.timestamp,
            "events": p.events,
        });
        lines.push(line.to_string());
    }
    Ok(Synthetic { lines, truth })
}

/// Whole part of `mean` plus one more with probability of the fraction.
fn draw_count(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    mean.floor() as usize + usize::from(rng.random_bool(mean.fract()))
}

fn user_txs(
    spec: &ArchetypeSpec,
    plan: &[usize],
    user: &str,
    (game, nft_contract): (&str, &str),
    rng: &mut ChaCha8Rng,
    c: &mut Counters,
    out: &mut Vec<PendingTx>,
) {
    let len = rng.random_range(spec.length.0..=spec.length.1);

    // Pool indices per step after onboarding, with noisy swaps for unused ones.
    let mut order: Vec<usize> = (0..len - 1).collect();
    let mut unused: Vec<usize> = (len - 1..spec.templates.len()).collect();
    for slot in order.iter_mut() {
        if !unused.is_empty() && rng.random_bool(spec.noise) {
            let j = rng.random_range(0..unused.len());
            std::mem::swap(slot, &mut unused[j]);
        }
    }
    // Each action is performed `calls_per_action` times in a row.
    let steps: Vec<(usize, bool)> = order
        .iter()
        .flat_map(|&pi| (0..spec.calls_per_action).map(move |r| (pi, r == 0)))
        .collect();
    let n_tx = steps.len() + 1;

    // Step times: first at the session start, last at its end.
    let span = (spec.session_hours * 3600.0 * rng.random_range(0.9..1.1)) as u64;
    let span = span.max(n_tx as u64);
    let w = WINDOW_SECONDS as f64;
    let earliest = (spec.cohort.0 * w) as u64;
    let latest = ((spec.cohort.1 * w) as u64).min(WINDOW_SECONDS - span).max(earliest.min(WINDOW_SECONDS - span));
    let start = WINDOW_START + rng.random_range(earliest.min(latest)..=latest);
    let mut offsets: Vec<u64> = (0..n_tx.saturating_sub(2)).map(|_| rng.random_range(1..span)).collect();
    offsets.sort_unstable();
    offsets.insert(0, 0);
    if n_tx > 1 {
        offsets.push(span);
    }
    for i in 1..offsets.len() {
        offsets[i] = offsets[i].max(offsets[i - 1] + 1);
    }

    // Onboarding: the shared first step mints nothing but records the user.
    let mut props = Map::new();
    props.insert("from".into(), json!(BURN_ADDRESS));
    props.insert("to".into(), json!(user));
    props.insert("assetId".into(), json!(0));
    out.push(PendingTx {
        timestamp: start + offsets[0],
        from: user.to_string(),
        to: game.to_string(),
        value: 0,
        events: vec![event(0, "Transfer", props), event(1, "Registered", Map::new())],
        key: format!("{user}:0"),
    });

    let mut owned: Vec<u64> = Vec::new();
    let mut carried = 0usize;
    for (step, &(pi, first)) in steps.iter().enumerate() {
        let t = &spec.templates[pi];
        let tokens = if first { plan.get(pi).copied().unwrap_or(0) } else { 0 };
        let (names, carriers) = t.realize(tokens);
        let mut events: Vec<Value> = Vec::with_capacity(names.len());
        let mut carriers = carriers.into_iter().peekable();
        let tickets = draw_count(rng, spec.ticket_rate).min(names.len());
        let packs = draw_count(rng, spec.pack_rate).min(names.len());
        let assets = draw_count(rng, spec.asset_rate).min(names.len());
        for (i, name) in names.iter().enumerate() {
            let mut props = Map::new();
            if carriers.peek() == Some(&i) {
                carriers.next();
                // Reuse is spread evenly over the carriers: carrier q reuses
                // the latest token when q * token_reuse crosses an integer.
                let q = carried as f64;
                carried += 1;
                let reuse = ((q + 1.0) * spec.token_reuse).floor() > (q * spec.token_reuse).floor();
                let token = if reuse && !owned.is_empty() {
                    owned[owned.len() - 1]
                } else {
                    c.token += 1;
                    owned.push(c.token - 1);
                    c.token - 1
                };
                props.insert("tokenId".into(), json!(token));
                props.insert("assetId".into(), json!(1 + token % ASSET_CLASSES));
            }
            if i < tickets {
                props.insert("ticketId".into(), json!(c.ticket));
                c.ticket += 1;
            }
            if i < assets && !props.contains_key("assetId") {
                props.insert("assetId".into(), json!(ASSET_CLASSES + 1 + c.asset));
                c.asset += 1;
            }
            if i < packs {
                props.insert("packId".into(), json!(c.pack));
                c.pack += 1;
            }
            events.push(event(i, name, props));
        }
        let value = 1_000_000_000_000_000 * packs as u64;
        out.push(PendingTx {
            timestamp: start + offsets[step + 1],
            from: user.to_string(),
            to: if tokens > 0 { nft_contract.to_string() } else { game.to_string() },
            value,
            events,
            key: format!("{user}:{}", step + 1),
        });
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_specs_are_valid() {
        for s in default_archetypes() {
            s.validate().unwrap();
        }
    }

    #[test]
    fn templates_realize_their_kind() {
        for t in template_pool("X", 10) {
            for tokens in 0..8 {
                let (names, carriers) = t.realize(tokens);
                assert_eq!(match_pattern(&names, DEFAULT_REPEAT_THRESHOLD).unwrap(), t.kind);
                assert!(carriers.len() <= tokens);
                assert!(carriers.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }

    #[test]
    fn planned_usage_matches_labels() {
        let planned: Vec<(f64, usize)> = default_archetypes().iter().map(|s| s.planned_usage(0.6)).collect();
        // active, semi-active, dropout, no-interest, brief, with-interest
        assert!(planned[0].0 >= 0.5 && planned[0].1 > 2);
        assert!(planned[1].0 >= 0.5 && planned[1].1 == 2);
        assert!(planned[2].0 >= 0.5 && planned[2].1 <= 2);
        assert!(planned[3].0 >= 0.5 && planned[3].1 == 1);
        assert!(planned[4].0 < 0.5 && planned[5].0 < 0.5);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = default_archetypes().remove(0);
        s.nft_usage = 1.5;
        assert!(matches!(s.validate(), Err(SynthError::InvalidSpec(_))));
        let mut s = default_archetypes().remove(0);
        s.length = (5, 3);
        assert!(s.validate().is_err());
        let mut s = default_archetypes().remove(0);
        s.templates[0].events = vec!["A".into(), "A".into()];
        assert!(s.validate().is_err());
        let mut s = default_archetypes().remove(0);
        s.templates[1].kind = PatternKind::OneRepeatsRestOnce;
        s.templates[1].events.truncate(1);
        assert!(s.validate().is_err());
        let mut s = default_archetypes().remove(0);
        s.calls_per_action = 0;
        assert!(s.validate().is_err());
        assert!(generate(&[], 3, 0).is_err());
        assert!(generate(&default_archetypes(), 0, 0).is_err());
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&default_archetypes(), 3, 11).unwrap();
        let b = generate(&default_archetypes(), 3, 11).unwrap();
        let c = generate(&default_archetypes(), 3, 12).unwrap();
        assert_eq!(a.text(), b.text());
        assert_ne!(a.text(), c.text());
        assert_eq!(a.truth, b.truth);
        assert_eq!(a.truth.assignment.len(), 18);
    }

    #[test]
    fn repeated_calls_keep_tokens_on_the_first() {
        let mut spec = default_archetypes().remove(0);
        spec.calls_per_action = 3;
        let s = generate(&[spec], 1, 4).unwrap();
        // onboarding plus seven actions performed three times each
        assert_eq!(s.lines.len(), 1 + 7 * 3);
        let carriers = |line: &String| line.matches("tokenId").count();
        let with_tokens: Vec<usize> = s.lines[1..].iter().map(carriers).collect();
        for chunk in with_tokens.chunks(3) {
            assert_eq!(chunk[1] + chunk[2], 0);
        }
    }

    #[test]
    fn truth_csv_round_trip() {
        let s = generate(&default_archetypes(), 2, 1).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("truth.csv");
        s.truth.write_csv(&p).unwrap();
        assert_eq!(GroundTruth::read_csv(&p).unwrap(), s.truth);
    }
}
