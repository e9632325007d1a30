//! Per-cluster characterization: asset usage ρ, NFT distribution Φ, summary
//! features and activity labels.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::action::{ActionId, BehaviourGraph};
use crate::flow::{extract_flow, general_flow, FlowError, FlowGraph, GeneralFlow};
use crate::sequence::NftKey;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("general flow has no action nodes")]
    EmptyFlow,
    #[error("{addresses} addresses but {labels} cluster labels")]
    LengthMismatch { addresses: usize, labels: usize },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProfileParams {
    /// ρ at or above this counts as high asset usage.
    pub alpha: f64,
    /// Share of NFT usage Φ has to cover.
    pub beta: f64,
    /// Φ above this counts as distributed usage.
    pub gamma: usize,
    /// Use Σ x_i / m instead of the fraction of nodes with usage.
    pub rho_literal: bool,
}

impl Default for ProfileParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.6,
            gamma: 2,
            rho_literal: false,
        }
    }
}

impl ProfileParams {
    pub fn validate(&self) -> Result<(), ProfileError> {
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(ProfileError::InvalidParams(format!("beta must be in (0, 1], got {}", self.beta)));
        }
        if !self.alpha.is_finite() {
            return Err(ProfileError::InvalidParams("alpha must be finite".into()));
        }
        Ok(())
    }
}

/// Fraction of nodes with any NFT usage.
pub fn rho(counts: &[usize]) -> Result<f64, ProfileError> {
    if counts.is_empty() {
        return Err(ProfileError::EmptyFlow);
    }
    Ok(counts.iter().filter(|x| **x > 0).count() as f64 / counts.len() as f64)
}

/// Σ x_i·1(x_i > 0) / m taken literally; not bounded by 1.
pub fn rho_literal(counts: &[usize]) -> Result<f64, ProfileError> {
    if counts.is_empty() {
        return Err(ProfileError::EmptyFlow);
    }
    Ok(counts.iter().sum::<usize>() as f64 / counts.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Phi {
    /// 0 when `no_usage` is set.
    pub value: usize,
    pub no_usage: bool,
}

/// Fewest nodes, taken by descending usage, whose usage reaches
/// `beta` of the total.
pub fn phi(counts: &[usize], beta: f64) -> Phi {
    let total: usize = counts.iter().sum();
    if total == 0 {
        return Phi { value: 0, no_usage: true };
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    let target = beta * total as f64;
    let mut acc = 0usize;
    for (i, x) in sorted.iter().enumerate() {
        acc += x;
        if acc as f64 >= target {
            return Phi {
                value: i + 1,
                no_usage: false,
            };
        }
    }
    Phi {
        value: sorted.len(),
        no_usage: false,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeBand {
    Low,
    Medium,
    High,
}

/// Terciles by rank: the i-th shortest of n clusters falls in band ⌊3i/n⌋.
/// Equal times keep cluster order.
pub fn time_bands(times: &[f64]) -> Vec<TimeBand> {
    let n = times.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|a, b| times[*a].total_cmp(&times[*b]).then(a.cmp(b)));
    let mut out = vec![TimeBand::Low; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = match 3 * rank / n {
            0 => TimeBand::Low,
            1 => TimeBand::Medium,
            _ => TimeBand::High,
        };
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ActivityLabel {
    Active,
    SemiActive,
    InactiveWithInterest,
    InactiveNoInterest,
    BriefEngager,
    Dropout,
}

impl ActivityLabel {
    pub const ALL: [ActivityLabel; 6] = [
        ActivityLabel::Active,
        ActivityLabel::SemiActive,
        ActivityLabel::InactiveWithInterest,
        ActivityLabel::InactiveNoInterest,
        ActivityLabel::BriefEngager,
        ActivityLabel::Dropout,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ActivityLabel::Active => "active",
            ActivityLabel::SemiActive => "semi-active",
            ActivityLabel::InactiveWithInterest => "inactive-with-interest",
            ActivityLabel::InactiveNoInterest => "inactive-no-interest",
            ActivityLabel::BriefEngager => "brief-engager",
            ActivityLabel::Dropout => "dropout",
        }
    }
}

impl fmt::Display for ActivityLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ActivityLabel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|l| l.as_str() == s)
            .ok_or_else(|| format!("unknown activity label {s:?}"))
    }
}

/// What the labelling rules look at for one cluster.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LabelFacts {
    pub rho: f64,
    pub phi: Phi,
    pub time: TimeBand,
    /// The cluster has the highest mean ticket count of the run.
    pub most_tickets: bool,
}

/// Fixed decision list, first match wins.
///
/// High usage means ρ ≥ α, distributed means Φ > γ.
/// 1. high, distributed, long time: active
/// 2. high, not distributed, short time: dropout
/// 3. high, not distributed, all usage on one node: inactive with no interest
/// 4. high, not distributed: semi-active
/// 5. low usage, most tickets, short time: inactive with interest
/// 6. low usage: brief engager
/// 7. high, distributed, shorter time: semi-active
pub fn label_cluster(f: &LabelFacts, p: &ProfileParams) -> ActivityLabel {
    let high = f.rho >= p.alpha;
    let distributed = !f.phi.no_usage && f.phi.value > p.gamma;
    match (high, distributed) {
        (true, true) if f.time == TimeBand::High => ActivityLabel::Active,
        (true, false) if f.time == TimeBand::Low => ActivityLabel::Dropout,
        (true, false) if f.phi.value == 1 => ActivityLabel::InactiveNoInterest,
        (true, false) => ActivityLabel::SemiActive,
        (false, _) if f.most_tickets && f.time == TimeBand::Low => ActivityLabel::InactiveWithInterest,
        (false, _) => ActivityLabel::BriefEngager,
        (true, true) => ActivityLabel::SemiActive,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterProfile {
    pub cluster_id: usize,
    pub user_count: usize,
    /// Per-step mean counts, averaged over users.
    pub mean_assets: f64,
    pub mean_tickets: f64,
    pub mean_packs: f64,
    pub flow_length: usize,
    /// Distinct NFTs used by any user of the cluster.
    pub nft_count: usize,
    /// Mean over users of (last step − first step) in hours.
    pub time_hours: f64,
    pub rho: f64,
    pub phi: Phi,
    pub time_band: TimeBand,
    pub sequence: Vec<ActionId>,
    pub label: ActivityLabel,
}

#[derive(Clone, Debug)]
pub struct ProfileReport {
    pub profiles: Vec<ClusterProfile>,
    /// One per profile, same order.
    pub general_flows: Vec<GeneralFlow>,
}

struct Features {
    mean_assets: f64,
    mean_tickets: f64,
    mean_packs: f64,
    nft_count: usize,
    time_hours: f64,
}

fn features(flows: &[FlowGraph]) -> Features {
    let users = flows.len() as f64;
    let (mut a, mut t, mut p, mut hours) = (0.0, 0.0, 0.0, 0.0);
    let mut nfts: BTreeSet<&NftKey> = BTreeSet::new();
    for f in flows {
        let steps = f.next_step.len().max(1) as f64;
        a += f.next_step.iter().map(|e| e.assets).sum::<u64>() as f64 / steps;
        t += f.next_step.iter().map(|e| e.tickets).sum::<u64>() as f64 / steps;
        p += f.next_step.iter().map(|e| e.packs).sum::<u64>() as f64 / steps;
        let first = f.next_step.iter().map(|e| e.timestamp).min().unwrap_or(0);
        let last = f.next_step.iter().map(|e| e.timestamp).max().unwrap_or(0);
        hours += (last - first) as f64 / 3600.0;
        nfts.extend(f.used_by.iter().map(|e| &e.nft));
    }
    Features {
        mean_assets: a / users,
        mean_tickets: t / users,
        mean_packs: p / users,
        nft_count: nfts.len(),
        time_hours: hours / users,
    }
}

/// Profile every cluster of an assignment (`labels[i]` is the cluster of
/// `addresses[i]`). Output is sorted by cluster id.
pub fn profile_clusters(
    bg: &BehaviourGraph,
    addresses: &[String],
    labels: &[usize],
    params: &ProfileParams,
) -> Result<ProfileReport, ProfileError> {
    params.validate()?;
    if addresses.len() != labels.len() {
        return Err(ProfileError::LengthMismatch {
            addresses: addresses.len(),
            labels: labels.len(),
        });
    }
    let mut members: BTreeMap<usize, Vec<FlowGraph>> = BTreeMap::new();
    for (addr, &c) in addresses.iter().zip(labels) {
        members.entry(c).or_default().push(extract_flow(bg, addr, true)?);
    }

    let mut rows = Vec::new();
    let mut general_flows = Vec::new();
    for (&cid, flows) in &members {
        let gf = general_flow(flows, cid)?;
        let counts = gf.usage_counts();
        let r = if params.rho_literal { rho_literal(&counts)? } else { rho(&counts)? };
        rows.push((cid, flows.len(), features(flows), r, phi(&counts, params.beta), gf.steps.clone()));
        general_flows.push(gf);
    }

    let bands = time_bands(&rows.iter().map(|r| r.2.time_hours).collect::<Vec<_>>());
    let max_tickets = rows.iter().map(|r| r.2.mean_tickets).fold(f64::NEG_INFINITY, f64::max);
    let profiles = rows
        .into_iter()
        .zip(bands)
        .map(|((cid, users, f, r, ph, sequence), band)| {
            let facts = LabelFacts {
                rho: r,
                phi: ph,
                time: band,
                most_tickets: f.mean_tickets >= max_tickets,
            };
            ClusterProfile {
                cluster_id: cid,
                user_count: users,
                mean_assets: f.mean_assets,
                mean_tickets: f.mean_tickets,
                mean_packs: f.mean_packs,
                flow_length: sequence.len(),
                nft_count: f.nft_count,
                time_hours: f.time_hours,
                rho: r,
                phi: ph,
                time_band: band,
                sequence,
                label: label_cluster(&facts, params),
            }
        })
        .collect();
    Ok(ProfileReport {
        profiles,
        general_flows,
    })
}

pub const PROFILE_CSV_HEADER: &str =
    "cluster,label,users,mean_assets,mean_tickets,mean_packs,flow_length,nfts,time_hours,rho,phi,phi_defined,time_band,sequence";

pub fn write_profiles_csv(path: &Path, profiles: &[ClusterProfile]) -> Result<(), ProfileError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "{PROFILE_CSV_HEADER}")?;
    for p in profiles {
        let seq: Vec<&str> = p.sequence.iter().map(|a| a.as_str()).collect();
        let band = match p.time_band {
            TimeBand::Low => "low",
            TimeBand::Medium => "medium",
            TimeBand::High => "high",
        };
        writeln!(
            w,
            "{},{},{},{:.6},{:.6},{:.6},{},{},{:.4},{:.6},{},{},{},{}",
            p.cluster_id,
            p.label,
            p.user_count,
            p.mean_assets,
            p.mean_tickets,
            p.mean_packs,
            p.flow_length,
            p.nft_count,
            p.time_hours,
            p.rho,
            p.phi.value,
            !p.phi.no_usage,
            band,
            seq.join(" ")
        )?;
    }
    w.flush()?;
    Ok(())
}
