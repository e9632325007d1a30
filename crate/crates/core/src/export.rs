//! DOT, GraphML and CSV renderings of flows, general flows and cluster
//! subgraphs. Node order is fixed (users, then actions, then NFTs, each
//! sorted) so the same graph always renders to the same bytes.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use thiserror::Error;

use crate::action::{ActionId, BehaviourGraph};
use crate::flow::{FlowGraph, GeneralFlow};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("unsupported export format {0:?} (expected dot, graphml or csv)")]
    UnsupportedFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    Dot,
    GraphMl,
    Csv,
}

impl ExportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Dot => "dot",
            Self::GraphMl => "graphml",
            Self::Csv => "csv",
        }
    }
}

impl FromStr for ExportFormat {
    type Err = ExportError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "dot" => Ok(Self::Dot),
            "graphml" => Ok(Self::GraphMl),
            "csv" => Ok(Self::Csv),
            other => Err(ExportError::UnsupportedFormat(other.to_string())),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum NodeKind {
    User,
    Action,
    Nft,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::User => "user",
            Self::Action => "action",
            Self::Nft => "nft",
        }
    }

    /// Legend colours: red actions, blue users, brown NFTs.
    pub fn colour(self) -> &'static str {
        match self {
            Self::User => "#007dff",
            Self::Action => "#ff0000",
            Self::Nft => "#7b3f00",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExportNode {
    pub id: String,
    pub kind: NodeKind,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExportEdge {
    pub source: String,
    pub target: String,
    /// NEXT_STEP, USED_BY or VIRTUAL_STEP.
    pub kind: &'static str,
    pub order: Option<u64>,
    pub timestamp: Option<u64>,
    pub cluster: Option<usize>,
}

/// A render-ready graph.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ExportGraph {
    pub name: String,
    pub nodes: Vec<ExportNode>,
    pub edges: Vec<ExportEdge>,
}

fn action_label(bg: &BehaviourGraph, id: &ActionId) -> String {
    bg.action(id).map_or_else(|| id.0.clone(), |a| a.events.join("+"))
}

/// Nodes in canonical order from the three id sets.
fn nodes(bg: &BehaviourGraph, users: BTreeSet<String>, actions: BTreeSet<&ActionId>, nfts: BTreeSet<String>) -> Vec<ExportNode> {
    let mut out: Vec<ExportNode> = users
        .into_iter()
        .map(|u| ExportNode { label: u.clone(), id: u, kind: NodeKind::User })
        .collect();
    out.extend(actions.into_iter().map(|a| ExportNode {
        id: a.0.clone(),
        kind: NodeKind::Action,
        label: action_label(bg, a),
    }));
    out.extend(nfts.into_iter().map(|n| ExportNode {
        id: format!("nft:{n}"),
        kind: NodeKind::Nft,
        label: n,
    }));
    out
}

impl ExportGraph {
    /// One user's flow; the entry edge starts at the user node.
    pub fn from_flow(bg: &BehaviourGraph, flow: &FlowGraph) -> Self {
        Self::from_flows(bg, std::slice::from_ref(flow), &flow.address, None)
    }

    /// Union of several users' flows, e.g. every member of one cluster.
    pub fn from_flows(bg: &BehaviourGraph, flows: &[FlowGraph], name: &str, cluster: Option<usize>) -> Self {
        let users: BTreeSet<String> = flows.iter().map(|f| f.address.clone()).collect();
        let actions: BTreeSet<&ActionId> = flows.iter().flat_map(|f| f.actions.iter()).collect();
        let nfts: BTreeSet<String> = flows.iter().flat_map(|f| f.nfts.iter().map(|n| n.to_string())).collect();
        let mut edges = Vec::new();
        for f in flows {
            for e in &f.next_step {
                edges.push(ExportEdge {
                    source: e.source.as_ref().map_or_else(|| f.address.clone(), |s| s.0.clone()),
                    target: e.target.0.clone(),
                    kind: "NEXT_STEP",
                    order: Some(e.order),
                    timestamp: Some(e.timestamp),
                    cluster,
                });
            }
            for e in &f.used_by {
                edges.push(ExportEdge {
                    source: format!("nft:{}", e.nft),
                    target: e.action.0.clone(),
                    kind: "USED_BY",
                    order: Some(e.order),
                    timestamp: Some(e.timestamp),
                    cluster,
                });
            }
        }
        Self {
            name: name.to_string(),
            nodes: nodes(bg, users, actions, nfts),
            edges,
        }
    }

    /// A cluster's general flow: a virtual user, the mode actions chained by
    /// VIRTUAL_STEP edges, and the NFTs used by those actions.
    pub fn from_general_flow(bg: &BehaviourGraph, g: &GeneralFlow) -> Self {
        let user = format!("cluster_{}", g.cluster_id);
        let actions: BTreeSet<&ActionId> = g.steps.iter().collect();
        let nfts: BTreeSet<String> = g.nfts().into_iter().map(|n| n.to_string()).collect();
        let mut edges: Vec<ExportEdge> = g
            .virtual_edges
            .iter()
            .map(|e| ExportEdge {
                source: e.source.as_ref().map_or_else(|| user.clone(), |s| s.0.clone()),
                target: e.target.0.clone(),
                kind: "VIRTUAL_STEP",
                order: Some(e.order),
                timestamp: None,
                cluster: Some(e.cluster_id),
            })
            .collect();
        for (action, keys) in &g.nft_usage {
            for k in keys {
                edges.push(ExportEdge {
                    source: format!("nft:{k}"),
                    target: action.0.clone(),
                    kind: "USED_BY",
                    order: None,
                    timestamp: None,
                    cluster: Some(g.cluster_id),
                });
            }
        }
        Self {
            name: user.clone(),
            nodes: nodes(bg, BTreeSet::from([user]), actions, nfts),
            edges,
        }
    }

    pub fn render(&self, format: ExportFormat) -> String {
        match format {
            ExportFormat::Dot => self.to_dot(),
            ExportFormat::GraphMl => self.to_graphml(),
            ExportFormat::Csv => self.to_csv(),
        }
    }

    pub fn write(&self, path: &Path, format: ExportFormat) -> Result<(), ExportError> {
        std::fs::write(path, self.render(format))?;
        Ok(())
    }

    pub fn to_dot(&self) -> String {
        let mut s = format!("digraph {} {{\n", dot_quote(&self.name));
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "  {} [label={}, class={}, style=filled, fillcolor=\"{}\"];",
                dot_quote(&n.id),
                dot_quote(&n.label),
                n.kind.as_str(),
                n.kind.colour()
            );
        }
        for e in &self.edges {
            let mut attrs = vec![format!("label={}", e.kind)];
            if let Some(o) = e.order {
                attrs.push(format!("order={o}"));
            }
            if let Some(t) = e.timestamp {
                attrs.push(format!("timestamp={t}"));
            }
            if let Some(c) = e.cluster {
                attrs.push(format!("cluster={c}"));
            }
            let _ = writeln!(s, "  {} -> {} [{}];", dot_quote(&e.source), dot_quote(&e.target), attrs.join(", "));
        }
        s.push_str("}\n");
        s
    }

    pub fn to_graphml(&self) -> String {
        let mut s = String::from(
            "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n\
             <graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n  \
             <key id=\"kind\" for=\"node\" attr.name=\"kind\" attr.type=\"string\"/>\n  \
             <key id=\"label\" for=\"node\" attr.name=\"label\" attr.type=\"string\"/>\n  \
             <key id=\"colour\" for=\"node\" attr.name=\"colour\" attr.type=\"string\"/>\n  \
             <key id=\"type\" for=\"edge\" attr.name=\"type\" attr.type=\"string\"/>\n  \
             <key id=\"order\" for=\"edge\" attr.name=\"order\" attr.type=\"long\"/>\n  \
             <key id=\"timestamp\" for=\"edge\" attr.name=\"timestamp\" attr.type=\"long\"/>\n  \
             <key id=\"cluster\" for=\"edge\" attr.name=\"cluster\" attr.type=\"int\"/>\n",
        );
        let _ = writeln!(s, "  <graph id=\"{}\" edgedefault=\"directed\">", xml_escape(&self.name));
        for n in &self.nodes {
            let _ = writeln!(
                s,
                "    <node id=\"{}\"><data key=\"kind\">{}</data><data key=\"label\">{}</data><data key=\"colour\">{}</data></node>",
                xml_escape(&n.id),
                n.kind.as_str(),
                xml_escape(&n.label),
                n.kind.colour()
            );
        }
        for (i, e) in self.edges.iter().enumerate() {
            let _ = write!(
                s,
                "    <edge id=\"e{i}\" source=\"{}\" target=\"{}\"><data key=\"type\">{}</data>",
                xml_escape(&e.source),
                xml_escape(&e.target),
                e.kind
            );
            if let Some(o) = e.order {
                let _ = write!(s, "<data key=\"order\">{o}</data>");
            }
            if let Some(t) = e.timestamp {
                let _ = write!(s, "<data key=\"timestamp\">{t}</data>");
            }
            if let Some(c) = e.cluster {
                let _ = write!(s, "<data key=\"cluster\">{c}</data>");
            }
            s.push_str("</edge>\n");
        }
        s.push_str("  </graph>\n</graphml>\n");
        s
    }

    /// One table for nodes and edges: `record` is `node` or `edge`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("record,id,kind,label,source,target,order,timestamp,cluster\n");
        let opt = |v: Option<u64>| v.map_or_else(String::new, |v| v.to_string());
        for n in &self.nodes {
            let _ = writeln!(s, "node,{},{},{},,,,,", csv_field(&n.id), n.kind.as_str(), csv_field(&n.label));
        }
        for e in &self.edges {
            let _ = writeln!(
                s,
                "edge,,{},,{},{},{},{},{}",
                e.kind,
                csv_field(&e.source),
                csv_field(&e.target),
                opt(e.order),
                opt(e.timestamp),
                opt(e.cluster.map(|c| c as u64))
            );
        }
        s
    }
}

fn dot_quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

fn xml_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
