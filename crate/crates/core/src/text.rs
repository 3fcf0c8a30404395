//! Node and metapath-instance textualization.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeId};
use crate::metapath::{InstanceSampler, Metapath, MetapathInstance};
use crate::seed;

/// Instance separator inside a node's sequence.
pub const SEPARATOR: &str = "</s>";

/// Markers that carry meaning in corpus text and must not leak in from
/// attribute strings.
const RESERVED_MARKERS: [&str; 5] = ["</s>", "<mask>", "<target>", "<pad>", "<unk>"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum TextMode {
    #[serde(rename = "attr")]
    AttributeOnly,
    #[serde(rename = "struct")]
    StructureOnly,
    #[default]
    #[serde(rename = "both")]
    Both,
}

impl FromStr for TextMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "attr" | "attribute" | "attribute-only" => Ok(TextMode::AttributeOnly),
            "struct" | "structure" | "structure-only" => Ok(TextMode::StructureOnly),
            "both" => Ok(TextMode::Both),
            other => Err(Error::InvalidArgument(format!(
                "unknown text mode `{other}` (expected both, attr or struct)"
            ))),
        }
    }
}

impl fmt::Display for TextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TextMode::AttributeOnly => "attr",
            TextMode::StructureOnly => "struct",
            TextMode::Both => "both",
        })
    }
}

/// Text standing for one node. Never empty, never contains `</s>`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NodeText(String);

impl NodeText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

impl fmt::Display for NodeText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

fn sanitize(attribute: &str) -> String {
    let mut s = attribute.to_string();
    for marker in RESERVED_MARKERS {
        if s.contains(marker) {
            s = s.replace(marker, marker.trim_matches(['<', '>', '/']));
        }
    }
    s
}

pub fn textualize_node(graph: &HeteroGraph, v: NodeId, mode: TextMode) -> NodeText {
    let ty = graph.node_type_name(v);
    let attr = sanitize(graph.attribute(v));
    let attr = attr.trim();
    let text = match mode {
        TextMode::Both if attr.is_empty() => ty.to_string(),
        TextMode::Both => format!("{ty} {attr}"),
        // an attribute-less node still needs some text
        TextMode::AttributeOnly if attr.is_empty() => ty.to_string(),
        TextMode::AttributeOnly => attr.to_string(),
        TextMode::StructureOnly => format!("{ty} {}", v.0),
    };
    NodeText(text)
}

/// `T(v0) r1 T(v1) ... rl T(vl)`.
pub fn textualize_instance(graph: &HeteroGraph, instance: &MetapathInstance, mode: TextMode) -> String {
    let mut parts = Vec::with_capacity(instance.nodes.len() * 2);
    parts.push(textualize_node(graph, instance.nodes[0], mode).into_string());
    for (e, &v) in instance.edges.iter().zip(&instance.nodes[1..]) {
        parts.push(graph.edge_type_name(*e).to_string());
        parts.push(textualize_node(graph, v, mode).into_string());
    }
    parts.join(" ")
}

/// Joins segments as `s1 </s> s2 </s> ... sn </s>`.
pub fn join_segments<S: AsRef<str>>(segments: &[S]) -> String {
    let mut out = String::new();
    for s in segments {
        out.push_str(s.as_ref());
        out.push(' ');
        out.push_str(SEPARATOR);
        out.push(' ');
    }
    out.pop();
    out
}

/// Seed for sampling instances of catalog entry `metapath_index` from `v`.
pub fn instance_seed(global_seed: u64, v: NodeId, metapath_index: usize) -> u64 {
    seed::hash64(&[global_seed, v.0 as u64, metapath_index as u64])
}

/// The metapath-based sequence of `v`: up to `k` sampled instances for every
/// catalog metapath starting at `v`'s type, in catalog order. A node without
/// any instance is represented by its own text.
pub fn build_node_sequence<'a>(
    graph: &HeteroGraph,
    v: NodeId,
    metapaths: impl IntoIterator<Item = (usize, &'a Metapath)>,
    k: usize,
    seed: u64,
    mode: TextMode,
    sampler: &InstanceSampler,
) -> Result<String> {
    let mut segments = Vec::new();
    for (index, metapath) in metapaths {
        let instances = sampler.sample(graph, v, metapath, k, instance_seed(seed, v, index))?;
        segments.extend(instances.iter().map(|inst| textualize_instance(graph, inst, mode)));
    }
    if segments.is_empty() {
        segments.push(textualize_node(graph, v, mode).into_string());
    }
    Ok(join_segments(&segments))
}
