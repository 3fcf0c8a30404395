//! Format-neutral node/edge listing shared by the GML and GraphML readers.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeteroGraph;
use crate::text::TextMode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatNode {
    pub id: String,
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatEdge {
    pub source: String,
    pub target: String,
    pub attributes: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlatGraph {
    pub directed: bool,
    pub nodes: Vec<FlatNode>,
    pub edges: Vec<FlatEdge>,
}

/// Numeric ids compare as numbers, everything else lexicographically, and
/// numbers sort before non-numbers.
pub fn compare_ids(a: &str, b: &str) -> Ordering {
    match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        (Ok(_), Err(_)) => Ordering::Less,
        (Err(_), Ok(_)) => Ordering::Greater,
        _ => a.cmp(b),
    }
}

fn render_attributes(attrs: &BTreeMap<String, String>) -> String {
    let inner: Vec<String> = attrs.iter().map(|(k, v)| format!("{k}: {v}")).collect();
    format!("{{{}}}", inner.join(", "))
}

impl FlatGraph {
    /// Node and edge lists sorted by id / (source, target, attributes).
    pub fn canonical(mut self) -> Self {
        self.nodes.sort_by(|a, b| compare_ids(&a.id, &b.id));
        self.edges.sort_by(|a, b| {
            compare_ids(&a.source, &b.source)
                .then_with(|| compare_ids(&a.target, &b.target))
                .then_with(|| a.attributes.cmp(&b.attributes))
        });
        self
    }

    pub fn node(&self, id: &str) -> Option<&FlatNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Flat view of a typed graph: `type` and `label` attributes per node
    /// (filtered by `mode`), `type` per edge. Node ids are the dense ids.
    pub fn from_graph(graph: &HeteroGraph, mode: TextMode) -> Self {
        let nodes = graph
            .nodes()
            .map(|v| {
                let mut attributes = BTreeMap::new();
                if mode != TextMode::AttributeOnly {
                    attributes.insert("type".to_string(), graph.node_type_name(v).to_string());
                }
                if mode != TextMode::StructureOnly && !graph.attribute(v).is_empty() {
                    attributes.insert("label".to_string(), graph.attribute(v).to_string());
                }
                FlatNode {
                    id: v.to_string(),
                    attributes,
                }
            })
            .collect();
        let edges = graph
            .edges()
            .iter()
            .map(|e| FlatEdge {
                source: e.src.to_string(),
                target: e.dst.to_string(),
                attributes: [("type".to_string(), graph.edge_type_name(e.edge_type).to_string())]
                    .into_iter()
                    .collect(),
            })
            .collect();
        FlatGraph {
            directed: true,
            nodes,
            edges,
        }
    }

    /// Node id → positions in `edges` of the edges touching it.
    pub fn incident_index(&self) -> HashMap<String, Vec<usize>> {
        let mut index: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, e) in self.edges.iter().enumerate() {
            index.entry(e.source.clone()).or_default().push(i);
            if e.target != e.source {
                index.entry(e.target.clone()).or_default().push(i);
            }
        }
        index
    }
}

/// One `node` line for `id` followed by one `edge` line per incident edge,
/// edges ordered by (neighbour id, attributes).
///
/// ```text
/// node 0 {label: I Spy, type: movie}
/// edge 0 4 {type: was acted by}
/// ```
pub fn flatten_to_text(flat: &FlatGraph, id: &str) -> Result<String> {
    Ok(flatten_lines(flat, &flat.incident_index(), id, None)?.join("\n"))
}

/// [`flatten_to_text`] as separate lines, using a prebuilt incident index and
/// optionally hiding the edges from one node to another.
pub fn flatten_lines(
    flat: &FlatGraph,
    index: &HashMap<String, Vec<usize>>,
    id: &str,
    hidden: Option<&(String, String)>,
) -> Result<Vec<String>> {
    let node = flat
        .node(id)
        .ok_or_else(|| Error::InvalidArgument(format!("node `{id}` is not in the graph")))?;
    let is_hidden = |e: &FlatEdge| match hidden {
        Some((a, b)) => e.source == *a && e.target == *b,
        None => false,
    };
    let mut incident: Vec<(&str, &FlatEdge)> = index
        .get(id)
        .map(|v| v.as_slice())
        .unwrap_or_default()
        .iter()
        .map(|&i| &flat.edges[i])
        .filter(|e| !is_hidden(e))
        .map(|e| {
            let other = if e.source == id { &e.target } else { &e.source };
            (other.as_str(), e)
        })
        .collect();
    incident.sort_by(|a, b| {
        compare_ids(a.0, b.0)
            .then_with(|| a.1.attributes.cmp(&b.1.attributes))
            .then_with(|| compare_ids(&a.1.source, &b.1.source))
    });

    let mut lines = vec![format!("node {} {}", node.id, render_attributes(&node.attributes))];
    for (_, e) in incident {
        lines.push(format!(
            "edge {} {} {}",
            e.source,
            e.target,
            render_attributes(&e.attributes)
        ));
    }
    Ok(lines)
}
