//! Metapath templates, enumeration over a schema, whitelist parsing and
//! seeded instance sampling.

use std::collections::HashSet;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{EdgeTypeId, HeteroGraph, NodeId, NodeTypeId, Schema};
use crate::seed;

/// Walk restarts allowed per requested instance before giving up on it.
pub const MAX_RESTARTS: usize = 50;

/// A symmetric type-level path `A1 -R1-> A2 ... -Rl-> A1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Metapath {
    node_types: Vec<NodeTypeId>,
    edge_types: Vec<EdgeTypeId>,
}

impl Metapath {
    pub fn new(
        node_types: Vec<NodeTypeId>,
        edge_types: Vec<EdgeTypeId>,
        schema: &Schema,
    ) -> Result<Self> {
        if edge_types.is_empty() {
            return Err(Error::Metapath("a metapath needs at least one edge".into()));
        }
        if node_types.len() != edge_types.len() + 1 {
            return Err(Error::Metapath(format!(
                "{} node types cannot frame {} edge types",
                node_types.len(),
                edge_types.len()
            )));
        }
        if node_types.first() != node_types.last() {
            return Err(Error::Metapath(format!(
                "metapath must start and end at the same node type, got {} .. {}",
                schema.node_type_name(node_types[0]),
                schema.node_type_name(*node_types.last().unwrap())
            )));
        }
        for (i, &e) in edge_types.iter().enumerate() {
            if !schema.has_triple(node_types[i], e, node_types[i + 1]) {
                return Err(Error::Metapath(format!(
                    "relation ({}, {}, {}) does not occur in the graph",
                    schema.node_type_name(node_types[i]),
                    schema.edge_type_name(e),
                    schema.node_type_name(node_types[i + 1])
                )));
            }
        }
        Ok(Metapath {
            node_types,
            edge_types,
        })
    }

    pub fn node_types(&self) -> &[NodeTypeId] {
        &self.node_types
    }

    pub fn edge_types(&self) -> &[EdgeTypeId] {
        &self.edge_types
    }

    /// Number of edges.
    pub fn len(&self) -> usize {
        self.edge_types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edge_types.is_empty()
    }

    pub fn start_type(&self) -> NodeTypeId {
        self.node_types[0]
    }

    /// Upper-case initials of the node types, e.g. `MAM`.
    pub fn abbreviation(&self, schema: &Schema) -> String {
        self.node_types
            .iter()
            .map(|&t| {
                schema
                    .node_type_name(t)
                    .chars()
                    .next()
                    .map(|c| c.to_ascii_uppercase())
                    .unwrap_or('?')
            })
            .collect()
    }

    /// Whitelist-file form: `movie was acted by actor acted in movie`.
    pub fn display(&self, schema: &Schema) -> String {
        let mut parts = vec![schema.node_type_name(self.node_types[0]).to_string()];
        for (e, n) in self.edge_types.iter().zip(&self.node_types[1..]) {
            parts.push(schema.edge_type_name(*e).to_string());
            parts.push(schema.node_type_name(*n).to_string());
        }
        parts.join(" ")
    }
}

/// All symmetric metapaths with `1..=max_edges` edges whose start type does
/// not recur at an interior position, ordered by
/// `(length, node types, edge types)`.
pub fn enumerate_metapaths(schema: &Schema, max_edges: usize) -> Result<Vec<Metapath>> {
    if max_edges == 0 {
        return Err(Error::InvalidArgument("max_edges must be at least 1".into()));
    }
    if schema.triples.is_empty() {
        return Err(Error::Metapath("no edge types".into()));
    }
    let mut found = Vec::new();
    for start in 0..schema.node_types.len() {
        let start = NodeTypeId(start as u16);
        let mut nodes = vec![start];
        let mut edges = Vec::new();
        extend_paths(schema, max_edges, &mut nodes, &mut edges, &mut found);
    }
    found.sort_by(|a: &Metapath, b| {
        (a.len(), &a.node_types, &a.edge_types).cmp(&(b.len(), &b.node_types, &b.edge_types))
    });
    found.dedup();
    Ok(found)
}

fn extend_paths(
    schema: &Schema,
    max_edges: usize,
    nodes: &mut Vec<NodeTypeId>,
    edges: &mut Vec<EdgeTypeId>,
    out: &mut Vec<Metapath>,
) {
    // first return to the start type closes the path; longer walks through
    // it would just concatenate shorter metapaths
    if !edges.is_empty() && nodes.first() == nodes.last() {
        out.push(Metapath {
            node_types: nodes.clone(),
            edge_types: edges.clone(),
        });
        return;
    }
    if edges.len() == max_edges {
        return;
    }
    let tail = *nodes.last().unwrap();
    for &(s, e, d) in schema.triples.range((tail, EdgeTypeId(0), NodeTypeId(0))..) {
        if s != tail {
            break;
        }
        nodes.push(d);
        edges.push(e);
        extend_paths(schema, max_edges, nodes, edges, out);
        nodes.pop();
        edges.pop();
    }
}

/// Parses a whitelist: one metapath per line, alternating node-type and
/// edge-type names separated by whitespace. Names may themselves contain
/// spaces; they are matched longest-first against the schema.
pub fn parse_metapaths(text: &str, schema: &Schema, origin: &Path) -> Result<Vec<Metapath>> {
    let node_names: Vec<Vec<&str>> = schema
        .node_types
        .iter()
        .map(|n| n.split_whitespace().collect())
        .collect();
    let edge_names: Vec<Vec<&str>> = schema
        .edge_types
        .iter()
        .map(|n| n.split_whitespace().collect())
        .collect();

    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        let mut nodes = Vec::new();
        let mut edges = Vec::new();
        if !parse_alternating(&words, &node_names, &edge_names, &mut nodes, &mut edges) {
            return Err(Error::parse(
                origin,
                lineno + 1,
                format!("cannot read `{line}` as node/edge type names"),
            ));
        }
        let mp = Metapath::new(
            nodes.into_iter().map(|i| NodeTypeId(i as u16)).collect(),
            edges.into_iter().map(|i| EdgeTypeId(i as u16)).collect(),
            schema,
        )
        .map_err(|e| Error::parse(origin, lineno + 1, e.to_string()))?;
        out.push(mp);
    }
    Ok(out)
}

// Node name, then (edge name, node name)*, consuming every word.
fn parse_alternating(
    words: &[&str],
    node_names: &[Vec<&str>],
    edge_names: &[Vec<&str>],
    nodes: &mut Vec<usize>,
    edges: &mut Vec<usize>,
) -> bool {
    for (ni, name) in longest_first(words, node_names) {
        nodes.push(ni);
        let rest = &words[name..];
        if rest.is_empty() {
            return true;
        }
        for (ei, ename) in longest_first(rest, edge_names) {
            edges.push(ei);
            if parse_alternating(&rest[ename..], node_names, edge_names, nodes, edges) {
                return true;
            }
            edges.pop();
        }
        nodes.pop();
    }
    false
}

fn longest_first(words: &[&str], names: &[Vec<&str>]) -> Vec<(usize, usize)> {
    let mut hits: Vec<(usize, usize)> = names
        .iter()
        .enumerate()
        .filter(|(_, n)| !n.is_empty() && words.starts_with(n))
        .map(|(i, n)| (i, n.len()))
        .collect();
    hits.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    hits
}

/// A concrete path conforming to a metapath.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MetapathInstance {
    pub nodes: Vec<NodeId>,
    pub edges: Vec<EdgeTypeId>,
}

impl MetapathInstance {
    /// Checks the instance against the graph and the generating metapath.
    pub fn is_valid(&self, graph: &HeteroGraph, metapath: &Metapath) -> bool {
        self.nodes.len() == metapath.node_types.len()
            && self.edges == metapath.edge_types
            && self
                .nodes
                .iter()
                .zip(&metapath.node_types)
                .all(|(&v, &t)| graph.contains(v) && graph.node_type(v) == t)
            && self
                .nodes
                .windows(2)
                .zip(&self.edges)
                .all(|(w, &e)| graph.has_edge(w[0], w[1], e))
    }
}

/// Random-walk sampler for metapath instances.
#[derive(Debug, Clone, Copy)]
pub struct InstanceSampler {
    pub max_restarts: usize,
    /// Directed `(src, dst)` pair whose edges are hidden from the walk, used
    /// when the pair is itself a link-prediction query. Edges from `dst`
    /// back to `src` stay visible.
    pub exclude: Option<(NodeId, NodeId)>,
}

impl Default for InstanceSampler {
    fn default() -> Self {
        InstanceSampler {
            max_restarts: MAX_RESTARTS,
            exclude: None,
        }
    }
}

impl InstanceSampler {
    pub fn excluding(pair: Option<(NodeId, NodeId)>) -> Self {
        InstanceSampler {
            exclude: pair,
            ..Self::default()
        }
    }

    fn blocked(&self, a: NodeId, b: NodeId) -> bool {
        match self.exclude {
            Some((x, y)) => a == x && b == y,
            None => false,
        }
    }

    /// Up to `k` distinct instances anchored at `v`, in sampling order.
    pub fn sample(
        &self,
        graph: &HeteroGraph,
        v: NodeId,
        metapath: &Metapath,
        k: usize,
        seed: u64,
    ) -> Result<Vec<MetapathInstance>> {
        if k == 0 {
            return Err(Error::InvalidArgument("k must be at least 1".into()));
        }
        if !graph.contains(v) {
            return Err(Error::InvalidArgument(format!("node {v} is not in the graph")));
        }
        if graph.node_type(v) != metapath.start_type() {
            return Err(Error::Metapath(format!(
                "node {v} has type {} but the metapath starts at {}",
                graph.node_type_name(v),
                graph.schema().node_type_name(metapath.start_type())
            )));
        }

        let mut rng = seed::rng(&[seed]);
        let mut out: Vec<MetapathInstance> = Vec::new();
        let mut seen: HashSet<Vec<NodeId>> = HashSet::new();
        let mut candidates = Vec::new();

        'request: while out.len() < k {
            for _ in 0..self.max_restarts {
                let mut nodes = Vec::with_capacity(metapath.node_types.len());
                nodes.push(v);
                let mut cur = v;
                for (step, &edge_type) in metapath.edge_types.iter().enumerate() {
                    let want = metapath.node_types[step + 1];
                    candidates.clear();
                    candidates.extend(
                        graph
                            .neighbors(cur, edge_type)
                            .iter()
                            .copied()
                            .filter(|&u| graph.node_type(u) == want && !self.blocked(cur, u)),
                    );
                    if candidates.is_empty() {
                        if step == 0 {
                            // nothing leaves the anchor, so no walk can ever succeed
                            break 'request;
                        }
                        break;
                    }
                    cur = candidates[rng.random_range(0..candidates.len())];
                    nodes.push(cur);
                }
                if nodes.len() == metapath.node_types.len() && seen.insert(nodes.clone()) {
                    out.push(MetapathInstance {
                        nodes,
                        edges: metapath.edge_types.clone(),
                    });
                    continue 'request;
                }
            }
            break;
        }
        Ok(out)
    }
}

/// [`InstanceSampler::sample`] with default settings.
pub fn sample_instances(
    graph: &HeteroGraph,
    v: NodeId,
    metapath: &Metapath,
    k: usize,
    seed: u64,
) -> Result<Vec<MetapathInstance>> {
    InstanceSampler::default().sample(graph, v, metapath, k, seed)
}
