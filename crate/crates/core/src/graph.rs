//! Typed, attributed, directed multigraph with a per-node, per-edge-type
//! adjacency index.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeTypeId(pub u16);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EdgeTypeId(pub u16);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeId,
    pub dst: NodeId,
    pub edge_type: EdgeTypeId,
}

/// Type-level view of a graph: names plus the set of
/// `(source type, edge type, target type)` triples that occur.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Schema {
    pub node_types: Vec<String>,
    pub edge_types: Vec<String>,
    pub triples: BTreeSet<(NodeTypeId, EdgeTypeId, NodeTypeId)>,
}

impl Schema {
    pub fn node_type_id(&self, name: &str) -> Option<NodeTypeId> {
        self.node_types
            .iter()
            .position(|n| n == name)
            .map(|i| NodeTypeId(i as u16))
    }

    pub fn edge_type_id(&self, name: &str) -> Option<EdgeTypeId> {
        self.edge_types
            .iter()
            .position(|n| n == name)
            .map(|i| EdgeTypeId(i as u16))
    }

    pub fn node_type_name(&self, t: NodeTypeId) -> &str {
        &self.node_types[t.0 as usize]
    }

    pub fn edge_type_name(&self, t: EdgeTypeId) -> &str {
        &self.edge_types[t.0 as usize]
    }

    pub fn has_triple(&self, src: NodeTypeId, edge: EdgeTypeId, dst: NodeTypeId) -> bool {
        self.triples.contains(&(src, edge, dst))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeteroGraph {
    schema: Schema,
    node_types: Vec<NodeTypeId>,
    attributes: Vec<String>,
    edges: Vec<Edge>,
    // CSR over out-edges sorted by (edge type, dst)
    offsets: Vec<usize>,
    out_types: Vec<EdgeTypeId>,
    out_dsts: Vec<NodeId>,
}

impl HeteroGraph {
    pub fn builder() -> HeteroGraphBuilder {
        HeteroGraphBuilder::default()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, v: NodeId) -> bool {
        v.index() < self.num_nodes()
    }

    pub fn node_type(&self, v: NodeId) -> NodeTypeId {
        self.node_types[v.index()]
    }

    pub fn node_type_name(&self, v: NodeId) -> &str {
        self.schema.node_type_name(self.node_type(v))
    }

    pub fn edge_type_name(&self, t: EdgeTypeId) -> &str {
        self.schema.edge_type_name(t)
    }

    pub fn attribute(&self, v: NodeId) -> &str {
        &self.attributes[v.index()]
    }

    /// Edges sorted by `(src, edge type, dst)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn nodes(&self) -> impl ExactSizeIterator<Item = NodeId> {
        (0..self.num_nodes() as u32).map(NodeId)
    }

    pub fn nodes_of_type(&self, t: NodeTypeId) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes().filter(move |&v| self.node_type(v) == t)
    }

    /// Out-neighbours of `v` along `edge_type`, ascending by id.
    pub fn neighbors(&self, v: NodeId, edge_type: EdgeTypeId) -> &[NodeId] {
        let (lo, hi) = (self.offsets[v.index()], self.offsets[v.index() + 1]);
        let types = &self.out_types[lo..hi];
        let start = types.partition_point(|&t| t < edge_type);
        let end = types.partition_point(|&t| t <= edge_type);
        &self.out_dsts[lo + start..lo + end]
    }

    /// All out-edges of `v` as `(edge type, dst)` pairs.
    pub fn out_edges(&self, v: NodeId) -> impl Iterator<Item = (EdgeTypeId, NodeId)> + '_ {
        let (lo, hi) = (self.offsets[v.index()], self.offsets[v.index() + 1]);
        self.out_types[lo..hi]
            .iter()
            .copied()
            .zip(self.out_dsts[lo..hi].iter().copied())
    }

    pub fn has_edge(&self, src: NodeId, dst: NodeId, edge_type: EdgeTypeId) -> bool {
        self.neighbors(src, edge_type).binary_search(&dst).is_ok()
    }

    /// True when any edge, of any type, leads from `src` to `dst`.
    pub fn is_adjacent(&self, src: NodeId, dst: NodeId) -> bool {
        self.out_edges(src).any(|(_, d)| d == dst)
    }
}

#[derive(Debug, Default, Clone)]
pub struct HeteroGraphBuilder {
    node_type_names: Vec<String>,
    edge_type_names: Vec<String>,
    node_types: Vec<NodeTypeId>,
    attributes: Vec<String>,
    edges: Vec<Edge>,
}

impl HeteroGraphBuilder {
    /// Registers a node type, returning the existing id if the name is known.
    pub fn node_type(&mut self, name: &str) -> NodeTypeId {
        intern(&mut self.node_type_names, name, NodeTypeId)
    }

    pub fn edge_type(&mut self, name: &str) -> EdgeTypeId {
        intern(&mut self.edge_type_names, name, EdgeTypeId)
    }

    pub fn add_node(&mut self, node_type: NodeTypeId, attribute: impl Into<String>) -> NodeId {
        let id = NodeId(self.node_types.len() as u32);
        self.node_types.push(node_type);
        self.attributes.push(attribute.into());
        id
    }

    pub fn add_edge(&mut self, src: NodeId, dst: NodeId, edge_type: EdgeTypeId) {
        self.edges.push(Edge {
            src,
            dst,
            edge_type,
        });
    }

    pub fn num_nodes(&self) -> usize {
        self.node_types.len()
    }

    pub fn build(mut self) -> Result<HeteroGraph> {
        let n = self.node_types.len();
        for t in &self.node_types {
            if t.0 as usize >= self.node_type_names.len() {
                return Err(Error::Graph(format!("unknown node type id {}", t.0)));
            }
        }
        for e in &self.edges {
            if e.src.index() >= n || e.dst.index() >= n {
                return Err(Error::Graph(format!(
                    "edge {} -> {} references a missing node",
                    e.src, e.dst
                )));
            }
            if e.edge_type.0 as usize >= self.edge_type_names.len() {
                return Err(Error::Graph(format!("unknown edge type id {}", e.edge_type.0)));
            }
        }
        if self.node_type_names.len() + self.edge_type_names.len() <= 2 {
            return Err(Error::Graph(format!(
                "not heterogeneous: {} node types + {} edge types must exceed 2",
                self.node_type_names.len(),
                self.edge_type_names.len()
            )));
        }

        self.edges.sort_by_key(|e| (e.src, e.edge_type, e.dst));
        self.edges.dedup();

        let mut offsets = vec![0usize; n + 1];
        for e in &self.edges {
            offsets[e.src.index() + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let out_types = self.edges.iter().map(|e| e.edge_type).collect();
        let out_dsts = self.edges.iter().map(|e| e.dst).collect();

        let triples = self
            .edges
            .iter()
            .map(|e| {
                (
                    self.node_types[e.src.index()],
                    e.edge_type,
                    self.node_types[e.dst.index()],
                )
            })
            .collect();

        Ok(HeteroGraph {
            schema: Schema {
                node_types: self.node_type_names,
                edge_types: self.edge_type_names,
                triples,
            },
            node_types: self.node_types,
            attributes: self.attributes,
            edges: self.edges,
            offsets,
            out_types,
            out_dsts,
        })
    }
}

fn intern<T>(names: &mut Vec<String>, name: &str, wrap: impl Fn(u16) -> T) -> T {
    match names.iter().position(|n| n == name) {
        Some(i) => wrap(i as u16),
        None => {
            names.push(name.to_string());
            wrap((names.len() - 1) as u16)
        }
    }
}
