use serde::{Deserialize, Serialize};

use crate::graph::{HeteroGraph, NodeId, NodeTypeId};
use crate::metapath::Metapath;

/// A graph together with its node-classification labels and metapath
/// catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub graph: HeteroGraph,
    pub target_type: NodeTypeId,
    /// Category names without angle brackets, e.g. `comedy`.
    pub categories: Vec<String>,
    /// `(node, index into categories)`, ascending by node.
    pub labels: Vec<(NodeId, usize)>,
    /// Catalog order is the order metapaths are textualized in.
    pub metapaths: Vec<Metapath>,
}

impl Dataset {
    pub fn label_of(&self, v: NodeId) -> Option<usize> {
        self.labels
            .binary_search_by_key(&v, |&(n, _)| n)
            .ok()
            .map(|i| self.labels[i].1)
    }

    /// Catalog entries usable from `v`, paired with their catalog index.
    pub fn metapaths_from(&self, v: NodeId) -> impl Iterator<Item = (usize, &Metapath)> {
        let t = self.graph.node_type(v);
        self.metapaths
            .iter()
            .enumerate()
            .filter(move |(_, p)| p.start_type() == t)
    }

    pub fn to_bytes(&self) -> crate::Result<Vec<u8>> {
        Ok(bincode::serialize(self)?)
    }

    pub fn from_bytes(bytes: &[u8]) -> crate::Result<Self> {
        Ok(bincode::deserialize(bytes)?)
    }
}
