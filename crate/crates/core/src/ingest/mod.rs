//! Dataset loading: the native TSV bundle, plus GML / GraphML readers that
//! produce a flat node/edge listing.

pub mod flat;
pub mod gml;
pub mod graphml;

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeId};
use crate::metapath::parse_metapaths;

pub use flat::{flatten_to_text, FlatEdge, FlatGraph, FlatNode};
pub use gml::{parse_gml, write_gml};
pub use graphml::{parse_graphml, write_graphml};

/// Contents of `bundle.toml`. File paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub name: String,
    pub target_node_type: String,
    pub categories: Vec<String>,
    /// Declared node types; rows using any other type are rejected.
    #[serde(default)]
    pub node_types: Vec<String>,
    #[serde(default)]
    pub edge_types: Vec<String>,
    #[serde(default = "default_nodes")]
    pub nodes: PathBuf,
    #[serde(default = "default_edges")]
    pub edges: PathBuf,
    #[serde(default = "default_labels")]
    pub labels: PathBuf,
    #[serde(default = "default_metapaths")]
    pub metapaths: PathBuf,
}

fn default_nodes() -> PathBuf {
    "nodes.tsv".into()
}
fn default_edges() -> PathBuf {
    "edges.tsv".into()
}
fn default_labels() -> PathBuf {
    "labels.tsv".into()
}
fn default_metapaths() -> PathBuf {
    "metapaths.txt".into()
}

impl DatasetBundle {
    pub fn read(manifest: &Path) -> Result<(Self, PathBuf)> {
        let text = fs::read_to_string(manifest)?;
        let bundle: DatasetBundle = toml::from_str(&text)?;
        let base = manifest
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Ok((bundle, base))
    }
}

/// Reads `bundle.toml` and the files it names.
pub fn load_bundle_file(manifest: &Path) -> Result<Dataset> {
    let (bundle, base) = DatasetBundle::read(manifest)?;
    load_bundle(&bundle, &base)
}

pub fn load_bundle(bundle: &DatasetBundle, base: &Path) -> Result<Dataset> {
    let mut seen = BTreeSet::new();
    if bundle.categories.is_empty() {
        return Err(Error::Data(format!("{}: no categories declared", bundle.name)));
    }
    for c in &bundle.categories {
        if !seen.insert(c.as_str()) {
            return Err(Error::Data(format!("{}: duplicate category `{c}`", bundle.name)));
        }
    }

    let mut b = HeteroGraph::builder();
    for t in &bundle.node_types {
        b.node_type(t);
    }
    for t in &bundle.edge_types {
        b.edge_type(t);
    }
    let strict_nodes = !bundle.node_types.is_empty();
    let strict_edges = !bundle.edge_types.is_empty();

    let nodes_path = base.join(&bundle.nodes);
    let mut ids: HashMap<String, NodeId> = HashMap::new();
    for (lineno, line) in read_lines(&nodes_path)? {
        let mut cols = line.splitn(3, '\t');
        let (Some(id), Some(ty)) = (cols.next(), cols.next()) else {
            return Err(Error::parse(&nodes_path, lineno, "expected node_id<TAB>node_type<TAB>attribute"));
        };
        let attribute = cols.next().unwrap_or("").trim_end_matches('\r');
        if strict_nodes && !bundle.node_types.iter().any(|t| t == ty) {
            return Err(Error::parse(&nodes_path, lineno, format!("unknown node type `{ty}`")));
        }
        let t = b.node_type(ty);
        if ids.contains_key(id) {
            return Err(Error::parse(&nodes_path, lineno, format!("duplicate node id `{id}`")));
        }
        let v = b.add_node(t, attribute);
        ids.insert(id.to_string(), v);
    }

    let edges_path = base.join(&bundle.edges);
    for (lineno, line) in read_lines(&edges_path)? {
        let cols: Vec<&str> = line.trim_end_matches('\r').splitn(3, '\t').collect();
        if cols.len() != 3 {
            return Err(Error::parse(&edges_path, lineno, "expected src_id<TAB>dst_id<TAB>edge_type"));
        }
        let lookup = |id: &str| {
            ids.get(id).copied().ok_or_else(|| {
                Error::parse(&edges_path, lineno, format!("edge endpoint `{id}` is not a known node"))
            })
        };
        let (src, dst) = (lookup(cols[0])?, lookup(cols[1])?);
        if strict_edges && !bundle.edge_types.iter().any(|t| t == cols[2]) {
            return Err(Error::parse(&edges_path, lineno, format!("unknown edge type `{}`", cols[2])));
        }
        let e = b.edge_type(cols[2]);
        b.add_edge(src, dst, e);
    }
    let graph = b.build()?;

    let target_type = graph.schema().node_type_id(&bundle.target_node_type).ok_or_else(|| {
        Error::Data(format!("target node type `{}` has no nodes", bundle.target_node_type))
    })?;

    let labels_path = base.join(&bundle.labels);
    let mut labels = Vec::new();
    let mut labelled = BTreeSet::new();
    if labels_path.exists() {
        for (lineno, line) in read_lines(&labels_path)? {
            let cols: Vec<&str> = line.trim_end_matches('\r').splitn(2, '\t').collect();
            if cols.len() != 2 {
                return Err(Error::parse(&labels_path, lineno, "expected node_id<TAB>category"));
            }
            let v = *ids.get(cols[0]).ok_or_else(|| {
                Error::parse(&labels_path, lineno, format!("unknown node `{}`", cols[0]))
            })?;
            if graph.node_type(v) != target_type {
                return Err(Error::parse(
                    &labels_path,
                    lineno,
                    format!("node `{}` is not a {}", cols[0], bundle.target_node_type),
                ));
            }
            let c = bundle.categories.iter().position(|c| c == cols[1]).ok_or_else(|| {
                Error::parse(&labels_path, lineno, format!("unknown category `{}`", cols[1]))
            })?;
            if !labelled.insert(v) {
                return Err(Error::parse(&labels_path, lineno, format!("node `{}` labelled twice", cols[0])));
            }
            labels.push((v, c));
        }
    }
    labels.sort();

    let mp_path = base.join(&bundle.metapaths);
    let metapaths = if mp_path.exists() {
        parse_metapaths(&fs::read_to_string(&mp_path)?, graph.schema(), &mp_path)?
    } else {
        Vec::new()
    };

    Ok(Dataset {
        name: bundle.name.clone(),
        graph,
        target_type,
        categories: bundle.categories.clone(),
        labels,
        metapaths,
    })
}

fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let text = fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    Ok(text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
        .map(|(i, l)| (i + 1, l.to_string()))
        .collect())
}

/// Writes `dataset` as a TSV bundle into `dir`, using dense ids as node ids.
pub fn write_bundle(dataset: &Dataset, dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let g = &dataset.graph;
    let schema = g.schema();

    let mut nodes = String::new();
    for v in g.nodes() {
        let attr = g.attribute(v);
        if attr.contains(['\t', '\n']) {
            return Err(Error::Data(format!("attribute of node {v} contains a tab or newline")));
        }
        nodes.push_str(&format!("{}\t{}\t{}\n", v, g.node_type_name(v), attr));
    }
    let mut edges = String::new();
    for e in g.edges() {
        edges.push_str(&format!("{}\t{}\t{}\n", e.src, e.dst, g.edge_type_name(e.edge_type)));
    }
    let mut labels = String::new();
    for &(v, c) in &dataset.labels {
        labels.push_str(&format!("{}\t{}\n", v, dataset.categories[c]));
    }
    let mut metapaths = String::new();
    for p in &dataset.metapaths {
        metapaths.push_str(&p.display(schema));
        metapaths.push('\n');
    }
    fs::write(dir.join("nodes.tsv"), nodes)?;
    fs::write(dir.join("edges.tsv"), edges)?;
    fs::write(dir.join("labels.tsv"), labels)?;
    fs::write(dir.join("metapaths.txt"), metapaths)?;

    let bundle = DatasetBundle {
        name: dataset.name.clone(),
        target_node_type: schema.node_type_name(dataset.target_type).to_string(),
        categories: dataset.categories.clone(),
        node_types: schema.node_types.clone(),
        edge_types: schema.edge_types.clone(),
        nodes: default_nodes(),
        edges: default_edges(),
        labels: default_labels(),
        metapaths: default_metapaths(),
    };
    let manifest = dir.join("bundle.toml");
    fs::write(
        &manifest,
        toml::to_string(&bundle).map_err(|e| Error::Data(e.to_string()))?,
    )?;
    Ok(manifest)
}
