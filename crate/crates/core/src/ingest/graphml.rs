//! GraphML subset: `key` declarations (with optional `default`), one `graph`
//! with `node` / `edge` elements and their `data` children.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;

use crate::error::{Error, Result};

use super::flat::{FlatEdge, FlatGraph, FlatNode};

fn syntax(position: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        format: "GraphML",
        position,
        message: message.into(),
    }
}

struct KeyDecl {
    name: String,
    domain: String,
    default: Option<String>,
}

enum Owner {
    Node(FlatNode),
    Edge(FlatEdge),
}

fn attribute(e: &BytesStart<'_>, name: &str, pos: usize) -> Result<Option<String>> {
    for a in e.attributes() {
        let a = a.map_err(|err| syntax(pos, err.to_string()))?;
        if a.key.local_name().as_ref() == name.as_bytes() {
            let v = a
                .unescape_value()
                .map_err(|err| syntax(pos, err.to_string()))?;
            return Ok(Some(v.into_owned()));
        }
    }
    Ok(None)
}

pub fn parse_graphml(text: &str) -> Result<FlatGraph> {
    let mut reader = Reader::from_str(text);
    reader.config_mut().trim_text(true);

    let mut keys: BTreeMap<String, KeyDecl> = BTreeMap::new();
    let mut flat = FlatGraph::default();
    let mut owner: Option<Owner> = None;
    let mut open_key: Option<String> = None;
    let mut in_default = false;
    let mut data_key: Option<String> = None;
    let mut text_buf = String::new();
    let mut depth = 0usize;
    let mut saw_graph = false;

    loop {
        let pos = reader.buffer_position() as usize;
        let event = reader
            .read_event()
            .map_err(|e| syntax(reader.error_position() as usize, e.to_string()))?;
        match event {
            Event::Eof => break,
            Event::Start(ref e) | Event::Empty(ref e) => {
                let empty = matches!(event, Event::Empty(_));
                if !empty {
                    depth += 1;
                }
                let local = e.local_name();
                match local.as_ref() {
                    b"key" => {
                        let id = attribute(e, "id", pos)?
                            .ok_or_else(|| syntax(pos, "<key> without id"))?;
                        let name = attribute(e, "attr.name", pos)?.unwrap_or_else(|| id.clone());
                        let domain = attribute(e, "for", pos)?.unwrap_or_else(|| "all".into());
                        keys.insert(
                            id.clone(),
                            KeyDecl {
                                name,
                                domain,
                                default: None,
                            },
                        );
                        if !empty {
                            open_key = Some(id);
                        }
                    }
                    b"default" => {
                        in_default = !empty;
                        text_buf.clear();
                    }
                    b"graph" => {
                        saw_graph = true;
                        flat.directed =
                            attribute(e, "edgedefault", pos)?.as_deref() == Some("directed");
                    }
                    b"node" => {
                        let id = attribute(e, "id", pos)?
                            .ok_or_else(|| syntax(pos, "<node> without id"))?;
                        let node = FlatNode {
                            id,
                            attributes: BTreeMap::new(),
                        };
                        if empty {
                            flat.nodes.push(node);
                        } else {
                            owner = Some(Owner::Node(node));
                        }
                    }
                    b"edge" => {
                        let source = attribute(e, "source", pos)?
                            .ok_or_else(|| syntax(pos, "<edge> without source"))?;
                        let target = attribute(e, "target", pos)?
                            .ok_or_else(|| syntax(pos, "<edge> without target"))?;
                        let edge = FlatEdge {
                            source,
                            target,
                            attributes: BTreeMap::new(),
                        };
                        if empty {
                            flat.edges.push(edge);
                        } else {
                            owner = Some(Owner::Edge(edge));
                        }
                    }
                    b"data" => {
                        let key = attribute(e, "key", pos)?
                            .ok_or_else(|| syntax(pos, "<data> without key"))?;
                        text_buf.clear();
                        if empty {
                            store(&mut owner, &keys, &key, String::new());
                        } else {
                            data_key = Some(key);
                        }
                    }
                    _ => {}
                }
            }
            Event::Text(t) => {
                let s = t.unescape().map_err(|e| syntax(pos, e.to_string()))?;
                text_buf.push_str(&s);
            }
            Event::CData(t) => {
                text_buf.push_str(&String::from_utf8_lossy(&t));
            }
            Event::End(ref e) => {
                depth = depth
                    .checked_sub(1)
                    .ok_or_else(|| syntax(pos, "unbalanced closing tag"))?;
                match e.local_name().as_ref() {
                    b"default" if in_default => {
                        if let Some(k) = open_key.as_ref().and_then(|id| keys.get_mut(id)) {
                            k.default = Some(text_buf.clone());
                        }
                        in_default = false;
                    }
                    b"key" => open_key = None,
                    b"data" => {
                        if let Some(key) = data_key.take() {
                            store(&mut owner, &keys, &key, text_buf.clone());
                        }
                    }
                    b"node" | b"edge" => match owner.take() {
                        Some(Owner::Node(n)) => flat.nodes.push(n),
                        Some(Owner::Edge(e)) => flat.edges.push(e),
                        None => {}
                    },
                    _ => {}
                }
            }
            _ => {}
        }
    }
    if depth != 0 {
        return Err(syntax(text.len(), "document ends inside an open element"));
    }
    if !saw_graph {
        return Err(syntax(0, "no <graph> element"));
    }

    for key in keys.values() {
        let Some(default) = &key.default else { continue };
        if matches!(key.domain.as_str(), "node" | "all") {
            for n in &mut flat.nodes {
                n.attributes.entry(key.name.clone()).or_insert_with(|| default.clone());
            }
        }
        if matches!(key.domain.as_str(), "edge" | "all") {
            for e in &mut flat.edges {
                e.attributes.entry(key.name.clone()).or_insert_with(|| default.clone());
            }
        }
    }
    Ok(flat)
}

fn store(owner: &mut Option<Owner>, keys: &BTreeMap<String, KeyDecl>, key: &str, value: String) {
    let name = keys.get(key).map(|k| k.name.clone()).unwrap_or_else(|| key.to_string());
    match owner {
        Some(Owner::Node(n)) => {
            n.attributes.insert(name, value);
        }
        Some(Owner::Edge(e)) => {
            e.attributes.insert(name, value);
        }
        None => {}
    }
}

fn escape(s: &str) -> String {
    quick_xml::escape::escape(s).into_owned()
}

pub fn write_graphml(flat: &FlatGraph) -> String {
    let mut node_keys: Vec<&String> = flat.nodes.iter().flat_map(|n| n.attributes.keys()).collect();
    node_keys.sort();
    node_keys.dedup();
    let mut edge_keys: Vec<&String> = flat.edges.iter().flat_map(|e| e.attributes.keys()).collect();
    edge_keys.sort();
    edge_keys.dedup();

    let mut out = String::from(
        "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n<graphml xmlns=\"http://graphml.graphdrawing.org/xmlns\">\n",
    );
    for (i, k) in node_keys.iter().enumerate() {
        let _ = writeln!(
            out,
            "  <key id=\"n{i}\" for=\"node\" attr.name=\"{}\" attr.type=\"string\"/>",
            escape(k)
        );
    }
    for (i, k) in edge_keys.iter().enumerate() {
        let _ = writeln!(
            out,
            "  <key id=\"e{i}\" for=\"edge\" attr.name=\"{}\" attr.type=\"string\"/>",
            escape(k)
        );
    }
    let _ = writeln!(
        out,
        "  <graph edgedefault=\"{}\">",
        if flat.directed { "directed" } else { "undirected" }
    );
    for n in &flat.nodes {
        let _ = writeln!(out, "    <node id=\"{}\">", escape(&n.id));
        for (k, v) in &n.attributes {
            let i = node_keys.iter().position(|x| *x == k).unwrap();
            let _ = writeln!(out, "      <data key=\"n{i}\">{}</data>", escape(v));
        }
        out.push_str("    </node>\n");
    }
    for e in &flat.edges {
        let _ = writeln!(
            out,
            "    <edge source=\"{}\" target=\"{}\">",
            escape(&e.source),
            escape(&e.target)
        );
        for (k, v) in &e.attributes {
            let i = edge_keys.iter().position(|x| *x == k).unwrap();
            let _ = writeln!(out, "      <data key=\"e{i}\">{}</data>", escape(v));
        }
        out.push_str("    </edge>\n");
    }
    out.push_str("  </graph>\n</graphml>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"<?xml version="1.0" encoding="UTF-8"?>
<graphml xmlns="http://graphml.graphdrawing.org/xmlns">
  <key id="d0" for="node" attr.name="color" attr.type="string">
    <default>yellow</default>
  </key>
  <key id="d1" for="edge" attr.name="weight" attr.type="double"/>
  <graph id="G" edgedefault="undirected">
    <node id="n0"><data key="d0">green</data></node>
    <node id="n1"/>
    <edge id="e0" source="n0" target="n1"><data key="d1">1.0</data></edge>
  </graph>
</graphml>"#;

    #[test]
    fn keys_defaults_and_data() {
        let g = parse_graphml(SAMPLE).unwrap();
        assert!(!g.directed);
        assert_eq!(g.nodes.len(), 2);
        assert_eq!(g.nodes[0].attributes["color"], "green");
        assert_eq!(g.nodes[1].attributes["color"], "yellow");
        assert_eq!(g.edges[0].attributes["weight"], "1.0");
        assert_eq!((g.edges[0].source.as_str(), g.edges[0].target.as_str()), ("n0", "n1"));
    }

    #[test]
    fn empty_graph() {
        let g = parse_graphml("<graphml><graph edgedefault=\"directed\"></graph></graphml>").unwrap();
        assert!(g.directed && g.nodes.is_empty() && g.edges.is_empty());
    }

    #[test]
    fn malformed_xml_is_rejected() {
        assert!(parse_graphml("<graphml><graph><node id=\"a\"></graph></graphml>").is_err());
        assert!(parse_graphml("<graphml><graph><node id=\"a\"/>").is_err());
        assert!(parse_graphml("<graphml><graph><node/></graph></graphml>").is_err());
    }

    #[test]
    fn escaped_text_round_trips() {
        let g = FlatGraph {
            directed: true,
            nodes: vec![FlatNode {
                id: "0".into(),
                attributes: [("label".to_string(), "Tom & <Jerry>".to_string())].into_iter().collect(),
            }],
            edges: vec![],
        };
        assert_eq!(parse_graphml(&write_graphml(&g)).unwrap(), g);
    }
}
