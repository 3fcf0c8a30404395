//! GML reader/writer.
//!
//! A GML document is a list of `key value` pairs where a value is an
//! integer, a real, a double-quoted string or a bracketed nested list.
//! Strings carry no backslash escapes; `&quot;`-style entities are decoded.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};

use super::flat::{FlatEdge, FlatGraph, FlatNode};

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(i64),
    Real(f64),
    Str(String),
    List(Vec<(String, Value)>),
}

impl Value {
    fn scalar_text(&self) -> Option<String> {
        match self {
            Value::Int(i) => Some(i.to_string()),
            Value::Real(r) => Some(r.to_string()),
            Value::Str(s) => Some(s.clone()),
            Value::List(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Key(String),
    Int(i64),
    Real(f64),
    Str(String),
    Open,
    Close,
}

struct Lexer<'a> {
    src: &'a str,
    pos: usize,
}

fn syntax(position: usize, message: impl Into<String>) -> Error {
    Error::Syntax {
        format: "GML",
        position,
        message: message.into(),
    }
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, pos: 0 }
    }

    fn skip_blank(&mut self) {
        let bytes = self.src.as_bytes();
        while self.pos < bytes.len() {
            match bytes[self.pos] {
                b' ' | b'\t' | b'\r' | b'\n' => self.pos += 1,
                b'#' => {
                    while self.pos < bytes.len() && bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                _ => break,
            }
        }
    }

    fn next(&mut self) -> Result<Option<(usize, Token)>> {
        self.skip_blank();
        let bytes = self.src.as_bytes();
        let start = self.pos;
        let Some(&c) = bytes.get(start) else {
            return Ok(None);
        };
        let token = match c {
            b'[' => {
                self.pos += 1;
                Token::Open
            }
            b']' => {
                self.pos += 1;
                Token::Close
            }
            b'"' => {
                let body_start = start + 1;
                let end = self.src[body_start..]
                    .find('"')
                    .ok_or_else(|| syntax(start, "unterminated string"))?;
                self.pos = body_start + end + 1;
                Token::Str(decode_entities(&self.src[body_start..body_start + end]))
            }
            c if c.is_ascii_alphabetic() || c == b'_' => {
                while self.pos < bytes.len()
                    && (bytes[self.pos].is_ascii_alphanumeric() || bytes[self.pos] == b'_')
                {
                    self.pos += 1;
                }
                Token::Key(self.src[start..self.pos].to_string())
            }
            c if c.is_ascii_digit() || c == b'-' || c == b'+' || c == b'.' => {
                while self.pos < bytes.len()
                    && matches!(bytes[self.pos], b'0'..=b'9' | b'-' | b'+' | b'.' | b'e' | b'E')
                {
                    self.pos += 1;
                }
                let text = &self.src[start..self.pos];
                if let Ok(i) = text.parse::<i64>() {
                    Token::Int(i)
                } else if let Ok(r) = text.parse::<f64>() {
                    Token::Real(r)
                } else {
                    return Err(syntax(start, format!("bad number `{text}`")));
                }
            }
            _ => {
                let ch = self.src[start..].chars().next().unwrap();
                return Err(syntax(start, format!("unexpected character `{ch}`")));
            }
        };
        Ok(Some((start, token)))
    }
}

fn decode_entities(s: &str) -> String {
    if !s.contains('&') {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len());
    let mut rest = s;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        rest = &rest[i..];
        let Some(end) = rest.find(';') else {
            break;
        };
        let entity = &rest[1..end];
        let decoded = match entity {
            "quot" => Some('"'),
            "amp" => Some('&'),
            "lt" => Some('<'),
            "gt" => Some('>'),
            "apos" => Some('\''),
            e if e.starts_with("#x") => u32::from_str_radix(&e[2..], 16).ok().and_then(char::from_u32),
            e if e.starts_with('#') => e[1..].parse().ok().and_then(char::from_u32),
            _ => None,
        };
        match decoded {
            Some(c) => {
                out.push(c);
                rest = &rest[end + 1..];
            }
            None => {
                out.push('&');
                rest = &rest[1..];
            }
        }
    }
    out.push_str(rest);
    out
}

fn encode_entities(s: &str) -> String {
    s.replace('&', "&amp;").replace('"', "&quot;")
}

fn parse_list(lexer: &mut Lexer<'_>, nested: Option<usize>) -> Result<Vec<(String, Value)>> {
    let mut items = Vec::new();
    loop {
        let Some((pos, tok)) = lexer.next()? else {
            return match nested {
                Some(open) => Err(syntax(open, "unclosed `[`")),
                None => Ok(items),
            };
        };
        let key = match tok {
            Token::Key(k) => k,
            Token::Close if nested.is_some() => return Ok(items),
            Token::Close => return Err(syntax(pos, "unbalanced `]`")),
            other => return Err(syntax(pos, format!("expected a key, found {other:?}"))),
        };
        let Some((vpos, vtok)) = lexer.next()? else {
            return Err(syntax(lexer.pos, format!("key `{key}` has no value")));
        };
        let value = match vtok {
            Token::Int(i) => Value::Int(i),
            Token::Real(r) => Value::Real(r),
            Token::Str(s) => Value::Str(s),
            Token::Open => Value::List(parse_list(lexer, Some(vpos))?),
            other => return Err(syntax(vpos, format!("expected a value for `{key}`, found {other:?}"))),
        };
        items.push((key, value));
    }
}

fn record_attributes(
    items: &[(String, Value)],
    skip: &[&str],
) -> BTreeMap<String, String> {
    items
        .iter()
        .filter(|(k, _)| !skip.contains(&k.as_str()))
        .filter_map(|(k, v)| v.scalar_text().map(|t| (k.clone(), t)))
        .collect()
}

fn required(items: &[(String, Value)], key: &str, what: &str) -> Result<String> {
    items
        .iter()
        .find(|(k, _)| k == key)
        .and_then(|(_, v)| v.scalar_text())
        .ok_or_else(|| syntax(0, format!("{what} without `{key}`")))
}

pub fn parse_gml(text: &str) -> Result<FlatGraph> {
    let mut lexer = Lexer::new(text);
    let top = parse_list(&mut lexer, None)?;
    let graph = top
        .iter()
        .find_map(|(k, v)| match (k.as_str(), v) {
            ("graph", Value::List(items)) => Some(items),
            _ => None,
        })
        .ok_or_else(|| syntax(0, "no `graph [ ... ]` block"))?;

    let mut flat = FlatGraph::default();
    for (key, value) in graph {
        match (key.as_str(), value) {
            ("directed", v) => flat.directed = matches!(v, Value::Int(1)),
            ("node", Value::List(items)) => flat.nodes.push(FlatNode {
                id: required(items, "id", "node")?,
                attributes: record_attributes(items, &["id"]),
            }),
            ("edge", Value::List(items)) => flat.edges.push(FlatEdge {
                source: required(items, "source", "edge")?,
                target: required(items, "target", "edge")?,
                attributes: record_attributes(items, &["source", "target"]),
            }),
            _ => {}
        }
    }
    Ok(flat)
}

pub fn write_gml(flat: &FlatGraph) -> String {
    fn id(s: &str) -> String {
        if s.parse::<i64>().is_ok() {
            s.to_string()
        } else {
            format!("\"{}\"", encode_entities(s))
        }
    }
    let mut out = String::from("graph [\n");
    if flat.directed {
        out.push_str("  directed 1\n");
    }
    for n in &flat.nodes {
        let _ = writeln!(out, "  node [\n    id {}", id(&n.id));
        for (k, v) in &n.attributes {
            let _ = writeln!(out, "    {k} \"{}\"", encode_entities(v));
        }
        out.push_str("  ]\n");
    }
    for e in &flat.edges {
        let _ = writeln!(out, "  edge [\n    source {}\n    target {}", id(&e.source), id(&e.target));
        for (k, v) in &e.attributes {
            let _ = writeln!(out, "    {k} \"{}\"", encode_entities(v));
        }
        out.push_str("  ]\n");
    }
    out.push_str("]\n");
    out
}
