//! Word-level tokenizer with atomic label tokens.
//!
//! Text is split on whitespace; ASCII punctuation becomes its own token;
//! reserved markers (`<mask>`, `</s>`, ...) and bracketed labels are matched
//! whole, longest first, even when they contain spaces.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::corpus::MaskedEntry;
use crate::error::{Error, Result};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const MASK: &str = "<mask>";
pub const SEP: &str = "</s>";

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const MASK_ID: u32 = 2;
pub const SEP_ID: u32 = 3;

const RESERVED: [&str; 4] = [PAD, UNK, MASK, SEP];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Special,
    Label,
    Word,
}

impl TokenKind {
    fn code(self) -> &'static str {
        match self {
            TokenKind::Special => "special",
            TokenKind::Label => "label",
            TokenKind::Word => "word",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        match s {
            "special" => Some(TokenKind::Special),
            "label" => Some(TokenKind::Label),
            "word" => Some(TokenKind::Word),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocab {
    tokens: Vec<String>,
    kinds: Vec<TokenKind>,
    ids: HashMap<String, u32>,
    /// Specials and labels, longest first, for atomic matching.
    atomic: Vec<String>,
}

/// Splits `text` into tokens, keeping any of `atomic` whole.
fn split_with(text: &str, atomic: &[String]) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    let mut rest = text;
    while let Some(c) = rest.chars().next() {
        if c == '<' {
            if let Some(a) = atomic.iter().find(|a| rest.starts_with(a.as_str())) {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(a.clone());
                rest = &rest[a.len()..];
                continue;
            }
        }
        if c.is_whitespace() {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
        } else if c.is_ascii_punctuation() {
            if !word.is_empty() {
                out.push(std::mem::take(&mut word));
            }
            out.push(c.to_string());
        } else {
            word.push(c);
        }
        rest = &rest[c.len_utf8()..];
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

fn sorted_atomic<'a>(tokens: impl Iterator<Item = &'a String>) -> Vec<String> {
    let mut atomic: Vec<String> = tokens.cloned().collect();
    atomic.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    atomic
}

fn is_label(token: &str) -> bool {
    token.len() > 2 && token.starts_with('<') && token.ends_with('>') && !RESERVED.contains(&token)
}

impl Vocab {
    /// Reserved tokens, then `labels` sorted, then every other token of
    /// `texts` sorted. Words seen fewer than `min_count` times map to `<unk>`.
    pub fn build<'a, L, T>(labels: L, texts: T, min_count: usize) -> Result<Self>
    where
        L: IntoIterator<Item = &'a str>,
        T: IntoIterator<Item = &'a str>,
    {
        let mut label_set = BTreeSet::new();
        for l in labels {
            if !is_label(l) {
                return Err(Error::InvalidArgument(format!(
                    "label `{l}` must be bracketed and not a reserved token"
                )));
            }
            if l.contains(['\t', '\n']) {
                return Err(Error::InvalidArgument(format!("label `{l}` contains a tab or newline")));
            }
            label_set.insert(l.to_string());
        }
        let reserved: Vec<String> = RESERVED.iter().map(|s| s.to_string()).collect();
        let atomic = sorted_atomic(reserved.iter().chain(&label_set));
        let mut counts: HashMap<String, usize> = HashMap::new();
        for t in texts {
            for tok in split_with(t, &atomic) {
                if !RESERVED.contains(&tok.as_str()) && !label_set.contains(&tok) {
                    *counts.entry(tok).or_default() += 1;
                }
            }
        }
        let words: BTreeSet<String> = counts
            .into_iter()
            .filter(|(_, n)| *n >= min_count.max(1))
            .map(|(w, _)| w)
            .collect();

        let mut tokens = Vec::new();
        let mut kinds = Vec::new();
        for r in RESERVED {
            tokens.push(r.to_string());
            kinds.push(TokenKind::Special);
        }
        for l in label_set {
            tokens.push(l);
            kinds.push(TokenKind::Label);
        }
        for w in words {
            tokens.push(w);
            kinds.push(TokenKind::Word);
        }
        Self::from_parts(tokens, kinds)
    }

    fn from_parts(tokens: Vec<String>, kinds: Vec<TokenKind>) -> Result<Self> {
        for (i, r) in RESERVED.iter().enumerate() {
            if tokens.get(i).map(String::as_str) != Some(*r) {
                return Err(Error::Data(format!("vocabulary must start with the reserved token {r} at id {i}")));
            }
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as u32).is_some() {
                return Err(Error::Data(format!("duplicate token `{t}` in vocabulary")));
            }
        }
        let atomic = sorted_atomic(
            tokens
                .iter()
                .zip(&kinds)
                .filter(|(_, k)| **k != TokenKind::Word)
                .map(|(t, _)| t),
        );
        Ok(Vocab {
            tokens,
            kinds,
            ids,
            atomic,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.ids.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn kind(&self, id: u32) -> Option<TokenKind> {
        self.kinds.get(id as usize).copied()
    }

    pub fn is_label_id(&self, id: u32) -> bool {
        self.kind(id) == Some(TokenKind::Label)
    }

    pub fn pre_tokenize(&self, text: &str) -> Vec<String> {
        split_with(text, &self.atomic)
    }

    fn ids_of(&self, tokens: &[String]) -> Vec<u32> {
        tokens.iter().map(|t| self.id(t).unwrap_or(UNK_ID)).collect()
    }

    pub fn encode(&self, text: &str) -> Vec<u32> {
        self.ids_of(&self.pre_tokenize(text))
    }

    /// Tokens joined by single spaces, padding dropped.
    pub fn decode(&self, ids: &[u32]) -> Result<String> {
        let mut out = Vec::with_capacity(ids.len());
        for &i in ids.iter().filter(|&&i| i != PAD_ID) {
            out.push(
                self.token(i)
                    .ok_or_else(|| Error::InvalidArgument(format!("token id {i} outside the vocabulary")))?,
            );
        }
        Ok(out.join(" "))
    }

    /// `token \t id \t kind` per line, in id order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for (i, (t, k)) in self.tokens.iter().zip(&self.kinds).enumerate() {
            let _ = writeln!(out, "{t}\t{i}\t{}", k.code());
        }
        out
    }

    pub fn from_tsv(text: &str, origin: &Path) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut kinds = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let [token, id, kind] = fields[..] else {
                return Err(Error::parse(origin, n + 1, "expected `token<TAB>id<TAB>kind`"));
            };
            let id: usize = id
                .parse()
                .map_err(|_| Error::parse(origin, n + 1, format!("bad id `{id}`")))?;
            if id != tokens.len() {
                return Err(Error::parse(origin, n + 1, format!("id {id} out of sequence")));
            }
            let kind = TokenKind::parse(kind)
                .ok_or_else(|| Error::parse(origin, n + 1, format!("unknown token kind `{kind}`")))?;
            tokens.push(token.to_string());
            kinds.push(kind);
        }
        Self::from_parts(tokens, kinds)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_tsv(&fs::read_to_string(path)?, path)
    }

    /// Token ids of an entry ready for the model, truncated to `max_len`.
    pub fn encode_entry(&self, entry: &MaskedEntry, max_len: usize) -> Result<EncodedEntry> {
        let tokens = fit_to_length(self.pre_tokenize(&entry.text), max_len).ok_or_else(|| {
            Error::Data(format!(
                "entry {}: task sentence alone exceeds the {max_len}-token limit",
                entry.entry_id
            ))
        })?;
        let ids = self.ids_of(&tokens);
        let masks: Vec<usize> = ids
            .iter()
            .enumerate()
            .filter(|(_, &t)| t == MASK_ID)
            .map(|(i, _)| i)
            .collect();
        let [mask_pos] = masks[..] else {
            return Err(Error::Data(format!(
                "entry {} has {} mask tokens after tokenization",
                entry.entry_id,
                masks.len()
            )));
        };
        let mut candidates = Vec::with_capacity(entry.vocab.len());
        for l in &entry.vocab {
            match self.id(l) {
                Some(id) if self.is_label_id(id) => candidates.push(id),
                _ => {
                    return Err(Error::Data(format!(
                        "entry {}: label `{l}` is not a label token of the vocabulary",
                        entry.entry_id
                    )))
                }
            }
        }
        let target = entry.target_index().ok_or_else(|| {
            Error::Data(format!("entry {}: target outside its vocabulary", entry.entry_id))
        })?;
        Ok(EncodedEntry {
            ids,
            mask_pos,
            candidates,
            target,
        })
    }
}

/// Model input for one entry.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedEntry {
    pub ids: Vec<u32>,
    pub mask_pos: usize,
    /// Label token ids the prediction is restricted to.
    pub candidates: Vec<u32>,
    /// Index of the gold label in `candidates`.
    pub target: usize,
}

impl EncodedEntry {
    pub fn target_id(&self) -> u32 {
        self.candidates[self.target]
    }

    /// The ids right-padded with `<pad>` to `len` (never shortened).
    pub fn padded(&self, len: usize) -> Vec<u32> {
        let mut ids = self.ids.clone();
        if ids.len() < len {
            ids.resize(len, PAD_ID);
        }
        ids
    }
}

/// `[` instance `</s>` ... `</s>` `]` blocks followed by the task sentence.
struct Layout {
    blocks: Vec<Vec<Vec<String>>>,
    task: Vec<String>,
}

impl Layout {
    fn parse(tokens: &[String]) -> Self {
        let mut blocks = Vec::new();
        let mut i = 0;
        'blocks: while tokens.get(i).map(String::as_str) == Some("[") {
            let mut instances = Vec::new();
            let mut current = Vec::new();
            let mut j = i + 1;
            while j < tokens.len() {
                if tokens[j] == SEP {
                    instances.push(std::mem::take(&mut current));
                    if tokens.get(j + 1).map(String::as_str) == Some("]") {
                        blocks.push(instances);
                        i = j + 2;
                        continue 'blocks;
                    }
                } else {
                    current.push(tokens[j].clone());
                }
                j += 1;
            }
            // not a well-formed block: the rest is task text
            break;
        }
        Layout {
            blocks,
            task: tokens[i..].to_vec(),
        }
    }

    fn block_len(block: &[Vec<String>]) -> usize {
        2 + block.iter().map(|inst| inst.len() + 1).sum::<usize>()
    }

    fn len(&self) -> usize {
        self.blocks.iter().map(|b| Self::block_len(b)).sum::<usize>() + self.task.len()
    }

    fn flatten(self) -> Vec<String> {
        let mut out = Vec::with_capacity(self.len());
        for block in self.blocks {
            out.push("[".to_string());
            for inst in block {
                out.extend(inst);
                out.push(SEP.to_string());
            }
            out.push("]".to_string());
        }
        out.extend(self.task);
        out
    }
}

/// Drops trailing instances, always from the block currently holding the
/// most (the later block on ties), until the sequence fits. An emptied block is removed with its
/// brackets. The task sentence is never shortened; `None` if it alone is
/// too long.
pub fn fit_to_length(tokens: Vec<String>, max_len: usize) -> Option<Vec<String>> {
    if tokens.len() <= max_len {
        return Some(tokens);
    }
    let mut layout = Layout::parse(&tokens);
    while layout.len() > max_len {
        let (b, _) = layout
            .blocks
            .iter()
            .enumerate()
            .max_by_key(|(_, blk)| blk.len())?;
        layout.blocks[b].pop();
        if layout.blocks[b].is_empty() {
            layout.blocks.remove(b);
        }
    }
    Some(layout.flatten())
}
