//! Task sequences, corpus entries, masking, link-prediction example
//! generation and the JSONL corpus format.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{EdgeTypeId, HeteroGraph, NodeId};
use crate::ingest::flat::{flatten_lines, FlatGraph};
use crate::metapath::InstanceSampler;
use crate::seed;
use crate::text::{build_node_sequence, join_segments, textualize_node, TextMode};

pub const TARGET: &str = "<target>";
pub const MASK: &str = "<mask>";
pub const NO_RELATION: &str = "<no relation>";

/// Wraps a category or relation name as an atomic label, `comedy` → `<comedy>`.
pub fn label_token(name: &str) -> String {
    format!("<{name}>")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TaskKind {
    #[serde(rename = "nc")]
    NodeClassification,
    #[serde(rename = "lp")]
    LinkPrediction,
}

impl TaskKind {
    /// Number of metapath-sequence prefixes an entry of this task carries.
    pub fn prefix_count(self) -> usize {
        match self {
            TaskKind::NodeClassification => 1,
            TaskKind::LinkPrediction => 2,
        }
    }

    pub fn code(self) -> &'static str {
        match self {
            TaskKind::NodeClassification => "nc",
            TaskKind::LinkPrediction => "lp",
        }
    }
}

impl FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nc" => Ok(TaskKind::NodeClassification),
            "lp" => Ok(TaskKind::LinkPrediction),
            other => Err(Error::InvalidArgument(format!("unknown task `{other}` (expected nc or lp)"))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

/// A task on one dataset with its constrained label vocabulary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    pub dataset: String,
    /// Bracketed labels, e.g. `<comedy>`.
    pub labels: Vec<String>,
}

impl TaskSpec {
    pub fn new(kind: TaskKind, dataset: impl Into<String>, labels: Vec<String>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l) {
                return Err(Error::Data(format!("duplicate label `{l}`")));
            }
        }
        if labels.is_empty() {
            return Err(Error::Data("a task needs at least one label".into()));
        }
        Ok(TaskSpec {
            kind,
            dataset: dataset.into(),
            labels,
        })
    }

    pub fn node_classification(dataset: &Dataset) -> Result<Self> {
        Self::new(
            TaskKind::NodeClassification,
            &dataset.name,
            dataset.categories.iter().map(|c| label_token(c)).collect(),
        )
    }

    /// Relation labels (in edge-type order, optionally restricted) plus
    /// `<no relation>`.
    pub fn link_prediction(dataset: &Dataset, edge_types: Option<&[EdgeTypeId]>) -> Result<Self> {
        let schema = dataset.graph.schema();
        let mut labels: Vec<String> = (0..schema.edge_types.len())
            .map(|i| EdgeTypeId(i as u16))
            .filter(|e| edge_types.is_none_or(|f| f.contains(e)))
            .map(|e| label_token(schema.edge_type_name(e)))
            .collect();
        labels.push(NO_RELATION.to_string());
        Self::new(TaskKind::LinkPrediction, &dataset.name, labels)
    }

    pub fn contains(&self, label: &str) -> bool {
        self.labels.iter().any(|l| l == label)
    }
}

pub fn nc_template(object: &str) -> Result<String> {
    if object.trim().is_empty() {
        return Err(Error::InvalidArgument("empty object text".into()));
    }
    Ok(format!("You can deduce the category of {object} as {TARGET}."))
}

pub fn lp_template(src: &str, dst: &str) -> Result<String> {
    if src.trim().is_empty() || dst.trim().is_empty() {
        return Err(Error::InvalidArgument("empty node text".into()));
    }
    Ok(format!("You can deduce {src} {TARGET} {dst}."))
}

fn check_label(label: &str, labels: &[String]) -> Result<()> {
    if labels.iter().any(|l| l == label) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("label `{label}` is not in the task's label set")))
    }
}

/// `You can deduce the category of <object> as <label>.`
pub fn render_nc_task(object: &str, label: &str, labels: &[String]) -> Result<String> {
    check_label(label, labels)?;
    Ok(nc_template(object)?.replace(TARGET, label))
}

/// `You can deduce <src> <label> <dst>.`
pub fn render_lp_task(src: &str, dst: &str, label: &str, labels: &[String]) -> Result<String> {
    check_label(label, labels)?;
    Ok(lp_template(src, dst)?.replace(TARGET, label))
}

/// Content hash of an entry's full text, rendered as 16 hex digits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EntryId(pub u64);

impl fmt::Display for EntryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

impl FromStr for EntryId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        u64::from_str_radix(s, 16)
            .map(EntryId)
            .map_err(|_| Error::InvalidArgument(format!("`{s}` is not a hex entry id")))
    }
}

impl Serialize for EntryId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EntryId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

fn count_placeholders(text: &str, marker: &str) -> usize {
    text.matches(marker).count()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub id: EntryId,
    pub task: TaskKind,
    pub dataset: String,
    /// One metapath-based sequence per related node, without brackets.
    pub prefix: Vec<String>,
    /// Task sentence holding exactly one `<target>`.
    pub task_text: String,
    pub target: String,
    pub vocab: Vec<String>,
}

impl CorpusEntry {
    fn render(prefix: &[String], task_text: &str) -> String {
        let mut out = String::new();
        for p in prefix {
            out.push('[');
            out.push_str(p);
            out.push_str("] ");
        }
        out.push_str(task_text);
        out
    }

    /// `[MS_1] ... [MS_M] task` with the target filled in.
    pub fn full_text(&self) -> String {
        Self::render(&self.prefix, &self.task_text.replace(TARGET, &self.target))
    }
}

pub fn assemble_entry(
    task: TaskKind,
    dataset: &str,
    prefix: Vec<String>,
    task_text: String,
    target: &str,
    vocab: &[String],
) -> Result<CorpusEntry> {
    if prefix.len() != task.prefix_count() {
        return Err(Error::InvalidArgument(format!(
            "{} entries take {} prefix sequence(s), got {}",
            task,
            task.prefix_count(),
            prefix.len()
        )));
    }
    if count_placeholders(&task_text, TARGET) != 1 {
        return Err(Error::InvalidArgument(format!(
            "task text must hold exactly one {TARGET}: `{task_text}`"
        )));
    }
    check_label(target, vocab)?;
    let full = CorpusEntry::render(&prefix, &task_text.replace(TARGET, target));
    Ok(CorpusEntry {
        id: EntryId(seed::content_hash(&full)),
        task,
        dataset: dataset.to_string(),
        prefix,
        task_text,
        target: target.to_string(),
        vocab: vocab.to_vec(),
    })
}

/// One corpus line: the entry text with its label replaced by `<mask>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskedEntry {
    pub entry_id: EntryId,
    pub task: TaskKind,
    pub dataset: String,
    pub text: String,
    pub target: String,
    pub vocab: Vec<String>,
}

impl MaskedEntry {
    /// The original text, label restored.
    pub fn unmask(&self) -> String {
        self.text.replacen(MASK, &self.target, 1)
    }

    pub fn target_index(&self) -> Option<usize> {
        self.vocab.iter().position(|l| *l == self.target)
    }

    pub fn validate(&self) -> Result<()> {
        if count_placeholders(&self.text, MASK) != 1 {
            return Err(Error::Data(format!(
                "entry {} must contain exactly one {MASK}",
                self.entry_id
            )));
        }
        if self.target_index().is_none() {
            return Err(Error::Data(format!(
                "entry {}: target `{}` is outside its vocabulary",
                self.entry_id, self.target
            )));
        }
        Ok(())
    }
}

pub fn mask_entry(entry: &CorpusEntry) -> Result<MaskedEntry> {
    let n = count_placeholders(&entry.task_text, TARGET);
    if n != 1 {
        return Err(Error::Data(format!("entry {} has {n} placeholders, expected 1", entry.id)));
    }
    let text = CorpusEntry::render(&entry.prefix, &entry.task_text.replace(TARGET, MASK));
    if count_placeholders(&text, MASK) != 1 {
        return Err(Error::Data(format!("entry {} has a stray {MASK}", entry.id)));
    }
    Ok(MaskedEntry {
        entry_id: entry.id,
        task: entry.task,
        dataset: entry.dataset.clone(),
        text,
        target: entry.target.clone(),
        vocab: entry.vocab.clone(),
    })
}

/// A candidate link; `relation` is `None` for sampled non-edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkExample {
    pub src: NodeId,
    pub dst: NodeId,
    pub relation: Option<EdgeTypeId>,
}

/// Attempts per negative before declaring the graph too dense.
const NEGATIVE_ATTEMPTS: usize = 1000;

/// Every edge (optionally restricted to `edge_types`) as a positive, plus
/// `round(ratio * positives)` distinct non-adjacent pairs whose endpoint
/// types match a positive's endpoint types.
pub fn generate_lp_examples(
    graph: &HeteroGraph,
    edge_types: Option<&[EdgeTypeId]>,
    negative_ratio: f64,
    seed: u64,
) -> Result<Vec<LinkExample>> {
    if !(negative_ratio >= 0.0) || !negative_ratio.is_finite() {
        return Err(Error::InvalidArgument(format!("negative ratio {negative_ratio} must be >= 0")));
    }
    let mut examples: Vec<LinkExample> = graph
        .edges()
        .iter()
        .filter(|e| edge_types.is_none_or(|f| f.contains(&e.edge_type)))
        .map(|e| LinkExample {
            src: e.src,
            dst: e.dst,
            relation: Some(e.edge_type),
        })
        .collect();
    let positives = examples.len();
    let wanted = (negative_ratio * positives as f64).round() as usize;
    if wanted == 0 {
        return Ok(examples);
    }

    let mut by_type: HashMap<_, Vec<NodeId>> = HashMap::new();
    for v in graph.nodes() {
        by_type.entry(graph.node_type(v)).or_default().push(v);
    }
    let mut rng = seed::rng(&[seed, 0x6e65_6761_7469_7665]);
    let mut taken = BTreeSet::new();
    for i in 0..wanted {
        let template = examples[i % positives];
        let srcs = &by_type[&graph.node_type(template.src)];
        let dsts = &by_type[&graph.node_type(template.dst)];
        let mut found = false;
        for _ in 0..NEGATIVE_ATTEMPTS {
            let s = srcs[rng.random_range(0..srcs.len())];
            let d = dsts[rng.random_range(0..dsts.len())];
            if s != d && !graph.is_adjacent(s, d) && taken.insert((s, d)) {
                examples.push(LinkExample {
                    src: s,
                    dst: d,
                    relation: None,
                });
                found = true;
                break;
            }
        }
        if !found {
            return Err(Error::Data(format!(
                "could not find negative pair {} of {wanted} after {NEGATIVE_ATTEMPTS} attempts; graph too dense",
                i + 1
            )));
        }
    }
    Ok(examples)
}

/// How a node's prefix sequence is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PrefixFormat {
    /// Sampled metapath instances.
    #[default]
    #[serde(rename = "metapath")]
    Metapath,
    /// Node record plus incident edge records, GML/GraphML style.
    #[serde(rename = "flat")]
    Flat,
    /// The node's own text only.
    #[serde(rename = "attribute")]
    Attribute,
}

impl FromStr for PrefixFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "metapath" => Ok(PrefixFormat::Metapath),
            "flat" | "gml" | "graphml" => Ok(PrefixFormat::Flat),
            "attribute" | "attr" => Ok(PrefixFormat::Attribute),
            other => Err(Error::InvalidArgument(format!(
                "unknown prefix format `{other}` (expected metapath, flat or attribute)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub tasks: Vec<TaskKind>,
    pub mode: TextMode,
    pub format: PrefixFormat,
    /// Instances sampled per metapath.
    pub k: usize,
    pub negative_ratio: f64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            tasks: vec![TaskKind::NodeClassification, TaskKind::LinkPrediction],
            mode: TextMode::Both,
            format: PrefixFormat::Metapath,
            k: 3,
            negative_ratio: 1.0,
            seed: 0,
        }
    }
}

struct PrefixBuilder<'a> {
    dataset: &'a Dataset,
    config: &'a CorpusConfig,
    flat: Option<(FlatGraph, HashMap<String, Vec<usize>>)>,
}

impl<'a> PrefixBuilder<'a> {
    fn new(dataset: &'a Dataset, config: &'a CorpusConfig) -> Self {
        let flat = (config.format == PrefixFormat::Flat).then(|| {
            let flat = FlatGraph::from_graph(&dataset.graph, config.mode);
            let index = flat.incident_index();
            (flat, index)
        });
        PrefixBuilder {
            dataset,
            config,
            flat,
        }
    }

    fn sequence(&self, v: NodeId, exclude: Option<(NodeId, NodeId)>) -> Result<String> {
        let graph = &self.dataset.graph;
        match self.config.format {
            PrefixFormat::Metapath => build_node_sequence(
                graph,
                v,
                self.dataset.metapaths_from(v),
                self.config.k,
                self.config.seed,
                self.config.mode,
                &InstanceSampler::excluding(exclude),
            ),
            PrefixFormat::Flat => {
                let (flat, index) = self.flat.as_ref().expect("flat view built for flat format");
                let hidden = exclude.map(|(a, b)| (a.to_string(), b.to_string()));
                let lines = flatten_lines(flat, index, &v.to_string(), hidden.as_ref())?;
                Ok(join_segments(&lines))
            }
            PrefixFormat::Attribute => {
                Ok(join_segments(&[textualize_node(graph, v, self.config.mode).into_string()]))
            }
        }
    }
}

/// Corpus entries for every labelled node and/or every link example of
/// `dataset`, in a deterministic order (NC by node id, then LP by example).
pub fn build_corpus(dataset: &Dataset, config: &CorpusConfig) -> Result<Vec<CorpusEntry>> {
    if config.k == 0 {
        return Err(Error::InvalidArgument("k must be at least 1".into()));
    }
    let graph = &dataset.graph;
    let prefixes = PrefixBuilder::new(dataset, config);
    let mut entries = Vec::new();

    if config.tasks.contains(&TaskKind::NodeClassification) && !dataset.labels.is_empty() {
        let spec = TaskSpec::node_classification(dataset)?;
        let nc: Result<Vec<CorpusEntry>> = dataset
            .labels
            .par_iter()
            .map(|&(v, c)| {
                let prefix = prefixes.sequence(v, None)?;
                let object = textualize_node(graph, v, config.mode);
                assemble_entry(
                    TaskKind::NodeClassification,
                    &dataset.name,
                    vec![prefix],
                    nc_template(object.as_str())?,
                    &spec.labels[c],
                    &spec.labels,
                )
            })
            .collect();
        entries.extend(nc?);
    }

    if config.tasks.contains(&TaskKind::LinkPrediction) {
        let spec = TaskSpec::link_prediction(dataset, None)?;
        let examples = generate_lp_examples(graph, None, config.negative_ratio, config.seed)?;
        let lp: Result<Vec<CorpusEntry>> = examples
            .par_iter()
            .map(|ex| {
                let pair = Some((ex.src, ex.dst));
                let prefix = vec![prefixes.sequence(ex.src, pair)?, prefixes.sequence(ex.dst, pair)?];
                let src = textualize_node(graph, ex.src, config.mode);
                let dst = textualize_node(graph, ex.dst, config.mode);
                let label = match ex.relation {
                    Some(e) => label_token(graph.edge_type_name(e)),
                    None => NO_RELATION.to_string(),
                };
                assemble_entry(
                    TaskKind::LinkPrediction,
                    &dataset.name,
                    prefix,
                    lp_template(src.as_str(), dst.as_str())?,
                    &label,
                    &spec.labels,
                )
            })
            .collect();
        entries.extend(lp?);
    }
    Ok(entries)
}

pub fn write_jsonl(path: &Path, entries: &[MaskedEntry]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl(path: &Path) -> Result<Vec<MaskedEntry>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: MaskedEntry = serde_json::from_str(&line)
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        entry
            .validate()
            .map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        out.push(entry);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(xs: &[&str]) -> Vec<String> {
        xs.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn nc_rendering() {
        let l = labels(&["<cardiovascular disease>", "<glandular disease>", "<cancer>"]);
        assert_eq!(
            render_nc_task("disease breasts", "<glandular disease>", &l).unwrap(),
            "You can deduce the category of disease breasts as <glandular disease>."
        );
        assert!(render_nc_task("", "<cancer>", &l).is_err());
        assert!(render_nc_task("disease breasts", "<comedy>", &l).is_err());
    }

    #[test]
    fn lp_rendering_and_inverse() {
        let l = labels(&["<causing>", "<no relation>"]);
        let text = render_lp_task(
            "gene thyroid transcription factor-1",
            "disease bronchial abnormalities",
            "<causing>",
            &l,
        )
        .unwrap();
        assert_eq!(
            text,
            "You can deduce gene thyroid transcription factor-1 <causing> disease bronchial abnormalities."
        );
        let template = lp_template("gene thyroid transcription factor-1", "disease bronchial abnormalities").unwrap();
        let at = template.find(TARGET).unwrap();
        let label = &text[at..at + text.len() - template.len() + TARGET.len()];
        assert_eq!(label, "<causing>");
    }

    #[test]
    fn lp_entry_with_fallback_prefixes() {
        let l = labels(&["<r>", NO_RELATION]);
        let e = assemble_entry(
            TaskKind::LinkPrediction,
            "toy",
            vec!["a x </s>".into(), "b y </s>".into()],
            lp_template("a x", "b y").unwrap(),
            "<r>",
            &l,
        )
        .unwrap();
        assert_eq!(e.full_text(), "[a x </s>] [b y </s>] You can deduce a x <r> b y.");
        let again = assemble_entry(
            TaskKind::LinkPrediction,
            "toy",
            vec!["a x </s>".into(), "b y </s>".into()],
            lp_template("a x", "b y").unwrap(),
            "<r>",
            &l,
        )
        .unwrap();
        assert_eq!(e.id, again.id);

        let wrong_m = assemble_entry(
            TaskKind::LinkPrediction,
            "toy",
            vec!["a x </s>".into()],
            lp_template("a x", "b y").unwrap(),
            "<r>",
            &l,
        );
        assert!(wrong_m.is_err());
    }

    #[test]
    fn masking_replaces_only_the_label() {
        let l = labels(&["<was acted by>", NO_RELATION]);
        let e = assemble_entry(
            TaskKind::LinkPrediction,
            "imdb",
            vec!["movie Pixels </s>".into(), "actor Adam Sandler </s>".into()],
            lp_template("movie Pixels", "actor Adam Sandler").unwrap(),
            "<was acted by>",
            &l,
        )
        .unwrap();
        let m = mask_entry(&e).unwrap();
        assert!(m.text.ends_with("You can deduce movie Pixels <mask> actor Adam Sandler."));
        assert_eq!(m.unmask(), e.full_text());
        m.validate().unwrap();
    }

    #[test]
    fn mask_rejects_broken_entries() {
        let mut e = assemble_entry(
            TaskKind::NodeClassification,
            "d",
            vec!["x </s>".into()],
            nc_template("x").unwrap(),
            "<a>",
            &labels(&["<a>"]),
        )
        .unwrap();
        e.task_text = "no placeholder".into();
        assert!(mask_entry(&e).is_err());
        e.task_text = "<target> <target>".into();
        assert!(mask_entry(&e).is_err());
    }

    #[test]
    fn entry_id_hex_round_trip() {
        let id = EntryId(0x00ab_cdef_0123_4567);
        assert_eq!(id.to_string(), "00abcdef01234567");
        assert_eq!("00abcdef01234567".parse::<EntryId>().unwrap(), id);
    }
}
