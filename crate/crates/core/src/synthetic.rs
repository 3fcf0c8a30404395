//! Seeded synthetic heterogeneous graphs whose labels are a pure function of
//! structure, for training sanity checks and transfer experiments.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::graph::{HeteroGraph, NodeId};
use crate::metapath::Metapath;
use crate::seed;

/// Items linked to neighbours of several types; an item's class is the
/// type it has the most neighbours of.
#[derive(Debug, Clone, PartialEq)]
pub struct PluralityConfig {
    pub name: String,
    pub items: usize,
    /// Neighbour type names; these double as the category names.
    pub neighbor_types: Vec<String>,
    /// Neighbour count of the winning type is drawn from
    /// `min_winner..=max_winner`; every other type gets strictly fewer.
    pub min_winner: usize,
    pub max_winner: usize,
    /// Words used for attribute text; empty leaves attributes blank.
    pub vocabulary: Vec<String>,
    pub seed: u64,
}

impl Default for PluralityConfig {
    fn default() -> Self {
        PluralityConfig {
            name: "plurality".into(),
            items: 100,
            neighbor_types: vec!["alpha".into(), "beta".into(), "gamma".into()],
            min_winner: 2,
            max_winner: 3,
            vocabulary: Vec::new(),
            seed: 0,
        }
    }
}

const ITEM: &str = "item";
const OUT: &str = "links to";
const BACK: &str = "is linked from";

fn attribute(rng: &mut impl Rng, words: &[String]) -> String {
    if words.is_empty() {
        return String::new();
    }
    (0..2).map(|_| words[rng.random_range(0..words.len())].as_str()).collect::<Vec<_>>().join(" ")
}

/// Builds the graph. Classes are balanced (item `i` gets class
/// `i mod |types|` before shuffling); each neighbour belongs to exactly one
/// item, so every metapath instance from an item returns to it.
pub fn plurality_dataset(config: &PluralityConfig) -> Result<Dataset> {
    let n_types = config.neighbor_types.len();
    if n_types < 2 {
        return Err(Error::InvalidArgument("need at least two neighbour types".into()));
    }
    if config.min_winner == 0 || config.min_winner > config.max_winner {
        return Err(Error::InvalidArgument("need 1 <= min_winner <= max_winner".into()));
    }
    let mut rng = seed::rng(&[config.seed, seed::str_seed(&config.name)]);
    let mut b = HeteroGraph::builder();
    let item = b.node_type(ITEM);
    let types: Vec<_> = config.neighbor_types.iter().map(|t| b.node_type(t)).collect();
    let out = b.edge_type(OUT);
    let back = b.edge_type(BACK);

    let mut classes: Vec<usize> = (0..config.items).map(|i| i % n_types).collect();
    classes.shuffle(&mut rng);
    let mut items = Vec::with_capacity(config.items);
    for _ in 0..config.items {
        items.push(b.add_node(item, attribute(&mut rng, &config.vocabulary)));
    }
    let mut labels = Vec::with_capacity(config.items);
    for (&v, &class) in items.iter().zip(&classes) {
        let winner = rng.random_range(config.min_winner..=config.max_winner);
        let mut counts: Vec<usize> = (0..n_types).map(|_| rng.random_range(0..winner)).collect();
        counts[class] = winner;
        // interleave neighbour creation so ids carry no class signal
        let mut order: Vec<usize> = counts.iter().enumerate().flat_map(|(t, &c)| std::iter::repeat_n(t, c)).collect();
        order.shuffle(&mut rng);
        for t in order {
            let u = b.add_node(types[t], attribute(&mut rng, &config.vocabulary));
            b.add_edge(v, u, out);
            b.add_edge(u, v, back);
        }
        labels.push((v, class));
    }
    let graph = b.build()?;
    let metapaths = types
        .iter()
        .map(|&t| Metapath::new(vec![item, t, item], vec![out, back], graph.schema()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        name: config.name.clone(),
        graph,
        target_type: item,
        categories: config.neighbor_types.clone(),
        labels,
        metapaths,
    })
}

/// The plurality class of an item recomputed from the graph, used to check
/// generated labels independently of the generator.
pub fn plurality_class(dataset: &Dataset, v: NodeId) -> Option<usize> {
    let g = &dataset.graph;
    let mut counts = vec![0usize; dataset.categories.len()];
    for (_, u) in g.out_edges(v) {
        let name = g.node_type_name(u);
        if let Some(c) = dataset.categories.iter().position(|x| x == name) {
            counts[c] += 1;
        }
    }
    let max = *counts.iter().max()?;
    let winners: Vec<usize> = (0..counts.len()).filter(|&c| counts[c] == max).collect();
    (winners.len() == 1).then(|| winners[0])
}
