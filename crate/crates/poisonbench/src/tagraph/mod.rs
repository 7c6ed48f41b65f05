//! Text-attributed graph data model, synthetic generation, subset sampling
//! and node splits.
//!
//! Graphs here are simple and undirected: no self-loops, no multi-edges.
//! Edges are stored canonically as `(u, v)` with `u < v`; an adjacency list
//! is built at construction and the whole structure is immutable afterwards.

mod io;
mod sbm;

pub use io::{load_graph, load_graph_dir, save_graph, GraphManifest};
pub use sbm::generate_synthetic_tag;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counters for input normalization performed while building a graph.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    /// Edges dropped because the same unordered pair appeared more than once
    /// (this includes directed inputs listing both `u v` and `v u`).
    pub duplicate_edges: usize,
    /// Self-loops dropped.
    pub self_loops: usize,
}

/// An undirected graph whose nodes carry raw text and a class label.
#[derive(Debug, Clone, PartialEq)]
pub struct TextAttributedGraph {
    num_nodes: usize,
    num_classes: usize,
    edges: Vec<(usize, usize)>,
    adj: Vec<Vec<usize>>,
    texts: Vec<String>,
    labels: Vec<usize>,
}

impl TextAttributedGraph {
    /// Builds a validated graph. Raw edges are symmetrized and deduplicated,
    /// self-loops are dropped; the returned report counts what was cleaned.
    pub fn new_with_report(
        num_nodes: usize,
        raw_edges: &[(usize, usize)],
        texts: Vec<String>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<(Self, LoadReport)> {
        if texts.len() != num_nodes || labels.len() != num_nodes {
            return Err(Error::Validation(format!(
                "expected {} texts and labels, got {} texts / {} labels",
                num_nodes,
                texts.len(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::Validation("num_classes must be positive".into()));
        }
        for (node, &label) in labels.iter().enumerate() {
            if label >= num_classes {
                return Err(Error::Validation(format!(
                    "node {node} has label {label}, outside [0, {num_classes})"
                )));
            }
        }

        let mut report = LoadReport::default();
        let mut edges: Vec<(usize, usize)> = Vec::with_capacity(raw_edges.len());
        for &(a, b) in raw_edges {
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::Validation(format!(
                    "edge ({a}, {b}) references a node id outside [0, {num_nodes})"
                )));
            }
            if a == b {
                report.self_loops += 1;
                continue;
            }
            edges.push((a.min(b), a.max(b)));
        }
        edges.sort_unstable();
        let before = edges.len();
        edges.dedup();
        report.duplicate_edges = before - edges.len();

        let mut adj = vec![Vec::new(); num_nodes];
        for &(u, v) in &edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }

        Ok((
            Self {
                num_nodes,
                num_classes,
                edges,
                adj,
                texts,
                labels,
            },
            report,
        ))
    }

    /// Like [`new_with_report`](Self::new_with_report), discarding the report.
    pub fn new(
        num_nodes: usize,
        raw_edges: &[(usize, usize)],
        texts: Vec<String>,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self> {
        Ok(Self::new_with_report(num_nodes, raw_edges, texts, labels, num_classes)?.0)
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge list, sorted, with `u < v` in every pair.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn texts(&self) -> &[String] {
        &self.texts
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.adj[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adj[node].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        if a == b || a >= self.num_nodes || b >= self.num_nodes {
            return false;
        }
        self.adj[a].binary_search(&b).is_ok()
    }

    /// Rebuilds the graph with a different edge set, keeping texts and labels.
    pub fn with_edges(&self, edges: &[(usize, usize)]) -> Result<Self> {
        Self::new(
            self.num_nodes,
            edges,
            self.texts.clone(),
            self.labels.clone(),
            self.num_classes,
        )
    }

    /// Rebuilds the graph with different node texts, keeping the structure.
    pub fn with_texts(&self, texts: Vec<String>) -> Result<Self> {
        Self::new(
            self.num_nodes,
            &self.edges,
            texts,
            self.labels.clone(),
            self.num_classes,
        )
    }
}

/// Train / validation / test node partition. Each set is stored sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NodeSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl NodeSplit {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        if self.train.is_empty() {
            return Err(Error::Validation("train split is empty".into()));
        }
        let mut seen = vec![false; num_nodes];
        for set in [&self.train, &self.val, &self.test] {
            for &node in set {
                if node >= num_nodes {
                    return Err(Error::Validation(format!(
                        "split references node {node} outside [0, {num_nodes})"
                    )));
                }
                if seen[node] {
                    return Err(Error::Validation(format!(
                        "node {node} appears in more than one split"
                    )));
                }
                seen[node] = true;
            }
        }
        Ok(())
    }
}

/// Seeded uniform node partition: `floor(train_frac * N)` train nodes,
/// `floor(val_frac * N)` validation nodes, remainder test.
pub fn split_nodes(
    graph: &TextAttributedGraph,
    train_frac: f64,
    val_frac: f64,
    seed: u64,
) -> Result<NodeSplit> {
    if !(0.0..1.0).contains(&train_frac) || !(0.0..1.0).contains(&val_frac) {
        return Err(Error::Config(
            "split fractions must lie in [0, 1)".into(),
        ));
    }
    if train_frac + val_frac >= 1.0 {
        return Err(Error::Config(
            "train_frac + val_frac must be strictly below 1".into(),
        ));
    }
    let n = graph.num_nodes();
    let n_train = (train_frac * n as f64).floor() as usize;
    let n_val = (val_frac * n as f64).floor() as usize;
    if n_train == 0 {
        return Err(Error::Config(format!(
            "train_frac {train_frac} yields an empty train set for {n} nodes"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut train: Vec<usize> = order[..n_train].to_vec();
    let mut val: Vec<usize> = order[n_train..n_train + n_val].to_vec();
    let mut test: Vec<usize> = order[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(NodeSplit { train, val, test })
}

/// Parameters of the synthetic stochastic-block-model generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SbmParams {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub intra_edge_prob: f64,
    pub inter_edge_prob: f64,
    pub vocab_size: usize,
    pub words_per_node: usize,
    /// Probability that a token is drawn from the node's class-specific
    /// vocabulary slice rather than the shared slice.
    pub class_word_skew: f64,
    pub seed: u64,
}

impl SbmParams {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.num_nodes == 0 {
            problems.push("num_nodes must be positive".to_string());
        }
        if self.num_classes == 0 || self.num_classes > self.num_nodes.max(1) {
            problems.push("num_classes must lie in [1, num_nodes]".to_string());
        }
        for (name, p) in [
            ("intra_edge_prob", self.intra_edge_prob),
            ("inter_edge_prob", self.inter_edge_prob),
            ("class_word_skew", self.class_word_skew),
        ] {
            if !(0.0..=1.0).contains(&p) {
                problems.push(format!("{name} must lie in [0, 1], got {p}"));
            }
        }
        if self.vocab_size < self.num_classes {
            problems.push(format!(
                "vocab_size {} must be at least num_classes {}",
                self.vocab_size, self.num_classes
            ));
        }
        if self.words_per_node == 0 {
            problems.push("words_per_node must be positive".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}

/// Induced subgraph over a seeded node sample plus up-to-`fanout` sampled
/// neighbors per frontier node per hop. Node ids are reindexed densely in
/// ascending original-id order; texts and labels are carried over.
pub fn sample_subset(
    graph: &TextAttributedGraph,
    seed_nodes: usize,
    fanout: usize,
    hops: usize,
    seed: u64,
) -> Result<TextAttributedGraph> {
    let n = graph.num_nodes();
    if seed_nodes == 0 || seed_nodes > n {
        return Err(Error::Config(format!(
            "seed_nodes must lie in [1, {n}], got {seed_nodes}"
        )));
    }
    if hops == 0 {
        return Err(Error::Config("hops must be at least 1".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut frontier: Vec<usize> = order[..seed_nodes].to_vec();
    frontier.sort_unstable();

    let mut selected = vec![false; n];
    for &node in &frontier {
        selected[node] = true;
    }

    for _ in 0..hops {
        let mut next = Vec::new();
        for &node in &frontier {
            let neigh = graph.neighbors(node);
            let picked: Vec<usize> = if neigh.len() <= fanout {
                neigh.to_vec()
            } else {
                let mut idx: Vec<usize> = (0..neigh.len()).collect();
                idx.shuffle(&mut rng);
                let mut picked: Vec<usize> = idx[..fanout].iter().map(|&i| neigh[i]).collect();
                picked.sort_unstable();
                picked
            };
            for cand in picked {
                if !selected[cand] {
                    selected[cand] = true;
                    next.push(cand);
                }
            }
        }
        next.sort_unstable();
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }

    let keep: Vec<usize> = (0..n).filter(|&i| selected[i]).collect();
    let mut new_id = vec![usize::MAX; n];
    for (new, &old) in keep.iter().enumerate() {
        new_id[old] = new;
    }
    let edges: Vec<(usize, usize)> = graph
        .edges()
        .iter()
        .filter(|&&(u, v)| selected[u] && selected[v])
        .map(|&(u, v)| (new_id[u], new_id[v]))
        .collect();
    let texts = keep.iter().map(|&i| graph.texts()[i].clone()).collect();
    let labels = keep.iter().map(|&i| graph.labels()[i]).collect();
    TextAttributedGraph::new(keep.len(), &edges, texts, labels, graph.num_classes())
}
