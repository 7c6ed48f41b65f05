//! Structural and textual poisoning attacks, budget accounting, target
//! selection, and perturbation application.

mod dice;
mod meta;
mod targeted;
mod text;

pub use dice::dice_attack;
pub use meta::{meta_gradient_attack, MetaAttackConfig};
pub use targeted::{margin_trace, targeted_gradient_attack};
pub use text::{
    char_attack, train_text_surrogate, word_attack, TextAttackResult, TextSurrogate,
};

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::tagraph::{NodeSplit, TextAttributedGraph};
use crate::victims::SurrogateModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipOp {
    Add,
    Remove,
}

/// One structural change, canonical endpoints u < v.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "(usize, usize, FlipOp)", try_from = "(usize, usize, FlipOp)")]
pub struct EdgeFlip {
    pub u: usize,
    pub v: usize,
    pub op: FlipOp,
}

impl EdgeFlip {
    pub fn add(a: usize, b: usize) -> Self {
        Self {
            u: a.min(b),
            v: a.max(b),
            op: FlipOp::Add,
        }
    }

    pub fn remove(a: usize, b: usize) -> Self {
        Self {
            u: a.min(b),
            v: a.max(b),
            op: FlipOp::Remove,
        }
    }

    pub fn pair(&self) -> (usize, usize) {
        (self.u, self.v)
    }
}

impl From<EdgeFlip> for (usize, usize, FlipOp) {
    fn from(f: EdgeFlip) -> Self {
        (f.u, f.v, f.op)
    }
}

impl TryFrom<(usize, usize, FlipOp)> for EdgeFlip {
    type Error = String;
    fn try_from((u, v, op): (usize, usize, FlipOp)) -> std::result::Result<Self, String> {
        if u >= v {
            return Err(format!("edge flip endpoints must satisfy u < v, got ({u}, {v})"));
        }
        Ok(Self { u, v, op })
    }
}

/// One textual change, applied to the node's current text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(
    into = "(usize, String, usize, String)",
    try_from = "(usize, String, usize, String)"
)]
pub struct TextEdit {
    pub node: usize,
    pub op: TextOp,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TextOp {
    /// Swap the characters at char positions `pos` and `pos + 1`.
    SwapAdjacent { pos: usize },
    /// Replace the character at `pos` with `ch`.
    Substitute { pos: usize, ch: char },
    /// Delete the character at `pos`.
    Delete { pos: usize },
    /// Insert `ch` before char position `pos`.
    Insert { pos: usize, ch: char },
    /// Replace the token at alphanumeric-token ordinal `index`.
    ReplaceWord { index: usize, replacement: String },
}

impl From<TextEdit> for (usize, String, usize, String) {
    fn from(e: TextEdit) -> Self {
        match e.op {
            TextOp::SwapAdjacent { pos } => (e.node, "swap".into(), pos, String::new()),
            TextOp::Substitute { pos, ch } => (e.node, "sub".into(), pos, ch.to_string()),
            TextOp::Delete { pos } => (e.node, "del".into(), pos, String::new()),
            TextOp::Insert { pos, ch } => (e.node, "ins".into(), pos, ch.to_string()),
            TextOp::ReplaceWord { index, replacement } => (e.node, "word".into(), index, replacement),
        }
    }
}

impl TryFrom<(usize, String, usize, String)> for TextEdit {
    type Error = String;
    fn try_from(
        (node, op, pos, payload): (usize, String, usize, String),
    ) -> std::result::Result<Self, String> {
        let single_char = || {
            let mut chars = payload.chars();
            match (chars.next(), chars.next()) {
                (Some(c), None) => Ok(c),
                _ => Err(format!("op {op:?} expects a single-character payload")),
            }
        };
        let op = match op.as_str() {
            "swap" => TextOp::SwapAdjacent { pos },
            "sub" => TextOp::Substitute { pos, ch: single_char()? },
            "del" => TextOp::Delete { pos },
            "ins" => TextOp::Insert { pos, ch: single_char()? },
            "word" => TextOp::ReplaceWord {
                index: pos,
                replacement: payload,
            },
            other => return Err(format!("unknown text op {other:?}")),
        };
        Ok(TextEdit { node, op })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "structural_mode", content = "value", rename_all = "snake_case")]
pub enum StructuralBudget {
    /// Fraction of the clean graph's edge count; every flip counts one unit
    /// against floor(rate * |E|).
    GlobalRate(f64),
    /// Flips allowed per targeted node, 1 through 5.
    PerTarget(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSpec {
    pub structural: Option<StructuralBudget>,
    pub textual_edits_per_node: usize,
}

impl BudgetSpec {
    pub fn global_rate(rate: f64) -> Self {
        Self {
            structural: Some(StructuralBudget::GlobalRate(rate)),
            textual_edits_per_node: 0,
        }
    }

    pub fn per_target(flips: usize) -> Self {
        Self {
            structural: Some(StructuralBudget::PerTarget(flips)),
            textual_edits_per_node: 0,
        }
    }

    pub fn textual(edits_per_node: usize) -> Self {
        Self {
            structural: None,
            textual_edits_per_node: edits_per_node,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.structural {
            Some(StructuralBudget::GlobalRate(rate)) if !(0.0..=1.0).contains(&rate) => {
                Err(Error::Config(format!(
                    "global perturbation rate must lie in [0, 1], got {rate}"
                )))
            }
            Some(StructuralBudget::PerTarget(flips)) if !(1..=5).contains(&flips) => Err(
                Error::Config(format!("per-target budget must lie in [1, 5], got {flips}")),
            ),
            _ => Ok(()),
        }
    }
}

/// A budgeted, seeded set of structural flips and text edits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSet {
    pub attack_name: String,
    pub seed: u64,
    pub budget: BudgetSpec,
    pub edge_flips: Vec<EdgeFlip>,
    pub text_edits: Vec<TextEdit>,
    /// Partial-budget notes and skipped-input notes; empty when the budget
    /// was met exactly.
    pub warnings: Vec<String>,
}

impl PerturbationSet {
    pub fn new(attack_name: impl Into<String>, seed: u64, budget: BudgetSpec) -> Self {
        Self {
            attack_name: attack_name.into(),
            seed,
            budget,
            edge_flips: Vec::new(),
            text_edits: Vec::new(),
            warnings: Vec::new(),
        }
    }

    /// SHA-256 over the canonical JSON serialization (hash field excluded by
    /// construction: it is never part of this struct).
    pub fn content_hash(&self) -> String {
        let body = serde_json::to_string(self).expect("perturbation sets serialize");
        let mut hasher = Sha256::new();
        hasher.update(body.as_bytes());
        format!("{:x}", hasher.finalize())
    }

    /// Serializes with the content hash attached.
    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("perturbation sets serialize");
        value["content_hash"] = serde_json::Value::String(self.content_hash());
        serde_json::to_string_pretty(&value).expect("json value serializes")
    }

    pub fn from_json(body: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(body)?;
        let stored_hash = value
            .as_object_mut()
            .and_then(|m| m.remove("content_hash"))
            .and_then(|v| v.as_str().map(String::from));
        let set: PerturbationSet = serde_json::from_value(value)?;
        if let Some(hash) = stored_hash {
            let actual = set.content_hash();
            if hash != actual {
                return Err(Error::Validation(format!(
                    "perturbation content hash mismatch: stored {hash}, computed {actual}"
                )));
            }
        }
        Ok(set)
    }

    /// Checks every flip and edit against `graph`: endpoints in range, no
    /// duplicate flips, removals reference existing edges and additions
    /// absent pairs when replayed in order, per-node text edit counts within
    /// the textual budget.
    pub fn validate_against(&self, graph: &TextAttributedGraph) -> Result<()> {
        self.budget.validate()?;
        let n = graph.num_nodes();
        let mut seen = std::collections::BTreeSet::new();
        let mut edges: std::collections::BTreeSet<(usize, usize)> =
            graph.edges().iter().copied().collect();
        for flip in &self.edge_flips {
            if flip.v >= n {
                return Err(Error::Validation(format!(
                    "flip ({}, {}) references a node outside [0, {n})",
                    flip.u, flip.v
                )));
            }
            if !seen.insert(flip.pair()) {
                return Err(Error::Validation(format!(
                    "duplicate flip on pair ({}, {})",
                    flip.u, flip.v
                )));
            }
            match flip.op {
                FlipOp::Add => {
                    if !edges.insert(flip.pair()) {
                        return Err(Error::Validation(format!(
                            "add flip ({}, {}) targets an existing edge",
                            flip.u, flip.v
                        )));
                    }
                }
                FlipOp::Remove => {
                    if !edges.remove(&flip.pair()) {
                        return Err(Error::Validation(format!(
                            "remove flip ({}, {}) targets an absent edge",
                            flip.u, flip.v
                        )));
                    }
                }
            }
        }
        if let Some(StructuralBudget::GlobalRate(rate)) = self.budget.structural {
            let allowed = (rate * graph.num_edges() as f64).floor() as usize;
            if self.edge_flips.len() > allowed {
                return Err(Error::Validation(format!(
                    "{} flips exceed the structural budget of {allowed}",
                    self.edge_flips.len()
                )));
            }
        }
        if self.budget.textual_edits_per_node > 0 || !self.text_edits.is_empty() {
            let mut per_node = std::collections::BTreeMap::new();
            for edit in &self.text_edits {
                if edit.node >= n {
                    return Err(Error::Validation(format!(
                        "text edit references node {} outside [0, {n})",
                        edit.node
                    )));
                }
                *per_node.entry(edit.node).or_insert(0usize) += 1;
            }
            for (&node, &count) in &per_node {
                if count > self.budget.textual_edits_per_node {
                    return Err(Error::Validation(format!(
                        "node {node} has {count} text edits, budget allows {}",
                        self.budget.textual_edits_per_node
                    )));
                }
            }
        }
        Ok(())
    }
}

fn apply_text_op(text: &str, op: &TextOp) -> Result<String> {
    let mut chars: Vec<char> = text.chars().collect();
    match op {
        TextOp::SwapAdjacent { pos } => {
            if pos + 1 >= chars.len() {
                return Err(Error::Validation(format!(
                    "swap position {pos} out of range for text of {} chars",
                    chars.len()
                )));
            }
            chars.swap(*pos, pos + 1);
        }
        TextOp::Substitute { pos, ch } => {
            if *pos >= chars.len() {
                return Err(Error::Validation(format!("substitute position {pos} out of range")));
            }
            chars[*pos] = *ch;
        }
        TextOp::Delete { pos } => {
            if *pos >= chars.len() {
                return Err(Error::Validation(format!("delete position {pos} out of range")));
            }
            chars.remove(*pos);
        }
        TextOp::Insert { pos, ch } => {
            if *pos > chars.len() {
                return Err(Error::Validation(format!("insert position {pos} out of range")));
            }
            chars.insert(*pos, *ch);
        }
        TextOp::ReplaceWord { index, replacement } => {
            let spans = token_spans(text);
            let (start, end) = *spans.get(*index).ok_or_else(|| {
                Error::Validation(format!("token index {index} out of range"))
            })?;
            let mut out: Vec<char> = Vec::with_capacity(chars.len());
            out.extend_from_slice(&chars[..start]);
            out.extend(replacement.chars());
            out.extend_from_slice(&chars[end..]);
            chars = out;
        }
    }
    Ok(chars.into_iter().collect())
}

/// Char spans [start, end) of alphanumeric token runs, in order.
pub(crate) fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    let mut pos = 0usize;
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            if start.is_none() {
                start = Some(pos);
            }
        } else if let Some(s) = start.take() {
            spans.push((s, pos));
        }
        pos += 1;
    }
    if let Some(s) = start {
        spans.push((s, pos));
    }
    spans
}

/// Applies a perturbation set atomically: the set is validated against the
/// graph before any state is built, edge flips preserve symmetry and
/// simplicity, and text edits are replayed in order per node.
pub fn apply_perturbation(
    graph: &TextAttributedGraph,
    pset: &PerturbationSet,
) -> Result<TextAttributedGraph> {
    pset.validate_against(graph)?;
    let mut edges: std::collections::BTreeSet<(usize, usize)> =
        graph.edges().iter().copied().collect();
    for flip in &pset.edge_flips {
        match flip.op {
            FlipOp::Add => edges.insert(flip.pair()),
            FlipOp::Remove => edges.remove(&flip.pair()),
        };
    }
    let mut texts: Vec<String> = graph.texts().to_vec();
    for edit in &pset.text_edits {
        texts[edit.node] = apply_text_op(&texts[edit.node], &edit.op)?;
    }
    let edge_list: Vec<(usize, usize)> = edges.into_iter().collect();
    TextAttributedGraph::new(
        graph.num_nodes(),
        &edge_list,
        texts,
        graph.labels().to_vec(),
        graph.num_classes(),
    )
}

/// Targeted-attack victims: a seeded sample of test nodes above a degree bar.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetSet {
    pub nodes: Vec<usize>,
    pub min_degree: usize,
    pub sample_rate_permille: u32,
    pub seed: u64,
}

/// Selects test nodes with degree strictly above `min_degree`, then keeps a
/// seeded uniform sample of floor(sample_rate * |qualifying|) of them
/// (rate 1.0 keeps the whole set).
pub fn select_targets(
    graph: &TextAttributedGraph,
    split: &NodeSplit,
    min_degree: usize,
    sample_rate: f64,
    seed: u64,
) -> Result<TargetSet> {
    split.validate(graph.num_nodes())?;
    if !(0.0..=1.0).contains(&sample_rate) {
        return Err(Error::Config(format!(
            "sample_rate must lie in [0, 1], got {sample_rate}"
        )));
    }
    let qualifying: Vec<usize> = split
        .test
        .iter()
        .copied()
        .filter(|&n| graph.degree(n) > min_degree)
        .collect();
    if qualifying.is_empty() {
        return Err(Error::EmptyTargets { min_degree });
    }
    let count = ((sample_rate * qualifying.len() as f64).floor() as usize).min(qualifying.len());
    let mut order = qualifying;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let mut nodes = order[..count].to_vec();
    nodes.sort_unstable();
    Ok(TargetSet {
        nodes,
        min_degree,
        sample_rate_permille: (sample_rate * 1000.0).round() as u32,
        seed,
    })
}

/// Label view available to the gray-box adversary: true labels on the
/// labeled set, surrogate predictions elsewhere. With `oracle_labels` the
/// true labels are used everywhere (reproducing the all-knowledge variant).
pub fn attack_label_view(
    graph: &TextAttributedGraph,
    split: &NodeSplit,
    surrogate_predictions: &[usize],
    oracle_labels: bool,
) -> Vec<usize> {
    if oracle_labels {
        return graph.labels().to_vec();
    }
    let mut view = surrogate_predictions.to_vec();
    for &node in split.train.iter().chain(split.val.iter()) {
        view[node] = graph.labels()[node];
    }
    view
}

/// Uniform random structural baseline at a global-rate budget: each flip is
/// a fair coin between removing a uniform existing edge and adding a uniform
/// absent pair.
pub fn random_flip_attack(
    graph: &TextAttributedGraph,
    rate: f64,
    seed: u64,
) -> Result<PerturbationSet> {
    let budget_spec = BudgetSpec::global_rate(rate);
    budget_spec.validate()?;
    let n = graph.num_nodes();
    let budget = (rate * graph.num_edges() as f64).floor() as usize;
    let mut pset = PerturbationSet::new("random_flip", seed, budget_spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: std::collections::BTreeSet<(usize, usize)> =
        graph.edges().iter().copied().collect();
    let mut removable: Vec<(usize, usize)> = graph.edges().to_vec();
    let mut flipped = std::collections::BTreeSet::new();

    for _ in 0..budget {
        let try_remove = rng.gen_bool(0.5);
        let mut done = false;
        if try_remove && !removable.is_empty() {
            let idx = rng.gen_range(0..removable.len());
            let pair = removable.swap_remove(idx);
            edges.remove(&pair);
            flipped.insert(pair);
            pset.edge_flips.push(EdgeFlip::remove(pair.0, pair.1));
            done = true;
        }
        if !done {
            for _ in 0..10_000 {
                let a = rng.gen_range(0..n);
                let b = rng.gen_range(0..n);
                if a == b {
                    continue;
                }
                let pair = (a.min(b), a.max(b));
                if edges.contains(&pair) || flipped.contains(&pair) {
                    continue;
                }
                edges.insert(pair);
                flipped.insert(pair);
                pset.edge_flips.push(EdgeFlip::add(pair.0, pair.1));
                done = true;
                break;
            }
        }
        if !done && !removable.is_empty() {
            let idx = rng.gen_range(0..removable.len());
            let pair = removable.swap_remove(idx);
            edges.remove(&pair);
            flipped.insert(pair);
            pset.edge_flips.push(EdgeFlip::remove(pair.0, pair.1));
            done = true;
        }
        if !done {
            pset.warnings
                .push(format!("budget exhausted after {} flips", pset.edge_flips.len()));
            break;
        }
    }
    Ok(pset)
}

/// Random per-target baseline: `budget` uniform flips incident to the target.
pub fn random_rewire_attack(
    graph: &TextAttributedGraph,
    target: usize,
    budget: usize,
    seed: u64,
) -> Result<PerturbationSet> {
    let budget_spec = BudgetSpec::per_target(budget);
    budget_spec.validate()?;
    let n = graph.num_nodes();
    if target >= n {
        return Err(Error::Validation(format!("target {target} out of range")));
    }
    let mut pset = PerturbationSet::new("random_rewire", seed, budget_spec);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: std::collections::BTreeSet<(usize, usize)> =
        graph.edges().iter().copied().collect();
    let mut flipped = std::collections::BTreeSet::new();
    let mut candidates: Vec<usize> = (0..n).filter(|&w| w != target).collect();
    candidates.shuffle(&mut rng);
    for w in candidates {
        if pset.edge_flips.len() == budget {
            break;
        }
        let pair = (target.min(w), target.max(w));
        if flipped.contains(&pair) {
            continue;
        }
        flipped.insert(pair);
        if edges.remove(&pair) {
            pset.edge_flips.push(EdgeFlip::remove(pair.0, pair.1));
        } else {
            edges.insert(pair);
            pset.edge_flips.push(EdgeFlip::add(pair.0, pair.1));
        }
    }
    if pset.edge_flips.len() < budget {
        pset.warnings
            .push(format!("candidate pool exhausted after {} flips", pset.edge_flips.len()));
    }
    Ok(pset)
}

/// Sequential composition of a structural and a textual perturbation, both
/// generated against the clean inputs, recorded as one set.
pub fn combined_attack(
    graph: &TextAttributedGraph,
    structural: &PerturbationSet,
    textual: &PerturbationSet,
) -> Result<PerturbationSet> {
    structural.validate_against(graph)?;
    textual.validate_against(graph)?;
    if !structural.text_edits.is_empty() || !textual.edge_flips.is_empty() {
        return Err(Error::Validation(
            "combined_attack expects a pure structural set and a pure textual set".into(),
        ));
    }
    let mut pset = PerturbationSet::new(
        format!("combined({}+{})", structural.attack_name, textual.attack_name),
        structural.seed,
        BudgetSpec {
            structural: structural.budget.structural,
            textual_edits_per_node: textual.budget.textual_edits_per_node,
        },
    );
    pset.edge_flips = structural.edge_flips.clone();
    pset.text_edits = textual.text_edits.clone();
    pset.warnings.extend(structural.warnings.iter().cloned());
    pset.warnings.extend(textual.warnings.iter().cloned());
    pset.validate_against(graph)?;
    Ok(pset)
}

/// Convenience used by attacks needing surrogate pseudo-labels.
pub fn surrogate_label_view(
    graph: &TextAttributedGraph,
    split: &NodeSplit,
    surrogate: &SurrogateModel,
    features: &crate::embed::EmbeddingMatrix,
    oracle_labels: bool,
) -> Vec<usize> {
    let preds = surrogate.predict_labels(graph, features);
    attack_label_view(graph, split, &preds, oracle_labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)], labels: Vec<usize>, c: usize) -> TextAttributedGraph {
        let texts = (0..n).map(|i| format!("token{i} filler words here")).collect();
        TextAttributedGraph::new(n, edges, texts, labels, c).unwrap()
    }

    #[test]
    fn empty_pset_is_identity() {
        let g = graph(3, &[(0, 1), (1, 2)], vec![0, 0, 1], 2);
        let pset = PerturbationSet::new("noop", 0, BudgetSpec::global_rate(0.0));
        let g2 = apply_perturbation(&g, &pset).unwrap();
        assert_eq!(g2, g);
    }

    #[test]
    fn apply_then_inverse_restores_graph() {
        let g = graph(4, &[(0, 1), (1, 2), (2, 3)], vec![0, 0, 1, 1], 2);
        let mut pset = PerturbationSet::new("fwd", 0, BudgetSpec::global_rate(1.0));
        pset.edge_flips = vec![EdgeFlip::remove(0, 1), EdgeFlip::add(0, 2)];
        let poisoned = apply_perturbation(&g, &pset).unwrap();
        let mut inverse = PerturbationSet::new("rev", 0, BudgetSpec::global_rate(1.0));
        inverse.edge_flips = vec![EdgeFlip::add(0, 1), EdgeFlip::remove(0, 2)];
        let restored = apply_perturbation(&poisoned, &inverse).unwrap();
        assert_eq!(restored.edges(), g.edges());
    }

    #[test]
    fn edge_accounting_is_exact() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4)], vec![0; 5], 1);
        let mut pset = PerturbationSet::new("acct", 0, BudgetSpec::global_rate(1.0));
        pset.edge_flips = vec![
            EdgeFlip::add(0, 2),
            EdgeFlip::add(0, 3),
            EdgeFlip::remove(1, 2),
        ];
        let poisoned = apply_perturbation(&g, &pset).unwrap();
        assert_eq!(poisoned.num_edges(), 4 + 2 - 1);
    }

    #[test]
    fn out_of_range_flip_fails_before_mutation() {
        let g = graph(3, &[(0, 1)], vec![0, 0, 1], 2);
        let mut pset = PerturbationSet::new("bad", 0, BudgetSpec::global_rate(1.0));
        pset.edge_flips = vec![EdgeFlip::add(1, 9)];
        assert!(apply_perturbation(&g, &pset).is_err());
    }

    #[test]
    fn duplicate_flip_rejected() {
        let g = graph(3, &[(0, 1)], vec![0, 0, 1], 2);
        let mut pset = PerturbationSet::new("dup", 0, BudgetSpec::global_rate(1.0));
        pset.edge_flips = vec![EdgeFlip::remove(0, 1), EdgeFlip::add(0, 1)];
        assert!(pset.validate_against(&g).is_err());
    }

    #[test]
    fn text_edits_apply_in_order() {
        let g = TextAttributedGraph::new(
            1,
            &[],
            vec!["hello world".into()],
            vec![0],
            1,
        )
        .unwrap();
        let mut pset = PerturbationSet::new("text", 0, BudgetSpec::textual(3));
        pset.text_edits = vec![
            TextEdit {
                node: 0,
                op: TextOp::Substitute { pos: 0, ch: 'j' },
            },
            TextEdit {
                node: 0,
                op: TextOp::ReplaceWord {
                    index: 1,
                    replacement: "globe".into(),
                },
            },
        ];
        let out = apply_perturbation(&g, &pset).unwrap();
        assert_eq!(out.texts()[0], "jello globe");
    }

    #[test]
    fn textual_budget_enforced_per_node() {
        let g = graph(2, &[(0, 1)], vec![0, 0], 1);
        let mut pset = PerturbationSet::new("overbudget", 0, BudgetSpec::textual(1));
        pset.text_edits = vec![
            TextEdit {
                node: 0,
                op: TextOp::Delete { pos: 0 },
            },
            TextEdit {
                node: 0,
                op: TextOp::Delete { pos: 0 },
            },
        ];
        assert!(pset.validate_against(&g).is_err());
    }

    #[test]
    fn pset_json_round_trip_preserves_hash() {
        let mut pset = PerturbationSet::new("demo", 7, BudgetSpec::global_rate(0.5));
        pset.edge_flips = vec![EdgeFlip::add(0, 3), EdgeFlip::remove(1, 2)];
        pset.text_edits = vec![TextEdit {
            node: 2,
            op: TextOp::Insert { pos: 1, ch: 'x' },
        }];
        let json = pset.to_json();
        let parsed = PerturbationSet::from_json(&json).unwrap();
        assert_eq!(parsed, pset);
        assert_eq!(parsed.content_hash(), pset.content_hash());
        assert!(json.contains("\"content_hash\""));
    }

    #[test]
    fn select_targets_filters_and_samples() {
        // Node 0 is a hub with degree 12; everything else is low degree.
        let mut edges: Vec<(usize, usize)> = (1..=12).map(|i| (0, i)).collect();
        edges.push((13, 14));
        let g = graph(15, &edges, vec![0; 15], 1);
        let split = NodeSplit {
            train: vec![13],
            val: vec![14],
            test: (0..13).collect(),
        };
        let targets = select_targets(&g, &split, 10, 1.0, 0).unwrap();
        assert_eq!(targets.nodes, vec![0]);

        let none = select_targets(&g, &split, 50, 1.0, 0);
        assert!(matches!(none, Err(Error::EmptyTargets { .. })));
    }

    #[test]
    fn select_targets_floor_sampling() {
        // 37 qualifying nodes at rate 0.1 -> exactly 3 targets.
        let hub_edges: Vec<(usize, usize)> = (0..37)
            .flat_map(|i| (0..11).map(move |j| (i, 37 + (i * 11 + j) % 400)))
            .collect();
        let g = graph(437, &hub_edges, vec![0; 437], 1);
        let split = NodeSplit {
            train: vec![436],
            val: vec![],
            test: (0..436).collect(),
        };
        let targets = select_targets(&g, &split, 10, 0.1, 5).unwrap();
        assert_eq!(targets.nodes.len(), 3);
        let again = select_targets(&g, &split, 10, 0.1, 5).unwrap();
        assert_eq!(targets, again);
    }

    #[test]
    fn random_flip_respects_budget_and_simplicity() {
        let g = graph(10, &[(0, 1), (1, 2), (2, 3), (4, 5), (6, 7)], vec![0; 10], 1);
        let pset = random_flip_attack(&g, 0.4, 3).unwrap();
        assert_eq!(pset.edge_flips.len(), 2);
        pset.validate_against(&g).unwrap();
        let poisoned = apply_perturbation(&g, &pset).unwrap();
        for &(u, v) in poisoned.edges() {
            assert!(u < v);
        }
    }

    #[test]
    fn combined_degenerate_compositions() {
        let g = graph(4, &[(0, 1), (2, 3)], vec![0, 0, 1, 1], 2);
        let mut structural = PerturbationSet::new("struct", 1, BudgetSpec::global_rate(0.5));
        structural.edge_flips = vec![EdgeFlip::add(0, 2)];
        let textual = PerturbationSet::new("word", 2, BudgetSpec::textual(0));

        let combined = combined_attack(&g, &structural, &textual).unwrap();
        assert_eq!(combined.edge_flips, structural.edge_flips);
        assert!(combined.text_edits.is_empty());

        let empty_structural = PerturbationSet::new("struct", 1, BudgetSpec::global_rate(0.0));
        let mut textual = PerturbationSet::new("word", 2, BudgetSpec::textual(1));
        textual.text_edits = vec![TextEdit {
            node: 1,
            op: TextOp::Delete { pos: 0 },
        }];
        let combined = combined_attack(&g, &empty_structural, &textual).unwrap();
        assert!(combined.edge_flips.is_empty());
        assert_eq!(combined.text_edits, textual.text_edits);
    }
}
