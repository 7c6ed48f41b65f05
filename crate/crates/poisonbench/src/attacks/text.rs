//! Character- and word-level text poisoning against a shallow surrogate
//! classifier (multinomial logistic regression on bag-of-words counts).

use ndarray::{Array1, Array2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{token_spans, BudgetSpec, PerturbationSet, TextEdit, TextOp};
use crate::embed::{tokenize, Vocabulary};
use crate::error::{Error, Result};

/// Shallow text classifier the textual attacks optimize against.
#[derive(Debug, Clone)]
pub struct TextSurrogate {
    pub vocab: Vocabulary,
    w: Array2<f64>,
    b: Array1<f64>,
}

impl TextSurrogate {
    fn count_vector(&self, text: &str) -> Vec<(usize, f64)> {
        let mut counts = std::collections::BTreeMap::new();
        for token in tokenize(text) {
            if let Some(col) = self.vocab.index_of(&token) {
                *counts.entry(col).or_insert(0.0) += 1.0;
            }
        }
        counts.into_iter().collect()
    }

    pub fn logits(&self, text: &str) -> Vec<f64> {
        let mut logits: Vec<f64> = self.b.to_vec();
        for (col, count) in self.count_vector(text) {
            for (c, logit) in logits.iter_mut().enumerate() {
                *logit += count * self.w[[col, c]];
            }
        }
        logits
    }

    /// Cross-entropy of the anchor class.
    pub fn loss(&self, text: &str, anchor: usize) -> f64 {
        let logits = self.logits(text);
        let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_sum: f64 = logits.iter().map(|&v| (v - max).exp()).sum::<f64>().ln() + max;
        log_sum - logits[anchor]
    }

    pub fn predict(&self, text: &str) -> usize {
        self.logits(text)
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .map(|(c, _)| c)
            .unwrap_or(0)
    }

    pub fn accuracy(&self, texts: &[String], labels: &[usize], nodes: &[usize]) -> f64 {
        if nodes.is_empty() {
            return 0.0;
        }
        let correct = nodes
            .iter()
            .filter(|&&n| self.predict(&texts[n]) == labels[n])
            .count();
        correct as f64 / nodes.len() as f64
    }
}

/// Fits the surrogate on the labeled nodes. Zero-initialized, so the fit is
/// deterministic.
pub fn train_text_surrogate(
    texts: &[String],
    labels: &[usize],
    labeled: &[usize],
    vocab: &Vocabulary,
    num_classes: usize,
) -> Result<TextSurrogate> {
    if labeled.is_empty() {
        return Err(Error::Validation("no labeled nodes for text surrogate".into()));
    }
    if vocab.is_empty() {
        return Err(Error::Validation("empty vocabulary".into()));
    }
    let v = vocab.len();
    let mut counts = Array2::zeros((labeled.len(), v));
    for (row, &node) in labeled.iter().enumerate() {
        for token in tokenize(&texts[node]) {
            if let Some(col) = vocab.index_of(&token) {
                counts[[row, col]] += 1.0;
            }
        }
    }
    let targets: Vec<usize> = labeled.iter().map(|&n| labels[n]).collect();

    let mut w = Array2::<f64>::zeros((v, num_classes));
    let mut b = Array1::<f64>::zeros(num_classes);
    let mut opt = crate::victims::nn::Adam::new(0.1, 1e-4, &[w.len(), b.len()]);
    let m = labeled.len() as f64;
    for _ in 0..300 {
        let logits = counts.dot(&w) + &b;
        let probs = crate::victims::nn::softmax_rows(&logits);
        let mut dlogits = probs;
        for (row, &target) in targets.iter().enumerate() {
            dlogits[[row, target]] -= 1.0;
        }
        dlogits /= m;
        let dw = counts.t().dot(&dlogits);
        let db = dlogits.sum_axis(ndarray::Axis(0));
        let dw_s = dw.as_slice().unwrap();
        let db_s = db.as_slice().unwrap();
        let mut w_s = w.as_slice_mut().unwrap();
        let mut b_s = b.as_slice_mut().unwrap();
        opt.step(&mut [&mut w_s, &mut b_s], &[dw_s, db_s]);
    }
    Ok(TextSurrogate {
        vocab: vocab.clone(),
        w,
        b,
    })
}

/// Attack output: the perturbation set plus the per-node surrogate-loss
/// trace (clean loss first, then after each applied edit).
#[derive(Debug, Clone)]
pub struct TextAttackResult {
    pub pset: PerturbationSet,
    pub loss_traces: Vec<(usize, Vec<f64>)>,
}

fn splice_out(text: &str, span: (usize, usize)) -> String {
    text.chars()
        .enumerate()
        .filter(|&(i, _)| i < span.0 || i >= span.1)
        .map(|(_, c)| c)
        .collect()
}

/// Tokens of `text` ranked by leave-one-out importance under the surrogate:
/// how much the anchor-class loss grows when the token is removed.
fn rank_tokens(clf: &TextSurrogate, text: &str, anchor: usize) -> Vec<(usize, f64)> {
    let base = clf.loss(text, anchor);
    let spans = token_spans(text);
    let mut ranked: Vec<(usize, f64)> = spans
        .iter()
        .enumerate()
        .map(|(ordinal, &span)| {
            let without = splice_out(text, span);
            (ordinal, clf.loss(&without, anchor) - base)
        })
        .collect();
    ranked.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    ranked
}

fn apply_op(text: &str, op: &TextOp) -> String {
    // Infallible here: ops are generated against the current text.
    super::apply_text_op(text, op).expect("generated op applies")
}

/// Greedy character-level poisoning. Per node: rank tokens by leave-one-out
/// importance, then walk them in that order applying, per token, the single
/// character operation (adjacent swap, substitution, deletion, insertion)
/// that maximizes the surrogate loss, until `edits_per_node` operations have
/// been spent. Tokens shorter than three characters are never edited.
pub fn char_attack(
    texts: &[String],
    clf: &TextSurrogate,
    nodes: &[usize],
    anchors: &[usize],
    edits_per_node: usize,
    seed: u64,
) -> Result<TextAttackResult> {
    if nodes.len() != anchors.len() {
        return Err(Error::Shape("anchors must parallel nodes".into()));
    }
    let mut pset = PerturbationSet::new("char", seed, BudgetSpec::textual(edits_per_node));
    let mut traces = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let letters: Vec<char> = ('a'..='z').collect();

    for (&node, &anchor) in nodes.iter().zip(anchors.iter()) {
        let mut text = texts[node].clone();
        if tokenize(&text).is_empty() {
            pset.warnings.push(format!("node {node}: empty text, skipped"));
            continue;
        }
        let ranked = rank_tokens(clf, &text, anchor);
        let mut current_loss = clf.loss(&text, anchor);
        let mut trace = vec![current_loss];
        let mut budget = edits_per_node;
        for (ordinal, _) in ranked {
            if budget == 0 {
                break;
            }
            let spans = token_spans(&text);
            let Some(&(start, end)) = spans.get(ordinal) else {
                continue;
            };
            if end - start < 3 {
                continue;
            }
            let mut candidates: Vec<TextOp> = Vec::new();
            for pos in start..end - 1 {
                candidates.push(TextOp::SwapAdjacent { pos });
            }
            for pos in start..end {
                candidates.push(TextOp::Delete { pos });
            }
            for pos in start..end {
                let ch = letters[rng.gen_range(0..letters.len())];
                candidates.push(TextOp::Substitute { pos, ch });
            }
            for pos in start..=end {
                let ch = letters[rng.gen_range(0..letters.len())];
                candidates.push(TextOp::Insert { pos, ch });
            }
            let mut best: Option<(TextOp, f64)> = None;
            for op in candidates {
                let loss = clf.loss(&apply_op(&text, &op), anchor);
                let better = match &best {
                    None => true,
                    Some((_, l)) => loss > *l,
                };
                if better {
                    best = Some((op, loss));
                }
            }
            if let Some((op, loss)) = best {
                if loss > current_loss {
                    text = apply_op(&text, &op);
                    pset.text_edits.push(TextEdit { node, op });
                    current_loss = loss;
                    trace.push(loss);
                    budget -= 1;
                }
            }
        }
        traces.push((node, trace));
    }
    Ok(TextAttackResult {
        pset,
        loss_traces: traces,
    })
}

/// Greedy word-level poisoning: replace up to `edits_per_node` important
/// tokens per node with the vocabulary token (among the `top_k` most
/// frequent) that maximizes the surrogate loss. Replacements that fail to
/// increase the loss are skipped, so the per-node loss trace never falls.
#[allow(clippy::too_many_arguments)]
pub fn word_attack(
    texts: &[String],
    clf: &TextSurrogate,
    vocab: &Vocabulary,
    nodes: &[usize],
    anchors: &[usize],
    edits_per_node: usize,
    top_k: usize,
    seed: u64,
) -> Result<TextAttackResult> {
    if nodes.len() != anchors.len() {
        return Err(Error::Shape("anchors must parallel nodes".into()));
    }
    let mut pset = PerturbationSet::new("word", seed, BudgetSpec::textual(edits_per_node));
    let mut traces = Vec::new();
    let candidates: Vec<&String> = vocab.tokens().iter().take(top_k).collect();

    for (&node, &anchor) in nodes.iter().zip(anchors.iter()) {
        let mut text = texts[node].clone();
        if tokenize(&text).is_empty() {
            pset.warnings.push(format!("node {node}: empty text, skipped"));
            continue;
        }
        let ranked = rank_tokens(clf, &text, anchor);
        let mut current_loss = clf.loss(&text, anchor);
        let mut trace = vec![current_loss];
        let mut budget = edits_per_node;
        for (ordinal, _) in ranked {
            if budget == 0 {
                break;
            }
            let spans = token_spans(&text);
            let Some(&(start, end)) = spans.get(ordinal) else {
                continue;
            };
            let original: String = text
                .chars()
                .skip(start)
                .take(end - start)
                .collect::<String>()
                .to_lowercase();
            let mut best: Option<(&String, f64)> = None;
            for &candidate in &candidates {
                if *candidate == original {
                    continue;
                }
                let op = TextOp::ReplaceWord {
                    index: ordinal,
                    replacement: candidate.clone(),
                };
                let loss = clf.loss(&apply_op(&text, &op), anchor);
                let better = match &best {
                    None => true,
                    Some((_, l)) => loss > *l,
                };
                if better {
                    best = Some((candidate, loss));
                }
            }
            if let Some((replacement, loss)) = best {
                if loss > current_loss {
                    let op = TextOp::ReplaceWord {
                        index: ordinal,
                        replacement: replacement.clone(),
                    };
                    text = apply_op(&text, &op);
                    pset.text_edits.push(TextEdit { node, op });
                    current_loss = loss;
                    trace.push(loss);
                    budget -= 1;
                }
            }
        }
        traces.push((node, trace));
    }
    Ok(TextAttackResult {
        pset,
        loss_traces: traces,
    })
}
