//! Non-targeted structural attack driven by meta-gradients: differentiate a
//! self-training attacker loss through the unrolled training of a linearized
//! surrogate, flip the best-scoring feasible adjacency entry, repeat.

use ndarray::{Array1, Array2};

use super::{BudgetSpec, EdgeFlip, PerturbationSet};
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::tagraph::{NodeSplit, TextAttributedGraph};
use crate::victims::{train_surrogate, SurrogateModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetaAttackConfig {
    /// Inner surrogate-training steps unrolled per greedy flip.
    pub inner_steps: usize,
    /// Plain gradient-descent rate of the inner training.
    pub inner_lr: f64,
}

impl Default for MetaAttackConfig {
    fn default() -> Self {
        Self {
            inner_steps: 100,
            inner_lr: 0.01,
        }
    }
}

fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// (softmax(logits) - onehot(target)) / |nodes| on `nodes`, zero elsewhere.
fn ce_grad(logits: &Array2<f64>, targets: &[usize], nodes: &[usize]) -> Array2<f64> {
    let probs = softmax_rows(logits);
    let m = nodes.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    for &n in nodes {
        for c in 0..logits.ncols() {
            let one_hot = if c == targets[n] { 1.0 } else { 0.0 };
            grad[[n, c]] = (probs[[n, c]] - one_hot) / m;
        }
    }
    grad
}

#[cfg(test)]
fn ce_loss(logits: &Array2<f64>, targets: &[usize], nodes: &[usize]) -> f64 {
    let probs = softmax_rows(logits);
    let mut loss = 0.0;
    for &n in nodes {
        loss -= probs[[n, targets[n]]].max(1e-300).ln();
    }
    loss / nodes.len() as f64
}

struct MetaProblem<'a> {
    x: &'a Array2<f64>,
    train_targets: &'a [usize],
    attack_targets: &'a [usize],
    labeled: &'a [usize],
    unlabeled: &'a [usize],
    cfg: MetaAttackConfig,
}

impl<'a> MetaProblem<'a> {
    fn normalized(&self, a: &Array2<f64>) -> (Array2<f64>, Array1<f64>) {
        let n = a.nrows();
        let mut degree = Array1::zeros(n);
        for i in 0..n {
            degree[i] = a.row(i).sum() + 1.0;
        }
        let inv_sqrt = degree.mapv(|d: f64| 1.0 / d.sqrt());
        let mut a_hat = a.clone();
        for i in 0..n {
            for j in 0..n {
                a_hat[[i, j]] *= inv_sqrt[i] * inv_sqrt[j];
            }
            a_hat[[i, i]] += inv_sqrt[i] * inv_sqrt[i];
        }
        (a_hat, degree)
    }

    fn unroll(&self, p: &Array2<f64>) -> Vec<Array2<f64>> {
        let d = self.x.ncols();
        let c = self
            .train_targets
            .iter()
            .chain(self.attack_targets.iter())
            .max()
            .unwrap()
            + 1;
        let mut weights = Vec::with_capacity(self.cfg.inner_steps + 1);
        weights.push(Array2::zeros((d, c)));
        for t in 0..self.cfg.inner_steps {
            let logits = p.dot(&weights[t]);
            let g = ce_grad(&logits, self.train_targets, self.labeled);
            let next = &weights[t] - &(p.t().dot(&g) * self.cfg.inner_lr);
            weights.push(next);
        }
        weights
    }

    /// Attacker loss after retraining on the given adjacency.
    #[cfg(test)]
    fn attacker_loss(&self, a: &Array2<f64>) -> f64 {
        let (a_hat, _) = self.normalized(a);
        let q = a_hat.dot(self.x);
        let p = a_hat.dot(&q);
        let weights = self.unroll(&p);
        let logits = p.dot(weights.last().unwrap());
        ce_loss(&logits, self.attack_targets, self.unlabeled)
    }

    /// dL_attack / dA with L the self-training cross-entropy on the
    /// unlabeled nodes after `inner_steps` of surrogate training, obtained by
    /// reverse-mode differentiation through the unrolled steps and the
    /// symmetric normalization.
    fn meta_gradient(&self, a: &Array2<f64>) -> Array2<f64> {
        let lr = self.cfg.inner_lr;
        let (a_hat, degree) = self.normalized(a);
        let q = a_hat.dot(self.x);
        let p = a_hat.dot(&q);
        let weights = self.unroll(&p);
        let w_final = weights.last().unwrap();

        // Adjoints of the attacker loss w.r.t. W_T and P.
        let logits_final = p.dot(w_final);
        let g_attack = ce_grad(&logits_final, self.attack_targets, self.unlabeled);
        let mut w_adj = p.t().dot(&g_attack);
        let mut p_adj = g_attack.dot(&w_final.t());

        // Walk the unrolled steps backwards: W_{t+1} = W_t - lr * P^T G_t.
        for t in (0..self.cfg.inner_steps).rev() {
            let w_t = &weights[t];
            let logits_t = p.dot(w_t);
            let probs_t = softmax_rows(&logits_t);
            let g_t = {
                let m = self.labeled.len() as f64;
                let mut g = Array2::zeros(logits_t.raw_dim());
                for &n in self.labeled {
                    for c in 0..logits_t.ncols() {
                        let one_hot = if c == self.train_targets[n] { 1.0 } else { 0.0 };
                        g[[n, c]] = (probs_t[[n, c]] - one_hot) / m;
                    }
                }
                g
            };
            // Sensitivity of G_t to its logits, contracted with P * w_adj.
            let v = p.dot(&w_adj);
            let mut c_t = Array2::zeros(logits_t.raw_dim());
            let m = self.labeled.len() as f64;
            for &n in self.labeled {
                let pr = probs_t.row(n);
                let vn = v.row(n);
                let inner: f64 = pr.iter().zip(vn.iter()).map(|(a, b)| a * b).sum();
                for c in 0..logits_t.ncols() {
                    c_t[[n, c]] = pr[c] * (vn[c] - inner) / m;
                }
            }
            p_adj = p_adj - (g_t.dot(&w_adj.t()) + c_t.dot(&w_t.t())) * lr;
            w_adj = w_adj - p.t().dot(&c_t) * lr;
        }

        // Through P = A_hat Q and Q = A_hat X (A_hat symmetric).
        let s = p_adj.dot(&q.t()) + a_hat.dot(&p_adj).dot(&self.x.t());

        // Through the normalization A_hat = D^{-1/2} (A + I) D^{-1/2}.
        let n = a.nrows();
        let inv_sqrt = degree.mapv(|d: f64| 1.0 / d.sqrt());
        let mut a_tilde = a.clone();
        for i in 0..n {
            a_tilde[[i, i]] += 1.0;
        }
        let mut grad = Array2::zeros((n, n));
        let mut row_term = Array1::zeros(n);
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += (s[[i, j]] + s[[j, i]]) * a_tilde[[i, j]] * inv_sqrt[j];
            }
            row_term[i] = -0.5 * acc / (degree[i] * degree[i].sqrt());
        }
        for i in 0..n {
            for j in 0..n {
                grad[[i, j]] = s[[i, j]] * inv_sqrt[i] * inv_sqrt[j] + row_term[i];
            }
        }
        grad
    }
}

/// Greedy meta-gradient attack at a global-rate budget. Each iteration
/// recomputes the meta-gradient on the current adjacency, symmetrizes it,
/// and flips the feasible pair with the largest loss-increasing score.
/// Feasibility forbids self-loops, re-flipping a pair, and removing the only
/// edge of a degree-1 labeled node. Deterministic (the seed is recorded for
/// provenance and derived pseudo-labels).
pub fn meta_gradient_attack(
    graph: &TextAttributedGraph,
    features: &EmbeddingMatrix,
    split: &NodeSplit,
    rate: f64,
    seed: u64,
    cfg: &MetaAttackConfig,
) -> Result<PerturbationSet> {
    let budget_spec = BudgetSpec::global_rate(rate);
    budget_spec.validate()?;
    split.validate(graph.num_nodes())?;
    if features.rows() != graph.num_nodes() {
        return Err(Error::Shape("features do not match graph".into()));
    }
    let n = graph.num_nodes();
    let budget = (rate * graph.num_edges() as f64).floor() as usize;
    let mut pset = PerturbationSet::new("meta_gradient", seed, budget_spec);
    if budget == 0 {
        return Ok(pset);
    }

    let mut labeled: Vec<usize> = split.train.iter().chain(split.val.iter()).copied().collect();
    labeled.sort_unstable();
    let labeled_mask: Vec<bool> = {
        let mut mask = vec![false; n];
        for &i in &labeled {
            mask[i] = true;
        }
        mask
    };
    let unlabeled: Vec<usize> = (0..n).filter(|&i| !labeled_mask[i]).collect();
    if unlabeled.is_empty() {
        return Err(Error::Validation(
            "meta-gradient attack needs unlabeled nodes to target".into(),
        ));
    }

    // Self-training targets: true labels where known, surrogate pseudo-labels
    // elsewhere (fit once on the clean graph).
    let surrogate: SurrogateModel = train_surrogate(graph, features, &labeled)?;
    let pseudo = surrogate.predict_labels(graph, features);
    let mut attack_targets = pseudo;
    let mut train_targets = vec![0usize; n];
    for i in 0..n {
        if labeled_mask[i] {
            train_targets[i] = graph.labels()[i];
            attack_targets[i] = graph.labels()[i];
        } else {
            train_targets[i] = attack_targets[i];
        }
    }

    let problem = MetaProblem {
        x: features.data(),
        train_targets: &train_targets,
        attack_targets: &attack_targets,
        labeled: &labeled,
        unlabeled: &unlabeled,
        cfg: *cfg,
    };

    let mut a = Array2::zeros((n, n));
    for &(u, v) in graph.edges() {
        a[[u, v]] = 1.0;
        a[[v, u]] = 1.0;
    }
    let mut degree: Vec<usize> = (0..n).map(|i| graph.degree(i)).collect();
    let mut flipped = std::collections::BTreeSet::new();

    for _ in 0..budget {
        let grad = problem.meta_gradient(&a);
        let mut best: Option<((usize, usize), f64)> = None;
        for u in 0..n {
            for v in (u + 1)..n {
                if flipped.contains(&(u, v)) {
                    continue;
                }
                let exists = a[[u, v]] > 0.5;
                if exists {
                    // Keep degree-1 labeled nodes attached to their only edge.
                    if (labeled_mask[u] && degree[u] == 1) || (labeled_mask[v] && degree[v] == 1) {
                        continue;
                    }
                }
                let direction = if exists { -1.0 } else { 1.0 };
                let score = (grad[[u, v]] + grad[[v, u]]) * direction;
                let better = match best {
                    None => true,
                    Some((_, s)) => score > s,
                };
                if better {
                    best = Some(((u, v), score));
                }
            }
        }
        let Some(((u, v), _)) = best else {
            pset.warnings.push(format!(
                "no feasible flip left after {} of {budget}",
                pset.edge_flips.len()
            ));
            break;
        };
        flipped.insert((u, v));
        if a[[u, v]] > 0.5 {
            a[[u, v]] = 0.0;
            a[[v, u]] = 0.0;
            degree[u] -= 1;
            degree[v] -= 1;
            pset.edge_flips.push(EdgeFlip::remove(u, v));
        } else {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
            degree[u] += 1;
            degree[v] += 1;
            pset.edge_flips.push(EdgeFlip::add(u, v));
        }
    }
    Ok(pset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{bow_embed, build_vocab};
    use crate::tagraph::{generate_synthetic_tag, split_nodes, SbmParams};

    fn toy_problem() -> (TextAttributedGraph, EmbeddingMatrix, NodeSplit) {
        let params = SbmParams {
            num_nodes: 14,
            num_classes: 2,
            intra_edge_prob: 0.5,
            inter_edge_prob: 0.1,
            vocab_size: 9,
            words_per_node: 4,
            class_word_skew: 0.7,
            seed: 6,
        };
        let graph = generate_synthetic_tag(&params).unwrap();
        let vocab = build_vocab(graph.texts(), 9, 1).unwrap();
        let features = bow_embed(graph.texts(), &vocab).unwrap();
        let split = split_nodes(&graph, 0.3, 0.2, 1).unwrap();
        (graph, features, split)
    }

    #[test]
    fn meta_gradient_matches_finite_differences() {
        let (graph, features, split) = toy_problem();
        let n = graph.num_nodes();
        let labeled: Vec<usize> = split.train.iter().chain(split.val.iter()).copied().collect();
        let unlabeled: Vec<usize> = (0..n).filter(|i| !labeled.contains(i)).collect();
        let targets: Vec<usize> = graph.labels().to_vec();
        let cfg = MetaAttackConfig {
            inner_steps: 5,
            inner_lr: 0.05,
        };
        let problem = MetaProblem {
            x: features.data(),
            train_targets: &targets,
            attack_targets: &targets,
            labeled: &labeled,
            unlabeled: &unlabeled,
            cfg,
        };
        let mut a = Array2::zeros((n, n));
        for &(u, v) in graph.edges() {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        let grad = problem.meta_gradient(&a);
        let h = 1e-5;
        for &(u, v) in &[(0usize, 1usize), (2, 9), (5, 6), (3, 12)] {
            let mut plus = a.clone();
            plus[[u, v]] += h;
            plus[[v, u]] += h;
            let mut minus = a.clone();
            minus[[u, v]] -= h;
            minus[[v, u]] -= h;
            let numeric = (problem.attacker_loss(&plus) - problem.attacker_loss(&minus)) / (2.0 * h);
            let analytic = grad[[u, v]] + grad[[v, u]];
            assert!(
                (numeric - analytic).abs() < 1e-6 * numeric.abs().max(analytic.abs()).max(1.0),
                "pair ({u},{v}): numeric {numeric} vs analytic {analytic}"
            );
        }
    }

    #[test]
    fn zero_budget_is_empty() {
        let (graph, features, split) = toy_problem();
        let pset = meta_gradient_attack(
            &graph,
            &features,
            &split,
            0.0,
            1,
            &MetaAttackConfig::default(),
        )
        .unwrap();
        assert!(pset.edge_flips.is_empty());
    }

    #[test]
    fn flips_are_valid_and_deterministic() {
        let (graph, features, split) = toy_problem();
        let cfg = MetaAttackConfig {
            inner_steps: 20,
            inner_lr: 0.05,
        };
        let a = meta_gradient_attack(&graph, &features, &split, 0.2, 3, &cfg).unwrap();
        let b = meta_gradient_attack(&graph, &features, &split, 0.2, 3, &cfg).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_eq!(
            a.edge_flips.len(),
            (0.2 * graph.num_edges() as f64).floor() as usize
        );
        // Every flip changes adjacency state: validation replays them.
        a.validate_against(&graph).unwrap();
    }

    #[test]
    fn attacker_loss_rises_along_the_greedy_path() {
        let (graph, features, split) = toy_problem();
        let cfg = MetaAttackConfig {
            inner_steps: 30,
            inner_lr: 0.05,
        };
        let pset = meta_gradient_attack(&graph, &features, &split, 0.15, 0, &cfg).unwrap();
        assert!(!pset.edge_flips.is_empty());

        let n = graph.num_nodes();
        let labeled: Vec<usize> = split.train.iter().chain(split.val.iter()).copied().collect();
        let unlabeled: Vec<usize> = (0..n).filter(|i| !labeled.contains(i)).collect();
        let surrogate = train_surrogate(&graph, &features, &labeled).unwrap();
        let mut targets = surrogate.predict_labels(&graph, &features);
        for &i in &labeled {
            targets[i] = graph.labels()[i];
        }
        let problem = MetaProblem {
            x: features.data(),
            train_targets: &targets,
            attack_targets: &targets,
            labeled: &labeled,
            unlabeled: &unlabeled,
            cfg,
        };
        let mut a = Array2::zeros((n, n));
        for &(u, v) in graph.edges() {
            a[[u, v]] = 1.0;
            a[[v, u]] = 1.0;
        }
        let before = problem.attacker_loss(&a);
        for flip in &pset.edge_flips {
            let val = match flip.op {
                crate::attacks::FlipOp::Add => 1.0,
                crate::attacks::FlipOp::Remove => 0.0,
            };
            a[[flip.u, flip.v]] = val;
            a[[flip.v, flip.u]] = val;
        }
        let after = problem.attacker_loss(&a);
        assert!(
            after > before,
            "attacker loss should rise: before {before}, after {after}"
        );
    }
}
