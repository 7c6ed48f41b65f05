//! Targeted structural attack: greedy exact margin minimization of one node
//! under the linearized surrogate, over flips incident to the target and its
//! one-hop neighbors.

use ndarray::Array2;

use super::{BudgetSpec, EdgeFlip, FlipOp, PerturbationSet};
use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::tagraph::TextAttributedGraph;
use crate::victims::{NormalizedAdjacency, SurrogateModel};

/// Surrogate margin of `target` under an explicit edge list: the anchor-class
/// logit of A_hat^2 X W at the target row minus the best other logit.
/// `xw` is the precomputed X W. Full recomputation; the greedy loop uses the
/// equivalent local evaluation below, which a unit test pins against this.
pub(crate) fn margin_for_edges(
    n: usize,
    edges: &[(usize, usize)],
    xw: &Array2<f64>,
    target: usize,
    anchor: usize,
) -> f64 {
    let adj = NormalizedAdjacency::from_edges(n, edges);
    let z = adj.apply(xw);
    let classes = xw.ncols();
    let mut logits = vec![0.0; classes];
    for (j, w) in adj.row(target) {
        for (c, logit) in logits.iter_mut().enumerate() {
            *logit += w * z[[j, c]];
        }
    }
    margin_of(&logits, anchor)
}

fn margin_of(logits: &[f64], anchor: usize) -> f64 {
    let mut best_other = f64::NEG_INFINITY;
    for (c, &v) in logits.iter().enumerate() {
        if c != anchor {
            best_other = best_other.max(v);
        }
    }
    logits[anchor] - best_other
}

/// Mutable adjacency-list graph the greedy loop walks, with exact local
/// margin evaluation under a candidate flip overlay.
struct WorkGraph {
    adj: Vec<Vec<usize>>,
}

impl WorkGraph {
    fn from_graph(graph: &TextAttributedGraph) -> Self {
        Self {
            adj: (0..graph.num_nodes())
                .map(|i| graph.neighbors(i).to_vec())
                .collect(),
        }
    }

    fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&v).is_ok()
    }

    fn apply(&mut self, flip: &EdgeFlip) {
        match flip.op {
            FlipOp::Add => {
                let pos = self.adj[flip.u].binary_search(&flip.v).unwrap_err();
                self.adj[flip.u].insert(pos, flip.v);
                let pos = self.adj[flip.v].binary_search(&flip.u).unwrap_err();
                self.adj[flip.v].insert(pos, flip.u);
            }
            FlipOp::Remove => {
                self.adj[flip.u].retain(|&x| x != flip.v);
                self.adj[flip.v].retain(|&x| x != flip.u);
            }
        }
    }

    /// Degree of `x` in A + I under the flip overlay.
    fn overlay_degree(&self, x: usize, flip: Option<&EdgeFlip>) -> f64 {
        let mut d = self.adj[x].len() + 1;
        if let Some(f) = flip {
            if f.u == x || f.v == x {
                match f.op {
                    FlipOp::Add => d += 1,
                    FlipOp::Remove => d -= 1,
                }
            }
        }
        d as f64
    }

    /// Calls `visit(k)` for every k in N'(x) plus the self-loop, where N' is
    /// the neighborhood under the flip overlay.
    fn overlay_neighbors(&self, x: usize, flip: Option<&EdgeFlip>, mut visit: impl FnMut(usize)) {
        let (skip, extra) = match flip {
            Some(f) if f.u == x || f.v == x => {
                let other = if f.u == x { f.v } else { f.u };
                match f.op {
                    FlipOp::Remove => (Some(other), None),
                    FlipOp::Add => (None, Some(other)),
                }
            }
            _ => (None, None),
        };
        for &k in &self.adj[x] {
            if Some(k) != skip {
                visit(k);
            }
        }
        if let Some(k) = extra {
            visit(k);
        }
        visit(x);
    }

    /// Exact margin of `target` under the overlay, touching only the
    /// target's overlay neighborhood and its neighbors' neighborhoods:
    /// logits = row_t(A_hat (A_hat X W)).
    fn local_margin(
        &self,
        flip: Option<&EdgeFlip>,
        xw: &Array2<f64>,
        target: usize,
        anchor: usize,
    ) -> f64 {
        let classes = xw.ncols();
        let d_t = self.overlay_degree(target, flip);
        let mut logits = vec![0.0; classes];
        self.overlay_neighbors(target, flip, |j| {
            let d_j = self.overlay_degree(j, flip);
            // y_j = row_j(A_hat) . xw
            let mut y = vec![0.0; classes];
            self.overlay_neighbors(j, flip, |k| {
                let d_k = self.overlay_degree(k, flip);
                let w = 1.0 / (d_j * d_k).sqrt();
                for (c, yc) in y.iter_mut().enumerate() {
                    *yc += w * xw[[k, c]];
                }
            });
            let w = 1.0 / (d_t * d_j).sqrt();
            for (c, logit) in logits.iter_mut().enumerate() {
                *logit += w * y[c];
            }
        });
        margin_of(&logits, anchor)
    }
}

fn clean_anchor(
    graph: &TextAttributedGraph,
    xw: &Array2<f64>,
    target: usize,
) -> usize {
    let adj = NormalizedAdjacency::from_graph(graph);
    let z = adj.apply(xw);
    let mut logits = vec![0.0; xw.ncols()];
    for (j, w) in adj.row(target) {
        for (c, logit) in logits.iter_mut().enumerate() {
            *logit += w * z[[j, c]];
        }
    }
    logits
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(c, _)| c)
        .unwrap()
}

/// Greedy targeted attack. The candidate pool is fixed up front: every flip
/// incident to the target or to one of its clean-graph neighbors. Each step
/// evaluates every remaining candidate's exact surrogate margin and applies
/// the flip with the lowest resulting margin; the greedy loop stops early
/// (with a warning) if no candidate can avoid increasing the margin. The
/// anchor class is the surrogate's clean-graph prediction for the target.
pub fn targeted_gradient_attack(
    graph: &TextAttributedGraph,
    features: &EmbeddingMatrix,
    surrogate: &SurrogateModel,
    target: usize,
    per_target_budget: usize,
) -> Result<PerturbationSet> {
    let budget_spec = BudgetSpec::per_target(per_target_budget);
    budget_spec.validate()?;
    let n = graph.num_nodes();
    if target >= n {
        return Err(Error::Validation(format!("target {target} out of range")));
    }
    if features.rows() != n {
        return Err(Error::Shape("features do not match graph".into()));
    }

    let xw = features.data().dot(&surrogate.w);
    let anchor = clean_anchor(graph, &xw, target);

    // Candidate pool: pairs (x, w) with x in {target} union N(target).
    let mut local = vec![target];
    local.extend_from_slice(graph.neighbors(target));
    local.sort_unstable();
    local.dedup();
    let mut pool = std::collections::BTreeSet::new();
    for &x in &local {
        for w in 0..n {
            if w != x {
                pool.insert((x.min(w), x.max(w)));
            }
        }
    }
    if pool.is_empty() {
        return Err(Error::NoCandidates { target });
    }

    let mut pset = PerturbationSet::new("targeted_gradient", 0, budget_spec);
    let mut work = WorkGraph::from_graph(graph);
    let mut current_margin = work.local_margin(None, &xw, target, anchor);

    for _ in 0..per_target_budget {
        let mut best: Option<(EdgeFlip, f64)> = None;
        for &(u, v) in &pool {
            let flip = if work.has_edge(u, v) {
                EdgeFlip::remove(u, v)
            } else {
                EdgeFlip::add(u, v)
            };
            let margin = work.local_margin(Some(&flip), &xw, target, anchor);
            let better = match best {
                None => true,
                Some((_, m)) => margin < m,
            };
            if better {
                best = Some((flip, margin));
            }
        }
        let Some((flip, margin)) = best else {
            pset.warnings.push("candidate pool exhausted".into());
            break;
        };
        if margin > current_margin + 1e-12 {
            pset.warnings.push(format!(
                "stopping after {} flips: every remaining candidate increases the margin",
                pset.edge_flips.len()
            ));
            break;
        }
        pool.remove(&flip.pair());
        work.apply(&flip);
        pset.edge_flips.push(flip);
        current_margin = margin;
    }
    if pset.edge_flips.len() < per_target_budget && pset.warnings.is_empty() {
        pset.warnings.push(format!(
            "pool exhausted after {} of {per_target_budget} flips",
            pset.edge_flips.len()
        ));
    }
    Ok(pset)
}

/// Margins along a replay of the flips, starting from the clean graph. Test
/// hook for the non-increasing greedy contract.
pub fn margin_trace(
    graph: &TextAttributedGraph,
    features: &EmbeddingMatrix,
    surrogate: &SurrogateModel,
    target: usize,
    pset: &PerturbationSet,
) -> Vec<f64> {
    let n = graph.num_nodes();
    let xw = features.data().dot(&surrogate.w);
    let anchor = clean_anchor(graph, &xw, target);
    let mut edges: Vec<(usize, usize)> = graph.edges().to_vec();
    let mut trace = vec![margin_for_edges(n, &edges, &xw, target, anchor)];
    for flip in &pset.edge_flips {
        match flip.op {
            FlipOp::Add => edges.push(flip.pair()),
            FlipOp::Remove => edges.retain(|&e| e != flip.pair()),
        }
        trace.push(margin_for_edges(n, &edges, &xw, target, anchor));
    }
    trace
}
