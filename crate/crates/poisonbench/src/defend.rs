//! Graph purification (embedding-similarity edge pruning) and randomized
//! smoothing certification under edge deletion.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::metrics::cosine;
use crate::tagraph::TextAttributedGraph;
use crate::victims::{predict_with_ctx, GraphCtx, VictimModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PurifyConfig {
    /// Drop every edge whose endpoint-embedding cosine falls strictly below
    /// the threshold.
    FixedThreshold { threshold: f64 },
    /// Drop the `quantile` fraction of edges with the lowest similarity
    /// (ties broken by edge order).
    Quantile { quantile: f64 },
}

impl PurifyConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            PurifyConfig::FixedThreshold { threshold } if !(-1.0..=1.0).contains(threshold) => {
                Err(Error::Config(format!(
                    "purify threshold must lie in [-1, 1], got {threshold}"
                )))
            }
            PurifyConfig::Quantile { quantile } if !(0.0..1.0).contains(quantile) => Err(
                Error::Config(format!("purify quantile must lie in [0, 1), got {quantile}")),
            ),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PurifyOutcome {
    pub graph: TextAttributedGraph,
    pub removed_edges: Vec<(usize, usize)>,
    pub warnings: Vec<String>,
}

/// Removes the lowest-similarity edges per the config. Never adds edges.
pub fn purify(
    graph: &TextAttributedGraph,
    emb: &EmbeddingMatrix,
    cfg: &PurifyConfig,
) -> Result<PurifyOutcome> {
    cfg.validate()?;
    if emb.rows() != graph.num_nodes() {
        return Err(Error::Shape("embedding rows do not match graph".into()));
    }
    let sims: Vec<f64> = graph
        .edges()
        .iter()
        .map(|&(u, v)| cosine(&emb.row(u).to_owned(), &emb.row(v).to_owned()))
        .collect();

    let mut removed: Vec<(usize, usize)> = Vec::new();
    match *cfg {
        PurifyConfig::FixedThreshold { threshold } => {
            for (&edge, &sim) in graph.edges().iter().zip(sims.iter()) {
                if sim < threshold {
                    removed.push(edge);
                }
            }
        }
        PurifyConfig::Quantile { quantile } => {
            let k = (quantile * graph.num_edges() as f64).floor() as usize;
            let mut order: Vec<usize> = (0..graph.num_edges()).collect();
            order.sort_by(|&a, &b| {
                sims[a]
                    .partial_cmp(&sims[b])
                    .unwrap()
                    .then(graph.edges()[a].cmp(&graph.edges()[b]))
            });
            removed = order[..k].iter().map(|&i| graph.edges()[i]).collect();
            removed.sort_unstable();
        }
    }

    let mut warnings = Vec::new();
    if removed.len() == graph.num_edges() && !removed.is_empty() {
        warnings.push("purification removed every edge".to_string());
    }
    let removed_set: std::collections::BTreeSet<(usize, usize)> = removed.iter().copied().collect();
    let kept: Vec<(usize, usize)> = graph
        .edges()
        .iter()
        .copied()
        .filter(|e| !removed_set.contains(e))
        .collect();
    Ok(PurifyOutcome {
        graph: graph.with_edges(&kept)?,
        removed_edges: removed,
        warnings,
    })
}

/// Randomized-smoothing parameters. Additions are never sampled; the
/// certificate below is valid exactly because deletion is the only noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingConfig {
    pub p_del: f64,
    pub num_samples: usize,
    pub alpha: f64,
    pub seed: u64,
    /// When set, a node counts as "correctly classified" for CA if the base
    /// classifier is correct on the unperturbed graph, rather than the
    /// smoothed majority prediction.
    #[serde(default)]
    pub correct_by_base: bool,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self {
            p_del: 0.4,
            num_samples: 10_000,
            alpha: 0.05,
            seed: 0,
            correct_by_base: false,
        }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.p_del) || self.p_del == 0.0 {
            return Err(Error::Config(format!(
                "p_del must lie in (0, 1), got {}",
                self.p_del
            )));
        }
        if self.num_samples < 100 {
            return Err(Error::Config("num_samples must be at least 100".into()));
        }
        if !(0.0..1.0).contains(&self.alpha) || self.alpha == 0.0 {
            return Err(Error::Config(format!(
                "alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

/// Independently keeps each edge with probability 1 - p_del.
pub fn sample_deleted_edges(
    edges: &[(usize, usize)],
    p_del: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    edges
        .iter()
        .copied()
        .filter(|_| rng.gen::<f64>() >= p_del)
        .collect()
}

/// Full-graph variant of [`sample_deleted_edges`], carrying texts and labels.
pub fn sample_deleted_graph(
    graph: &TextAttributedGraph,
    p_del: f64,
    rng: &mut ChaCha8Rng,
) -> Result<TextAttributedGraph> {
    if !(0.0..1.0).contains(&p_del) || p_del == 0.0 {
        return Err(Error::Config(format!("p_del must lie in (0, 1), got {p_del}")));
    }
    let kept = sample_deleted_edges(graph.edges(), p_del, rng);
    graph.with_edges(&kept)
}

/// Anything that classifies every node of an edge-subset graph. The victim
/// models implement it; tests plug in exhaustive lookup tables.
pub trait GraphClassifier {
    fn predict_classes(&self, num_nodes: usize, edges: &[(usize, usize)]) -> Vec<usize>;
    fn num_classes(&self) -> usize;
}

/// Victim model bound to a fixed feature matrix.
pub struct VictimClassifier<'a> {
    pub model: &'a VictimModel,
    pub features: &'a EmbeddingMatrix,
}

impl GraphClassifier for VictimClassifier<'_> {
    fn predict_classes(&self, num_nodes: usize, edges: &[(usize, usize)]) -> Vec<usize> {
        let ctx = GraphCtx::from_edges(num_nodes, edges);
        predict_with_ctx(self.model, &ctx, self.features)
            .expect("shape checked at certification entry")
            .classes
    }

    fn num_classes(&self) -> usize {
        self.model.num_classes
    }
}

/// One-sided Clopper-Pearson lower confidence bound: the alpha quantile of
/// Beta(k, n - k + 1); 0 at k = 0 and alpha^(1/n) at k = n.
pub fn clopper_pearson_lower(k: usize, n: usize, alpha: f64) -> Result<f64> {
    if n == 0 || k > n {
        return Err(Error::Validation(format!(
            "invalid Clopper-Pearson input k={k}, n={n}"
        )));
    }
    if !(0.0..1.0).contains(&alpha) || alpha == 0.0 {
        return Err(Error::Validation(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if k == 0 {
        return Ok(0.0);
    }
    if k == n {
        return Ok(alpha.powf(1.0 / n as f64));
    }
    Ok(beta_quantile(alpha, k as f64, (n - k + 1) as f64))
}

/// Quantile of Beta(a, b) by bisection on the regularized incomplete beta
/// function.
fn beta_quantile(p: f64, a: f64, b: f64) -> f64 {
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if incomplete_beta_regularized(a, b, mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-14 {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Regularized incomplete beta I_x(a, b) via the continued-fraction
/// expansion (Lentz's algorithm).
pub fn incomplete_beta_regularized(a: f64, b: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(a, b, x) / a
    } else {
        1.0 - ln_front.exp() * beta_cf(b, a, 1.0 - x) / b
    }
}

fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const MAX_ITER: usize = 300;
    const EPS: f64 = 1e-15;
    const TINY: f64 = 1e-300;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

/// Lanczos approximation of ln Gamma.
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.180_091_729_471_46,
        -86.505_320_329_416_77,
        24.014_098_240_830_91,
        -1.231_739_572_450_155,
        0.120_865_097_386_617_7e-2,
        -0.539_523_938_495_3e-5,
    ];
    let mut y = x;
    let tmp = x + 5.5;
    let tmp = tmp - (x + 0.5) * tmp.ln();
    let mut ser = 1.000_000_000_190_015;
    for c in COEFFS {
        y += 1.0;
        ser += c / y;
    }
    -tmp + (2.506_628_274_631_000_5 * ser / x).ln()
}

/// Largest integer radius r with p_lower > 1 - 0.5 * p_del^r, or 0.
///
/// With deletion-only noise the adversary's r removed edges split the sample
/// space into two likelihood regions: "all r edges were deleted in the
/// sample" (clean-measure p_del^r, perturbed-measure 1) and its complement
/// (perturbed-measure 0). The worst-case smoothed probability is therefore
/// (p_lower - (1 - p_del^r)) / p_del^r, and certification requires it to
/// exceed one half.
pub fn certified_radius(p_lower: f64, p_del: f64) -> usize {
    if !(0.0..1.0).contains(&p_del) || p_del <= 0.0 {
        return 0;
    }
    let mut r = 0usize;
    while r < 4096 {
        let next = r + 1;
        let threshold = 1.0 - 0.5 * p_del.powi(next as i32);
        if p_lower > threshold {
            r = next;
        } else {
            break;
        }
    }
    r
}

/// Smoothed prediction of one node: majority class over `num_samples`
/// edge-deletion samples (ties to the smaller class id) and its
/// Clopper-Pearson lower bound. Sample i draws from an independent
/// counter-derived stream, so tallies merge associatively.
pub fn smoothed_predict(
    clf: &dyn GraphClassifier,
    graph: &TextAttributedGraph,
    node: usize,
    cfg: &SmoothingConfig,
) -> Result<(usize, f64)> {
    let result = certify_nodes(clf, graph, &[node], cfg)?;
    let counts = &result[0];
    let (class, count) = majority(counts);
    let p_lower = clopper_pearson_lower(count, cfg.num_samples, cfg.alpha)?;
    Ok((class, p_lower))
}

fn majority(counts: &[usize]) -> (usize, usize) {
    let mut best = 0usize;
    let mut best_count = 0usize;
    for (c, &count) in counts.iter().enumerate() {
        if count > best_count {
            best = c;
            best_count = count;
        }
    }
    (best, best_count)
}

/// Per-node class tallies over the shared Monte-Carlo samples.
fn certify_nodes(
    clf: &dyn GraphClassifier,
    graph: &TextAttributedGraph,
    nodes: &[usize],
    cfg: &SmoothingConfig,
) -> Result<Vec<Vec<usize>>> {
    cfg.validate()?;
    let n = graph.num_nodes();
    for &node in nodes {
        if node >= n {
            return Err(Error::Validation(format!("node {node} out of range")));
        }
    }
    let classes = clf.num_classes();
    let mut tallies = vec![vec![0usize; classes]; nodes.len()];
    for sample in 0..cfg.num_samples {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(sample as u64 + 1);
        let kept = sample_deleted_edges(graph.edges(), cfg.p_del, &mut rng);
        let preds = clf.predict_classes(n, &kept);
        for (slot, &node) in nodes.iter().enumerate() {
            tallies[slot][preds[node]] += 1;
        }
    }
    Ok(tallies)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertRow {
    pub node: usize,
    pub pred: usize,
    pub correct: bool,
    pub count: usize,
    pub p_lower: f64,
    pub radius: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CertResult {
    pub rows: Vec<CertRow>,
    /// Percentage of nodes whose smoothed prediction is correct and certified
    /// at radius >= 1.
    pub ca: f64,
    /// Mean radius over all evaluated nodes; wrong or uncertified nodes
    /// contribute 0.
    pub mcr: f64,
    /// Mean radius over correctly certified nodes only (0 when none).
    pub mcr_certified_only: f64,
    pub config: SmoothingConfig,
}

/// Certifies every node in `node_set`: smoothed prediction, Clopper-Pearson
/// lower bound, deletion radius, and the CA / MCR aggregates.
pub fn certify_set(
    clf: &dyn GraphClassifier,
    graph: &TextAttributedGraph,
    node_set: &[usize],
    labels: &[usize],
    cfg: &SmoothingConfig,
) -> Result<CertResult> {
    if node_set.is_empty() {
        return Err(Error::Validation("empty certification node set".into()));
    }
    let tallies = certify_nodes(clf, graph, node_set, cfg)?;
    let base_preds = if cfg.correct_by_base {
        Some(clf.predict_classes(graph.num_nodes(), graph.edges()))
    } else {
        None
    };
    let mut rows = Vec::with_capacity(node_set.len());
    let mut certified_correct = 0usize;
    let mut radius_sum = 0usize;
    let mut certified_radius_sum = 0usize;
    for (slot, &node) in node_set.iter().enumerate() {
        let (pred, count) = majority(&tallies[slot]);
        let p_lower = clopper_pearson_lower(count, cfg.num_samples, cfg.alpha)?;
        let radius = certified_radius(p_lower, cfg.p_del);
        let correct = match &base_preds {
            Some(base) => base[node] == labels[node],
            None => pred == labels[node],
        };
        if correct {
            radius_sum += radius;
            if radius >= 1 {
                certified_correct += 1;
                certified_radius_sum += radius;
            }
        }
        rows.push(CertRow {
            node,
            pred,
            correct,
            count,
            p_lower,
            radius,
        });
    }
    let m = node_set.len() as f64;
    Ok(CertResult {
        ca: 100.0 * certified_correct as f64 / m,
        mcr: radius_sum as f64 / m,
        mcr_certified_only: if certified_correct > 0 {
            certified_radius_sum as f64 / certified_correct as f64
        } else {
            0.0
        },
        rows,
        config: *cfg,
    })
}
