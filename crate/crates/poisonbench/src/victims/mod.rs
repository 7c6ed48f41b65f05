//! GNN victim models, training, prediction, and the linearized surrogate
//! used by the gray-box attacks.

pub mod adjacency;
mod gat;
mod gcn;
pub(crate) mod nn;
mod sage;

pub use adjacency::{MeanAdjacency, NormalizedAdjacency, SelfLoopCsr};
pub use gat::GatParams;
pub use gcn::GcnParams;
pub use sage::SageParams;

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::tagraph::{NodeSplit, TextAttributedGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GnnKind {
    Gcn,
    Gat,
    Sage,
}

impl std::fmt::Display for GnnKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            GnnKind::Gcn => write!(f, "gcn"),
            GnnKind::Gat => write!(f, "gat"),
            GnnKind::Sage => write!(f, "sage"),
        }
    }
}

impl std::str::FromStr for GnnKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gcn" => Ok(GnnKind::Gcn),
            "gat" => Ok(GnnKind::Gat),
            "sage" => Ok(GnnKind::Sage),
            other => Err(Error::Config(format!("unknown GNN kind {other:?}"))),
        }
    }
}

/// Architecture descriptor. Defaults follow the standard two-layer setup:
/// hidden 256, dropout 0.5, eight attention heads on the first GAT layer and
/// one on the second, mean aggregation for the sampling-free backbone.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnArch {
    pub kind: GnnKind,
    pub layers: usize,
    pub hidden: usize,
    pub dropout: f64,
    pub heads_layer1: usize,
    pub heads_layer2: usize,
    pub sage_aggregator: String,
}

impl GnnArch {
    pub fn new(kind: GnnKind) -> Self {
        Self {
            kind,
            layers: 2,
            hidden: 256,
            dropout: 0.5,
            heads_layer1: 8,
            heads_layer2: 1,
            sage_aggregator: "mean".into(),
        }
    }

    pub fn gcn() -> Self {
        Self::new(GnnKind::Gcn)
    }

    pub fn gat() -> Self {
        Self::new(GnnKind::Gat)
    }

    pub fn sage() -> Self {
        Self::new(GnnKind::Sage)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers != 2 {
            return Err(Error::Config(format!(
                "only two-layer backbones are implemented, got layers={}",
                self.layers
            )));
        }
        if self.hidden == 0 {
            return Err(Error::Config("hidden must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config("dropout must lie in [0, 1)".into()));
        }
        if self.kind == GnnKind::Gat {
            if self.heads_layer1 == 0 || !self.hidden.is_multiple_of(self.heads_layer1) {
                return Err(Error::Config(format!(
                    "hidden {} must be divisible by heads_layer1 {}",
                    self.hidden, self.heads_layer1
                )));
            }
            if self.heads_layer2 != 1 {
                return Err(Error::Config(
                    "the second attention layer uses a single head".into(),
                ));
            }
        }
        if self.kind == GnnKind::Sage && self.sage_aggregator != "mean" {
            return Err(Error::Config(format!(
                "unsupported aggregator {:?}",
                self.sage_aggregator
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 300,
            weight_decay: 5e-4,
            early_stop_patience: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.learning_rate <= 0.0 {
            return Err(Error::Config("learning_rate must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        Ok(())
    }
}

/// Sparse operators for one graph, shared by every forward pass on it.
pub struct GraphCtx {
    pub adj: NormalizedAdjacency,
    pub csr: SelfLoopCsr,
    pub mean: MeanAdjacency,
}

impl GraphCtx {
    pub fn from_graph(graph: &TextAttributedGraph) -> Self {
        Self::from_edges(graph.num_nodes(), graph.edges())
    }

    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        Self {
            adj: NormalizedAdjacency::from_edges(n, edges),
            csr: SelfLoopCsr::from_edges(n, edges),
            mean: MeanAdjacency::from_edges(n, edges),
        }
    }
}

/// A_hat = D^{-1/2} (A + I) D^{-1/2} for the graph.
pub fn normalize_adjacency(graph: &TextAttributedGraph) -> NormalizedAdjacency {
    NormalizedAdjacency::from_graph(graph)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Params {
    Gcn(GcnParams),
    Gat(GatParams),
    Sage(SageParams),
}

impl Params {
    fn init(
        arch: &GnnArch,
        in_dim: usize,
        classes: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        match arch.kind {
            GnnKind::Gcn => Params::Gcn(GcnParams::init(in_dim, arch.hidden, classes, rng)),
            GnnKind::Gat => Params::Gat(GatParams::init(
                in_dim,
                arch.hidden,
                classes,
                arch.heads_layer1,
                rng,
            )),
            GnnKind::Sage => Params::Sage(SageParams::init(in_dim, arch.hidden, classes, rng)),
        }
    }

    fn tensor_shapes(&self) -> Vec<usize> {
        match self {
            Params::Gcn(p) => p.tensor_shapes(),
            Params::Gat(p) => p.tensor_shapes(),
            Params::Sage(p) => p.tensor_shapes(),
        }
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Params::Gcn(p) => p.tensors_mut(),
            Params::Gat(p) => p.tensors_mut(),
            Params::Sage(p) => p.tensors_mut(),
        }
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Params::Gcn(p) => p.tensors(),
            Params::Gat(p) => p.tensors(),
            Params::Sage(p) => p.tensors(),
        }
    }

    fn is_finite(&self) -> bool {
        self.tensors()
            .iter()
            .all(|t| t.iter().all(|v| v.is_finite()))
    }
}

/// A trained victim: architecture, weights, the seed that produced them and
/// the best validation accuracy observed during training.
#[derive(Debug, Clone)]
pub struct VictimModel {
    pub arch: GnnArch,
    pub params: Params,
    pub input_dim: usize,
    pub num_classes: usize,
    pub seed: u64,
    pub final_val_accuracy: Option<f64>,
}

/// Forward pass producing logits. `training_rng` enables dropout.
fn forward(
    arch: &GnnArch,
    params: &Params,
    ctx: &GraphCtx,
    x: &Array2<f64>,
    training_rng: Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, Cache) {
    match params {
        Params::Gcn(p) => {
            let (logits, cache) = gcn::forward(p, &ctx.adj, x, arch.dropout, training_rng);
            (logits, Cache::Gcn(cache))
        }
        Params::Gat(p) => {
            let (logits, cache) = gat::forward(p, &ctx.csr, x, arch.dropout, training_rng);
            (logits, Cache::Gat(cache))
        }
        Params::Sage(p) => {
            let (logits, cache) = sage::forward(p, &ctx.mean, x, arch.dropout, training_rng);
            (logits, Cache::Sage(cache))
        }
    }
}

enum Cache {
    Gcn(gcn::GcnCache),
    Gat(gat::GatCache),
    Sage(sage::SageCache),
}

fn backward(params: &Params, ctx: &GraphCtx, cache: &Cache, dlogits: &Array2<f64>) -> Params {
    match (params, cache) {
        (Params::Gcn(p), Cache::Gcn(c)) => Params::Gcn(gcn::backward(p, &ctx.adj, c, dlogits)),
        (Params::Gat(p), Cache::Gat(c)) => Params::Gat(gat::backward(p, &ctx.csr, c, dlogits)),
        (Params::Sage(p), Cache::Sage(c)) => Params::Sage(sage::backward(p, &ctx.mean, c, dlogits)),
        _ => unreachable!("cache kind matches params kind"),
    }
}

fn accuracy_from_logits(logits: &Array2<f64>, labels: &[usize], nodes: &[usize]) -> f64 {
    if nodes.is_empty() {
        return 0.0;
    }
    let correct = nodes
        .iter()
        .filter(|&&n| argmax_row(logits, n) == labels[n])
        .count();
    correct as f64 / nodes.len() as f64
}

fn argmax_row(logits: &Array2<f64>, row: usize) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (c, &v) in logits.row(row).iter().enumerate() {
        if v > best_v {
            best_v = v;
            best = c;
        }
    }
    best
}

/// Trains a victim by full-batch adaptive-moment descent on the train-node
/// cross-entropy, early-stopping on validation accuracy and restoring the
/// best-validation weights. Deterministic for a fixed seed on a single thread.
pub fn train_gnn(
    arch: &GnnArch,
    graph: &TextAttributedGraph,
    features: &EmbeddingMatrix,
    split: &NodeSplit,
    cfg: &TrainConfig,
) -> Result<VictimModel> {
    arch.validate()?;
    cfg.validate()?;
    split.validate(graph.num_nodes())?;
    if features.rows() != graph.num_nodes() {
        return Err(Error::Shape(format!(
            "feature matrix has {} rows for a graph of {} nodes",
            features.rows(),
            graph.num_nodes()
        )));
    }

    let ctx = GraphCtx::from_graph(graph);
    let x = features.data();
    let labels = graph.labels();
    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut params = Params::init(arch, features.dim(), graph.num_classes(), &mut init_rng);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9));
    let mut opt = nn::Adam::new(cfg.learning_rate, cfg.weight_decay, &params.tensor_shapes());

    let mut best: Option<(f64, Params)> = None;
    let mut stale = 0usize;
    for epoch in 0..cfg.epochs {
        let (logits, cache) = forward(arch, &params, &ctx, x, Some(&mut dropout_rng));
        let (loss, dlogits) = nn::masked_cross_entropy(&logits, labels, &split.train);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let grads = backward(&params, &ctx, &cache, &dlogits);
        let grad_tensors = grads.tensors();
        let mut param_tensors = params.tensors_mut();
        opt.step(&mut param_tensors, &grad_tensors);
        drop(param_tensors);
        if !params.is_finite() {
            return Err(Error::Divergence { epoch });
        }

        if !split.val.is_empty() {
            let (eval_logits, _) = forward(arch, &params, &ctx, x, None);
            let val_acc = accuracy_from_logits(&eval_logits, labels, &split.val);
            let improved = best.as_ref().is_none_or(|(b, _)| val_acc > *b);
            if improved {
                best = Some((val_acc, params.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale >= cfg.early_stop_patience {
                    break;
                }
            }
        }
    }

    let (final_val_accuracy, params) = match best {
        Some((acc, p)) => (Some(acc), p),
        None => (None, params),
    };
    Ok(VictimModel {
        arch: arch.clone(),
        params,
        input_dim: features.dim(),
        num_classes: graph.num_classes(),
        seed: cfg.seed,
        final_val_accuracy,
    })
}

/// Per-node predicted class and softmax probabilities (dropout disabled).
#[derive(Debug, Clone)]
pub struct Predictions {
    pub classes: Vec<usize>,
    pub probs: Array2<f64>,
}

pub fn predict(
    model: &VictimModel,
    graph: &TextAttributedGraph,
    features: &EmbeddingMatrix,
) -> Result<Predictions> {
    let ctx = GraphCtx::from_graph(graph);
    predict_with_ctx(model, &ctx, features)
}

/// Prediction against a prebuilt operator set; used by smoothing, where many
/// edge-subset graphs share the same features.
pub fn predict_with_ctx(
    model: &VictimModel,
    ctx: &GraphCtx,
    features: &EmbeddingMatrix,
) -> Result<Predictions> {
    if features.rows() != ctx.adj.num_nodes() {
        return Err(Error::Shape(format!(
            "feature matrix has {} rows for a graph of {} nodes",
            features.rows(),
            ctx.adj.num_nodes()
        )));
    }
    if features.dim() != model.input_dim {
        return Err(Error::Shape(format!(
            "feature dim {} does not match model input dim {}",
            features.dim(),
            model.input_dim
        )));
    }
    let (logits, _) = forward(&model.arch, &model.params, ctx, features.data(), None);
    let probs = nn::softmax_rows(&logits);
    let classes = (0..probs.nrows()).map(|i| argmax_row(&probs, i)).collect();
    Ok(Predictions { classes, probs })
}

/// Fraction of `node_set` classified correctly, in [0, 1].
pub fn evaluate_accuracy(
    model: &VictimModel,
    graph: &TextAttributedGraph,
    features: &EmbeddingMatrix,
    node_set: &[usize],
) -> Result<f64> {
    if node_set.is_empty() {
        return Err(Error::Validation("empty evaluation node set".into()));
    }
    let preds = predict(model, graph, features)?;
    let labels = graph.labels();
    let correct = node_set
        .iter()
        .filter(|&&n| preds.classes[n] == labels[n])
        .count();
    Ok(correct as f64 / node_set.len() as f64)
}

/// Linearized two-layer surrogate: logits = A_hat^2 X W, trained on labeled
/// nodes only. This is what the gray-box attacks differentiate against.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateModel {
    pub w: Array2<f64>,
}

pub const SURROGATE_LR: f64 = 0.01;
pub const SURROGATE_EPOCHS: usize = 200;

impl SurrogateModel {
    /// Propagated features A_hat^2 X.
    pub fn propagate(adj: &NormalizedAdjacency, x: &Array2<f64>) -> Array2<f64> {
        adj.apply(&adj.apply(x))
    }

    pub fn logits(&self, propagated: &Array2<f64>) -> Array2<f64> {
        propagated.dot(&self.w)
    }

    pub fn predict_labels(
        &self,
        graph: &TextAttributedGraph,
        features: &EmbeddingMatrix,
    ) -> Vec<usize> {
        let adj = NormalizedAdjacency::from_graph(graph);
        let logits = self.logits(&Self::propagate(&adj, features.data()));
        (0..logits.nrows()).map(|i| argmax_row(&logits, i)).collect()
    }

    /// Classification margin of `node` w.r.t. `anchor`: logit of the anchor
    /// class minus the best other logit. Negative means misclassified.
    pub fn margin(&self, propagated_row: &Array1<f64>, anchor: usize) -> f64 {
        let logits = propagated_row.dot(&self.w);
        let mut best_other = f64::NEG_INFINITY;
        for (c, &v) in logits.iter().enumerate() {
            if c != anchor {
                best_other = best_other.max(v);
            }
        }
        logits[anchor] - best_other
    }
}

/// Fits the surrogate weight matrix by cross-entropy on the labeled nodes.
/// Starts from zero weights, so the fit is deterministic.
pub fn train_surrogate(
    graph: &TextAttributedGraph,
    features: &EmbeddingMatrix,
    labeled_nodes: &[usize],
) -> Result<SurrogateModel> {
    if labeled_nodes.is_empty() {
        return Err(Error::Validation("no labeled nodes for surrogate".into()));
    }
    if features.rows() != graph.num_nodes() {
        return Err(Error::Shape(format!(
            "feature matrix has {} rows for a graph of {} nodes",
            features.rows(),
            graph.num_nodes()
        )));
    }
    let adj = NormalizedAdjacency::from_graph(graph);
    let propagated = SurrogateModel::propagate(&adj, features.data());
    let labels = graph.labels();
    let mut w = Array2::<f64>::zeros((features.dim(), graph.num_classes()));
    let mut opt = nn::Adam::new(SURROGATE_LR, 0.0, &[w.len()]);
    for epoch in 0..SURROGATE_EPOCHS {
        let logits = propagated.dot(&w);
        let (loss, dlogits) = nn::masked_cross_entropy(&logits, labels, labeled_nodes);
        if !loss.is_finite() {
            return Err(Error::Divergence { epoch });
        }
        let grad = propagated.t().dot(&dlogits);
        let grad_slice = grad.as_slice().unwrap();
        let mut w_slice = w.as_slice_mut().unwrap();
        opt.step(&mut [&mut w_slice], &[grad_slice]);
    }
    Ok(SurrogateModel { w })
}

/// Compares the analytic gradient of the train-node cross-entropy against
/// central finite differences for every weight of a small dropout-free
/// backbone, returning the worst relative error. Diagnostic surface used by
/// the acceptance suite.
pub fn gradient_check(
    kind: GnnKind,
    graph: &TextAttributedGraph,
    features: &EmbeddingMatrix,
    hidden: usize,
    seed: u64,
) -> Result<f64> {
    let arch = GnnArch {
        hidden,
        dropout: 0.0,
        ..GnnArch::new(kind)
    };
    arch.validate()?;
    let ctx = GraphCtx::from_graph(graph);
    let labels = graph.labels();
    let nodes: Vec<usize> = (0..graph.num_nodes()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = Params::init(&arch, features.dim(), graph.num_classes(), &mut rng);

    let loss_of = |p: &Params| {
        let (logits, _) = forward(&arch, p, &ctx, features.data(), None);
        nn::masked_cross_entropy(&logits, labels, &nodes).0
    };
    let (logits, cache) = forward(&arch, &params, &ctx, features.data(), None);
    let (_, dlogits) = nn::masked_cross_entropy(&logits, labels, &nodes);
    let grads = backward(&params, &ctx, &cache, &dlogits);

    let grad_tensors = grads.tensors();
    let mut worst: f64 = 0.0;
    let h = 1e-5;
    for (t_idx, tensor) in grad_tensors.iter().enumerate() {
        for i in 0..tensor.len() {
            let mut plus = params.clone();
            plus.tensors_mut()[t_idx][i] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[t_idx][i] -= h;
            let numeric = (loss_of(&plus) - loss_of(&minus)) / (2.0 * h);
            let analytic = tensor[i];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[derive(Serialize, Deserialize)]
struct ModelManifest {
    arch: GnnArch,
    input_dim: usize,
    num_classes: usize,
    seed: u64,
    final_val_accuracy: Option<f64>,
    /// Flat tensor lengths, in serialization order. The weight blob stores
    /// the tensors back to back as little-endian f32.
    tensor_lens: Vec<usize>,
    tensor_order: Vec<String>,
}

fn tensor_order(arch: &GnnArch) -> Vec<String> {
    match arch.kind {
        GnnKind::Gcn => vec!["w1", "b1", "w2", "b2"]
            .into_iter()
            .map(String::from)
            .collect(),
        GnnKind::Gat => {
            let mut order = Vec::new();
            for h in 0..arch.heads_layer1 {
                order.push(format!("head1.{h}.w"));
                order.push(format!("head1.{h}.a_src"));
                order.push(format!("head1.{h}.a_dst"));
            }
            order.push("b1".into());
            order.push("head2.w".into());
            order.push("head2.a_src".into());
            order.push("head2.a_dst".into());
            order.push("b2".into());
            order
        }
        GnnKind::Sage => vec!["w_self1", "w_neigh1", "b1", "w_self2", "w_neigh2", "b2"]
            .into_iter()
            .map(String::from)
            .collect(),
    }
}

pub const MODEL_MANIFEST_FILE: &str = "model.json";
pub const MODEL_WEIGHTS_FILE: &str = "weights.bin";

/// Saves the model as a JSON manifest plus a flat little-endian f32 blob.
pub fn save_model(model: &VictimModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let tensors = model.params.tensors();
    let manifest = ModelManifest {
        arch: model.arch.clone(),
        input_dim: model.input_dim,
        num_classes: model.num_classes,
        seed: model.seed,
        final_val_accuracy: model.final_val_accuracy,
        tensor_lens: tensors.iter().map(|t| t.len()).collect(),
        tensor_order: tensor_order(&model.arch),
    };
    fs::write(
        dir.join(MODEL_MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    let mut blob = Vec::new();
    for tensor in tensors {
        for &v in tensor {
            blob.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    fs::write(dir.join(MODEL_WEIGHTS_FILE), blob)?;
    Ok(())
}

pub fn load_model(dir: &Path) -> Result<VictimModel> {
    let manifest: ModelManifest =
        serde_json::from_str(&fs::read_to_string(dir.join(MODEL_MANIFEST_FILE))?)?;
    manifest.arch.validate()?;
    let blob = fs::read(dir.join(MODEL_WEIGHTS_FILE))?;
    let expected: usize = manifest.tensor_lens.iter().sum::<usize>() * 4;
    if blob.len() != expected {
        return Err(Error::Shape(format!(
            "weight blob has {} bytes, manifest expects {expected}",
            blob.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut params = Params::init(
        &manifest.arch,
        manifest.input_dim,
        manifest.num_classes,
        &mut rng,
    );
    {
        let mut offset = 0usize;
        let mut tensors = params.tensors_mut();
        for tensor in tensors.iter_mut() {
            for v in tensor.iter_mut() {
                let bytes: [u8; 4] = blob[offset..offset + 4].try_into().unwrap();
                *v = f32::from_le_bytes(bytes) as f64;
                offset += 4;
            }
        }
    }
    Ok(VictimModel {
        arch: manifest.arch,
        params,
        input_dim: manifest.input_dim,
        num_classes: manifest.num_classes,
        seed: manifest.seed,
        final_val_accuracy: manifest.final_val_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::{bow_embed, build_vocab, EmbeddingMatrix, Provenance};
    use crate::tagraph::{generate_synthetic_tag, split_nodes, SbmParams};
    use ndarray::arr2;

    fn line_graph(n: usize, labels: Vec<usize>, classes: usize) -> TextAttributedGraph {
        let edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        TextAttributedGraph::new(n, &edges, vec![String::new(); n], labels, classes).unwrap()
    }

    fn random_features(n: usize, d: usize, seed: u64) -> EmbeddingMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = Array2::from_shape_fn((n, d), |_| {
            rand::Rng::gen_range(&mut rng, -1.0..1.0)
        });
        EmbeddingMatrix::new(data, Provenance::External("test".into())).unwrap()
    }

    /// Central finite differences against the analytic gradient on a toy
    /// graph, one backbone at a time.
    fn grad_check(kind: GnnKind) -> f64 {
        let labels = vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
        let graph = TextAttributedGraph::new(
            10,
            &[
                (0, 1),
                (1, 2),
                (2, 3),
                (3, 4),
                (4, 5),
                (5, 6),
                (6, 7),
                (7, 8),
                (8, 9),
                (0, 9),
                (2, 7),
            ],
            vec![String::new(); 10],
            labels,
            2,
        )
        .unwrap();
        let features = random_features(10, 4, 3);
        gradient_check(kind, &graph, &features, 8, 11).unwrap()
    }

    #[test]
    fn gcn_gradients_match_finite_differences() {
        assert!(grad_check(GnnKind::Gcn) < 1e-4);
    }

    #[test]
    fn gat_gradients_match_finite_differences() {
        assert!(grad_check(GnnKind::Gat) < 1e-4);
    }

    #[test]
    fn sage_gradients_match_finite_differences() {
        assert!(grad_check(GnnKind::Sage) < 1e-4);
    }

    #[test]
    fn separable_toy_reaches_full_train_accuracy() {
        // Two isolated nodes: aggregation is the identity, so the separable
        // 1-d features decide everything.
        let graph =
            TextAttributedGraph::new(2, &[], vec![String::new(); 2], vec![0, 1], 2).unwrap();
        let features = EmbeddingMatrix::new(
            arr2(&[[-1.0], [1.0]]),
            Provenance::External("toy".into()),
        )
        .unwrap();
        let split = NodeSplit {
            train: vec![0, 1],
            val: vec![],
            test: vec![],
        };
        let arch = GnnArch {
            hidden: 4,
            dropout: 0.0,
            ..GnnArch::gcn()
        };
        let cfg = TrainConfig {
            epochs: 200,
            seed: 1,
            ..TrainConfig::default()
        };
        let model = train_gnn(&arch, &graph, &features, &split, &cfg).unwrap();
        let acc = evaluate_accuracy(&model, &graph, &features, &[0, 1]).unwrap();
        assert_eq!(acc, 1.0);
    }

    #[test]
    fn zero_features_give_majority_rate() {
        let labels: Vec<usize> = (0..40).map(|i| usize::from(i % 4 == 0)).collect();
        let majority = labels.iter().filter(|&&l| l == 0).count() as f64 / 40.0;
        let graph = line_graph(40, labels, 2);
        let features = EmbeddingMatrix::new(
            Array2::zeros((40, 3)),
            Provenance::External("zeros".into()),
        )
        .unwrap();
        let split = split_nodes(&graph, 0.5, 0.2, 4).unwrap();
        let arch = GnnArch {
            hidden: 8,
            ..GnnArch::gcn()
        };
        let cfg = TrainConfig {
            epochs: 60,
            seed: 2,
            ..TrainConfig::default()
        };
        let model = train_gnn(&arch, &graph, &features, &split, &cfg).unwrap();
        let acc = evaluate_accuracy(&model, &graph, &features, &split.val).unwrap();
        assert!(
            (acc - majority).abs() < 0.25,
            "val accuracy {acc} should sit near the majority rate {majority}"
        );
    }

    #[test]
    fn probabilities_sum_to_one_and_match_argmax() {
        let graph = line_graph(6, vec![0, 1, 0, 1, 0, 1], 2);
        let features = random_features(6, 3, 7);
        let split = NodeSplit {
            train: vec![0, 1, 2],
            val: vec![3],
            test: vec![4, 5],
        };
        let arch = GnnArch {
            hidden: 4,
            ..GnnArch::sage()
        };
        let model = train_gnn(
            &arch,
            &graph,
            &features,
            &split,
            &TrainConfig {
                epochs: 20,
                seed: 3,
                ..TrainConfig::default()
            },
        )
        .unwrap();
        let preds = predict(&model, &graph, &features).unwrap();
        for (i, row) in preds.probs.rows().into_iter().enumerate() {
            assert!((row.sum() - 1.0).abs() < 1e-6);
            let argmax = row
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(preds.classes[i], argmax);
        }
    }

    #[test]
    fn predictions_are_permutation_equivariant() {
        // Train on a 20-node graph, permute node ids, and check predictions
        // permute identically for all three backbones.
        let params = SbmParams {
            num_nodes: 20,
            num_classes: 2,
            intra_edge_prob: 0.4,
            inter_edge_prob: 0.1,
            vocab_size: 12,
            words_per_node: 6,
            class_word_skew: 0.8,
            seed: 5,
        };
        let graph = generate_synthetic_tag(&params).unwrap();
        let vocab = build_vocab(graph.texts(), 20, 1).unwrap();
        let features = bow_embed(graph.texts(), &vocab).unwrap();
        let split = split_nodes(&graph, 0.5, 0.2, 1).unwrap();

        // Reverse permutation: old node i -> new node (19 - i).
        let perm: Vec<usize> = (0..20).rev().collect();
        let edges_p: Vec<(usize, usize)> = graph
            .edges()
            .iter()
            .map(|&(u, v)| (perm[u], perm[v]))
            .collect();
        let mut texts_p = vec![String::new(); 20];
        let mut labels_p = vec![0usize; 20];
        for (i, &new_id) in perm.iter().enumerate() {
            texts_p[new_id] = graph.texts()[i].clone();
            labels_p[new_id] = graph.labels()[i];
        }
        let graph_p = TextAttributedGraph::new(20, &edges_p, texts_p, labels_p, 2).unwrap();
        let features_p = bow_embed(graph_p.texts(), &vocab).unwrap();

        for kind in [GnnKind::Gcn, GnnKind::Gat, GnnKind::Sage] {
            let arch = GnnArch {
                hidden: 8,
                ..GnnArch::new(kind)
            };
            let model = train_gnn(
                &arch,
                &graph,
                &features,
                &split,
                &TrainConfig {
                    epochs: 30,
                    seed: 9,
                    ..TrainConfig::default()
                },
            )
            .unwrap();
            let base = predict(&model, &graph, &features).unwrap();
            let permuted = predict(&model, &graph_p, &features_p).unwrap();
            for (i, &new_id) in perm.iter().enumerate() {
                for c in 0..2 {
                    assert!(
                        (base.probs[[i, c]] - permuted.probs[[new_id, c]]).abs() < 1e-9,
                        "{kind:?} not equivariant at node {i}"
                    );
                }
            }
        }
    }

    #[test]
    fn gat_attention_rows_sum_to_one() {
        let graph = line_graph(8, vec![0, 1, 0, 1, 0, 1, 0, 1], 2);
        let features = random_features(8, 3, 1);
        let arch = GnnArch {
            hidden: 8,
            heads_layer1: 2,
            dropout: 0.0,
            ..GnnArch::gat()
        };
        let ctx = GraphCtx::from_graph(&graph);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let params = Params::init(&arch, 3, 2, &mut rng);
        let (_, cache) = forward(&arch, &params, &ctx, features.data(), None);
        let gat_cache = match &cache {
            Cache::Gat(c) => c,
            _ => unreachable!(),
        };
        for head in 0..2 {
            let alpha = gat_cache.layer1_alpha(head);
            for i in 0..8 {
                let sum: f64 = (ctx.csr.indptr[i]..ctx.csr.indptr[i + 1])
                    .map(|k| alpha[k])
                    .sum();
                assert!((sum - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn training_is_bitwise_reproducible() {
        let params = SbmParams {
            num_nodes: 30,
            num_classes: 2,
            intra_edge_prob: 0.3,
            inter_edge_prob: 0.05,
            vocab_size: 12,
            words_per_node: 5,
            class_word_skew: 0.7,
            seed: 8,
        };
        let graph = generate_synthetic_tag(&params).unwrap();
        let vocab = build_vocab(graph.texts(), 12, 1).unwrap();
        let features = bow_embed(graph.texts(), &vocab).unwrap();
        let split = split_nodes(&graph, 0.4, 0.2, 2).unwrap();
        let arch = GnnArch {
            hidden: 8,
            ..GnnArch::gcn()
        };
        let cfg = TrainConfig {
            epochs: 25,
            seed: 77,
            ..TrainConfig::default()
        };
        let a = train_gnn(&arch, &graph, &features, &split, &cfg).unwrap();
        let b = train_gnn(&arch, &graph, &features, &split, &cfg).unwrap();
        for (ta, tb) in a.params.tensors().iter().zip(b.params.tensors().iter()) {
            for (va, vb) in ta.iter().zip(tb.iter()) {
                assert_eq!(va.to_bits(), vb.to_bits());
            }
        }
    }

    #[test]
    fn surrogate_constant_labels_predict_that_class() {
        let graph = line_graph(6, vec![1, 1, 1, 1, 1, 1], 3);
        let features = random_features(6, 4, 2);
        let surrogate = train_surrogate(&graph, &features, &[0, 2, 4]).unwrap();
        let preds = surrogate.predict_labels(&graph, &features);
        assert!(preds.iter().all(|&p| p == 1));
    }

    #[test]
    fn surrogate_fits_separable_sbm() {
        let params = SbmParams {
            num_nodes: 100,
            num_classes: 2,
            intra_edge_prob: 0.15,
            inter_edge_prob: 0.02,
            vocab_size: 20,
            words_per_node: 8,
            class_word_skew: 0.8,
            seed: 3,
        };
        let graph = generate_synthetic_tag(&params).unwrap();
        let vocab = build_vocab(graph.texts(), 20, 1).unwrap();
        let features = bow_embed(graph.texts(), &vocab).unwrap();
        let labeled: Vec<usize> = (0..100).step_by(2).collect();
        let surrogate = train_surrogate(&graph, &features, &labeled).unwrap();
        let preds = surrogate.predict_labels(&graph, &features);
        let acc = labeled
            .iter()
            .filter(|&&n| preds[n] == graph.labels()[n])
            .count() as f64
            / labeled.len() as f64;
        assert!(acc >= 0.9, "surrogate train accuracy {acc}");

        let again = train_surrogate(&graph, &features, &labeled).unwrap();
        assert_eq!(surrogate, again);
    }

    #[test]
    fn model_round_trips_through_disk() {
        let graph = line_graph(6, vec![0, 1, 0, 1, 0, 1], 2);
        let features = random_features(6, 3, 4);
        let split = NodeSplit {
            train: vec![0, 1, 2, 3],
            val: vec![4],
            test: vec![5],
        };
        for kind in [GnnKind::Gcn, GnnKind::Gat, GnnKind::Sage] {
            let arch = GnnArch {
                hidden: 8,
                ..GnnArch::new(kind)
            };
            let model = train_gnn(
                &arch,
                &graph,
                &features,
                &split,
                &TrainConfig {
                    epochs: 10,
                    seed: 5,
                    ..TrainConfig::default()
                },
            )
            .unwrap();
            let dir = tempfile::tempdir().unwrap();
            save_model(&model, dir.path()).unwrap();
            let loaded = load_model(dir.path()).unwrap();
            assert_eq!(loaded.arch, model.arch);
            // Weights survive the f32 round trip to within f32 precision.
            for (ta, tb) in model
                .params
                .tensors()
                .iter()
                .zip(loaded.params.tensors().iter())
            {
                for (va, vb) in ta.iter().zip(tb.iter()) {
                    assert!((*va as f32 - *vb as f32).abs() == 0.0);
                }
            }
            let a = predict(&model, &graph, &features).unwrap();
            let b = predict(&loaded, &graph, &features).unwrap();
            assert_eq!(a.classes, b.classes);
        }
    }
}
