//! C ABI over the poisonbench core: opaque handles for graphs, embeddings,
//! models and perturbation sets, status codes for every fallible call, and a
//! thread-local last-error message.
//!
//! Ownership rules: every `*_new`/`*_load`/`*_generate` result must be
//! released with the matching `*_free`; strings returned by the library are
//! released with `pb_string_free`. All pointers must come from this library;
//! null pointers are rejected with `PB_STATUS_NULL_POINTER`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::path::Path;
use std::ptr;

use poisonbench::attacks::{
    apply_perturbation, dice_attack, random_flip_attack, surrogate_label_view, PerturbationSet,
};
use poisonbench::defend::{
    certified_radius, clopper_pearson_lower, purify, PurifyConfig, SmoothingConfig,
};
use poisonbench::embed::{bow_embed, build_vocab, load_embeddings, tfidf_embed, EmbeddingMatrix};
use poisonbench::error::Error;
use poisonbench::metrics;
use poisonbench::tagraph::{
    generate_synthetic_tag, load_graph_dir, save_graph, split_nodes, SbmParams,
    TextAttributedGraph,
};
use poisonbench::victims::{
    evaluate_accuracy, train_gnn, train_surrogate, GnnArch, GnnKind, TrainConfig, VictimModel,
};

/// Status codes returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ValidationError = 3,
    IoError = 4,
    RuntimeError = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<Vec<u8>>) {
    let msg = CString::new(msg).unwrap_or_else(|_| CString::new("invalid error message").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> PbStatus {
    match err {
        Error::Parse { .. } | Error::Validation(_) | Error::Shape(_) | Error::NonFinite { .. } => {
            PbStatus::ValidationError
        }
        Error::Config(_) => PbStatus::InvalidArgument,
        Error::Io(_) => PbStatus::IoError,
        _ => PbStatus::RuntimeError,
    }
}

fn fail(err: Error) -> PbStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Returns the message of the most recent error on this thread, or null.
/// The caller owns the string and must free it with `pb_string_free`.
#[no_mangle]
pub extern "C" fn pb_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match slot.borrow().as_ref() {
        Some(msg) => msg.clone().into_raw(),
        None => ptr::null_mut(),
    })
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be a pointer previously returned by this library and not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn pb_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

unsafe fn path_from(ptr_: *const c_char) -> Result<&'static Path, PbStatus> {
    if ptr_.is_null() {
        set_error("null path");
        return Err(PbStatus::NullPointer);
    }
    match CStr::from_ptr(ptr_).to_str() {
        Ok(s) => Ok(Path::new(s)),
        Err(_) => {
            set_error("path is not valid UTF-8");
            Err(PbStatus::InvalidArgument)
        }
    }
}

macro_rules! require {
    ($ptr:expr) => {
        if $ptr.is_null() {
            set_error(concat!("null pointer: ", stringify!($ptr)));
            return PbStatus::NullPointer;
        }
    };
}

/// Opaque text-attributed graph handle.
pub struct PbGraph {
    inner: TextAttributedGraph,
}

/// Opaque embedding-matrix handle.
pub struct PbEmbedding {
    inner: EmbeddingMatrix,
}

/// Opaque perturbation-set handle.
pub struct PbPerturbation {
    inner: PerturbationSet,
}

/// Opaque trained-victim handle (model plus its training split seed).
pub struct PbModel {
    inner: VictimModel,
    split_seed: u64,
    train_frac: f64,
    val_frac: f64,
}

/// Generates a synthetic block-model graph.
///
/// # Safety
/// `out` must point to writable memory for one pointer.
#[no_mangle]
pub unsafe extern "C" fn pb_graph_generate_sbm(
    num_nodes: usize,
    num_classes: usize,
    intra_edge_prob: f64,
    inter_edge_prob: f64,
    vocab_size: usize,
    words_per_node: usize,
    class_word_skew: f64,
    seed: u64,
    out: *mut *mut PbGraph,
) -> PbStatus {
    require!(out);
    let params = SbmParams {
        num_nodes,
        num_classes,
        intra_edge_prob,
        inter_edge_prob,
        vocab_size,
        words_per_node,
        class_word_skew,
        seed,
    };
    match generate_synthetic_tag(&params) {
        Ok(graph) => {
            *out = Box::into_raw(Box::new(PbGraph { inner: graph }));
            PbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Loads a graph from a directory holding edges.tsv, texts.txt, labels.txt.
///
/// # Safety
/// `dir` must be a valid NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_graph_load_dir(dir: *const c_char, out: *mut *mut PbGraph) -> PbStatus {
    require!(out);
    let dir = match path_from(dir) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match load_graph_dir(dir) {
        Ok((graph, _)) => {
            *out = Box::into_raw(Box::new(PbGraph { inner: graph }));
            PbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Saves a graph into a directory (three files plus manifest).
///
/// # Safety
/// `graph` must be a live handle; `dir` a valid string.
#[no_mangle]
pub unsafe extern "C" fn pb_graph_save_dir(graph: *const PbGraph, dir: *const c_char) -> PbStatus {
    require!(graph);
    let dir = match path_from(dir) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match save_graph(&(*graph).inner, dir) {
        Ok(_) => PbStatus::Ok,
        Err(e) => fail(e),
    }
}

/// # Safety
/// `graph` must be a live handle or null (ignored).
#[no_mangle]
pub unsafe extern "C" fn pb_graph_free(graph: *mut PbGraph) {
    if !graph.is_null() {
        drop(Box::from_raw(graph));
    }
}

/// # Safety
/// `graph` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pb_graph_num_nodes(graph: *const PbGraph) -> usize {
    if graph.is_null() {
        return 0;
    }
    (*graph).inner.num_nodes()
}

/// # Safety
/// `graph` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pb_graph_num_edges(graph: *const PbGraph) -> usize {
    if graph.is_null() {
        return 0;
    }
    (*graph).inner.num_edges()
}

/// # Safety
/// `graph` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pb_graph_num_classes(graph: *const PbGraph) -> usize {
    if graph.is_null() {
        return 0;
    }
    (*graph).inner.num_classes()
}

/// Edge homophily of the graph's own labels, in percent.
///
/// # Safety
/// `graph` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_graph_edge_homophily(
    graph: *const PbGraph,
    out: *mut f64,
) -> PbStatus {
    require!(graph);
    require!(out);
    match metrics::edge_homophily(&(*graph).inner, (*graph).inner.labels()) {
        Ok(v) => {
            *out = v;
            PbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Builds a bag-of-words (`tfidf = false`) or TF-IDF (`tfidf = true`)
/// embedding from the graph's texts.
///
/// # Safety
/// `graph` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_embedding_from_texts(
    graph: *const PbGraph,
    max_vocab: usize,
    min_df: usize,
    tfidf: bool,
    out: *mut *mut PbEmbedding,
) -> PbStatus {
    require!(graph);
    require!(out);
    let texts = (*graph).inner.texts();
    let result = build_vocab(texts, max_vocab, min_df).and_then(|vocab| {
        if tfidf {
            tfidf_embed(texts, &vocab)
        } else {
            bow_embed(texts, &vocab)
        }
    });
    match result {
        Ok(emb) => {
            *out = Box::into_raw(Box::new(PbEmbedding { inner: emb }));
            PbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Loads an external embedding file, validating the row count against the
/// graph.
///
/// # Safety
/// `graph` must be a live handle; `path` a valid string; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_embedding_load(
    graph: *const PbGraph,
    path: *const c_char,
    out: *mut *mut PbEmbedding,
) -> PbStatus {
    require!(graph);
    require!(out);
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match load_embeddings(path, (*graph).inner.num_nodes()) {
        Ok(emb) => {
            *out = Box::into_raw(Box::new(PbEmbedding { inner: emb }));
            PbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `emb` must be a live handle or null (ignored).
#[no_mangle]
pub unsafe extern "C" fn pb_embedding_free(emb: *mut PbEmbedding) {
    if !emb.is_null() {
        drop(Box::from_raw(emb));
    }
}

/// # Safety
/// `emb` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pb_embedding_rows(emb: *const PbEmbedding) -> usize {
    if emb.is_null() {
        return 0;
    }
    (*emb).inner.rows()
}

/// # Safety
/// `emb` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pb_embedding_dim(emb: *const PbEmbedding) -> usize {
    if emb.is_null() {
        return 0;
    }
    (*emb).inner.dim()
}

/// Runs the label-guided flip attack at a global rate. With
/// `oracle_labels = false` the gray-box label view (true labels on the seeded
/// train/val split, surrogate predictions elsewhere) is used.
///
/// # Safety
/// `graph` and `emb` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_attack_dice(
    graph: *const PbGraph,
    emb: *const PbEmbedding,
    rate: f64,
    seed: u64,
    train_frac: f64,
    val_frac: f64,
    split_seed: u64,
    oracle_labels: bool,
    out: *mut *mut PbPerturbation,
) -> PbStatus {
    require!(graph);
    require!(emb);
    require!(out);
    let graph = &(*graph).inner;
    let emb = &(*emb).inner;
    let result = (|| {
        let view = if oracle_labels {
            graph.labels().to_vec()
        } else {
            let split = split_nodes(graph, train_frac, val_frac, split_seed)?;
            let mut labeled: Vec<usize> =
                split.train.iter().chain(split.val.iter()).copied().collect();
            labeled.sort_unstable();
            let surrogate = train_surrogate(graph, emb, &labeled)?;
            surrogate_label_view(graph, &split, &surrogate, emb, false)
        };
        dice_attack(graph, &view, rate, seed)
    })();
    match result {
        Ok(pset) => {
            *out = Box::into_raw(Box::new(PbPerturbation { inner: pset }));
            PbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Uniform random flip baseline at a global rate.
///
/// # Safety
/// `graph` must be a live handle; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_attack_random_flip(
    graph: *const PbGraph,
    rate: f64,
    seed: u64,
    out: *mut *mut PbPerturbation,
) -> PbStatus {
    require!(graph);
    require!(out);
    match random_flip_attack(&(*graph).inner, rate, seed) {
        Ok(pset) => {
            *out = Box::into_raw(Box::new(PbPerturbation { inner: pset }));
            PbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `pset` must be a live handle or null (ignored).
#[no_mangle]
pub unsafe extern "C" fn pb_perturbation_free(pset: *mut PbPerturbation) {
    if !pset.is_null() {
        drop(Box::from_raw(pset));
    }
}

/// # Safety
/// `pset` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pb_perturbation_num_flips(pset: *const PbPerturbation) -> usize {
    if pset.is_null() {
        return 0;
    }
    (*pset).inner.edge_flips.len()
}

/// Content hash of the perturbation set (caller frees with
/// `pb_string_free`).
///
/// # Safety
/// `pset` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pb_perturbation_content_hash(pset: *const PbPerturbation) -> *mut c_char {
    if pset.is_null() {
        return ptr::null_mut();
    }
    CString::new((*pset).inner.content_hash())
        .map(CString::into_raw)
        .unwrap_or(ptr::null_mut())
}

/// Writes the perturbation set as JSON to `path`.
///
/// # Safety
/// `pset` must be a live handle; `path` a valid string.
#[no_mangle]
pub unsafe extern "C" fn pb_perturbation_save_json(
    pset: *const PbPerturbation,
    path: *const c_char,
) -> PbStatus {
    require!(pset);
    let path = match path_from(path) {
        Ok(p) => p,
        Err(status) => return status,
    };
    match std::fs::write(path, (*pset).inner.to_json()) {
        Ok(()) => PbStatus::Ok,
        Err(e) => fail(Error::Io(e)),
    }
}

/// Applies a perturbation set, producing a new graph handle.
///
/// # Safety
/// `graph` and `pset` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_apply_perturbation(
    graph: *const PbGraph,
    pset: *const PbPerturbation,
    out: *mut *mut PbGraph,
) -> PbStatus {
    require!(graph);
    require!(pset);
    require!(out);
    match apply_perturbation(&(*graph).inner, &(*pset).inner) {
        Ok(poisoned) => {
            *out = Box::into_raw(Box::new(PbGraph { inner: poisoned }));
            PbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Removes the `quantile` lowest-similarity fraction of edges, producing a
/// new graph handle.
///
/// # Safety
/// `graph` and `emb` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_purify_quantile(
    graph: *const PbGraph,
    emb: *const PbEmbedding,
    quantile: f64,
    out: *mut *mut PbGraph,
) -> PbStatus {
    require!(graph);
    require!(emb);
    require!(out);
    match purify(
        &(*graph).inner,
        &(*emb).inner,
        &PurifyConfig::Quantile { quantile },
    ) {
        Ok(outcome) => {
            *out = Box::into_raw(Box::new(PbGraph {
                inner: outcome.graph,
            }));
            PbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Trains a victim (kind: 0 = GCN, 1 = GAT, 2 = SAGE) on a seeded split and
/// returns the handle.
///
/// # Safety
/// `graph` and `emb` must be live handles; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_train_victim(
    graph: *const PbGraph,
    emb: *const PbEmbedding,
    kind: u32,
    hidden: usize,
    epochs: usize,
    train_frac: f64,
    val_frac: f64,
    split_seed: u64,
    train_seed: u64,
    out: *mut *mut PbModel,
) -> PbStatus {
    require!(graph);
    require!(emb);
    require!(out);
    let kind = match kind {
        0 => GnnKind::Gcn,
        1 => GnnKind::Gat,
        2 => GnnKind::Sage,
        other => {
            set_error(format!("unknown victim kind {other}"));
            return PbStatus::InvalidArgument;
        }
    };
    let result = (|| {
        let split = split_nodes(&(*graph).inner, train_frac, val_frac, split_seed)?;
        let mut arch = GnnArch::new(kind);
        arch.hidden = hidden;
        let cfg = TrainConfig {
            epochs,
            seed: train_seed,
            ..TrainConfig::default()
        };
        train_gnn(&arch, &(*graph).inner, &(*emb).inner, &split, &cfg)
    })();
    match result {
        Ok(model) => {
            *out = Box::into_raw(Box::new(PbModel {
                inner: model,
                split_seed,
                train_frac,
                val_frac,
            }));
            PbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// # Safety
/// `model` must be a live handle or null (ignored).
#[no_mangle]
pub unsafe extern "C" fn pb_model_free(model: *mut PbModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Test-split accuracy of the model on the given graph and features, as a
/// fraction in [0, 1]. The split is re-derived from the seed stored in the
/// model handle.
///
/// # Safety
/// All handles must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn pb_model_test_accuracy(
    model: *const PbModel,
    graph: *const PbGraph,
    emb: *const PbEmbedding,
    out: *mut f64,
) -> PbStatus {
    require!(model);
    require!(graph);
    require!(emb);
    require!(out);
    let m = &*model;
    let result = (|| {
        let split = split_nodes(
            &(*graph).inner,
            m.train_frac,
            m.val_frac,
            m.split_seed,
        )?;
        evaluate_accuracy(&m.inner, &(*graph).inner, &(*emb).inner, &split.test)
    })();
    match result {
        Ok(acc) => {
            *out = acc;
            PbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Relative drop in accuracy, percentages in and out.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_metric_rda(
    acc_clean: f64,
    acc_attack: f64,
    out: *mut f64,
) -> PbStatus {
    require!(out);
    match metrics::rda(acc_clean, acc_attack) {
        Ok(v) => {
            *out = v;
            PbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// One-sided Clopper-Pearson lower confidence bound.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pb_clopper_pearson_lower(
    successes: usize,
    trials: usize,
    alpha: f64,
    out: *mut f64,
) -> PbStatus {
    require!(out);
    match clopper_pearson_lower(successes, trials, alpha) {
        Ok(v) => {
            *out = v;
            PbStatus::Ok
        }
        Err(e) => fail(e),
    }
}

/// Certified edge-deletion radius for a smoothed-probability lower bound.
#[no_mangle]
pub extern "C" fn pb_certified_radius(p_lower: f64, p_del: f64) -> usize {
    certified_radius(p_lower, p_del)
}

/// Default smoothing parameters (p_del 0.4, 10000 samples, alpha 0.05).
#[no_mangle]
pub extern "C" fn pb_smoothing_default_p_del() -> f64 {
    SmoothingConfig::default().p_del
}
