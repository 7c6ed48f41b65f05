//! The four-phase pipeline: prepare, poison, train, evaluate/defend/certify.
//!
//! Every attack row trains fresh victims on the poisoned data; clean
//! baselines are trained separately. Rows with disjoint (attack, seed)
//! execute in parallel worker threads capped by POISONBENCH_THREADS; each
//! row is seeded explicitly, so the report content is independent of the
//! thread count.

use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use super::report::{ReportRow, RobustnessReport};
use super::{AttackSpec, CertSpec, DatasetSpec, EmbeddingSpec, ExperimentConfig, VictimSpec};
use crate::attacks::{
    apply_perturbation, char_attack, combined_attack, dice_attack, meta_gradient_attack,
    random_flip_attack, random_rewire_attack, select_targets, surrogate_label_view,
    targeted_gradient_attack, train_text_surrogate, word_attack, MetaAttackConfig,
    PerturbationSet,
};
use crate::defend::{certify_set, purify, SmoothingConfig, VictimClassifier};
use crate::embed::{
    bow_embed, build_vocab, load_embeddings, tfidf_embed, EmbeddingMatrix, Vocabulary,
};
use crate::error::{Error, Result};
use crate::metrics::{self, MetricBundle};
use crate::tagraph::{
    generate_synthetic_tag, load_graph, load_graph_dir, sample_subset, split_nodes, NodeSplit,
    TextAttributedGraph,
};
use crate::victims::{
    evaluate_accuracy, train_gnn, train_surrogate, GnnArch, TrainConfig, VictimModel,
};

pub const THREADS_ENV: &str = "POISONBENCH_THREADS";

struct PipelineCtx {
    cfg: ExperimentConfig,
    dataset_label: String,
    graph: TextAttributedGraph,
    split: NodeSplit,
    labeled: Vec<usize>,
    clean_vocab: Option<Vocabulary>,
    clean_features: EmbeddingMatrix,
}

impl PipelineCtx {
    fn arch_for(&self, victim: &VictimSpec) -> GnnArch {
        let mut arch = GnnArch::new(victim.arch);
        if let Some(hidden) = victim.hidden {
            arch.hidden = hidden;
        }
        if let Some(dropout) = victim.dropout {
            arch.dropout = dropout;
        }
        arch
    }

    fn train_cfg(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            learning_rate: self.cfg.train.learning_rate,
            epochs: self.cfg.train.epochs,
            weight_decay: self.cfg.train.weight_decay,
            early_stop_patience: self.cfg.train.early_stop_patience,
            seed,
        }
    }

    /// Feature matrix for a (possibly text-poisoned) graph. Text-derived
    /// embeddings are rebuilt from the graph's texts; external matrices are
    /// reused as-is.
    fn features_for(&self, graph: &TextAttributedGraph, texts_changed: bool) -> Result<EmbeddingMatrix> {
        if !texts_changed {
            return Ok(self.clean_features.clone());
        }
        match &self.cfg.embedding {
            EmbeddingSpec::Bow { max_size, min_df } => {
                let vocab = build_vocab(graph.texts(), *max_size, *min_df)?;
                bow_embed(graph.texts(), &vocab)
            }
            EmbeddingSpec::Tfidf { max_size, min_df } => {
                let vocab = build_vocab(graph.texts(), *max_size, *min_df)?;
                tfidf_embed(graph.texts(), &vocab)
            }
            EmbeddingSpec::External { .. } => Err(Error::Config(
                "textual attacks require a text-derived embedding".into(),
            )),
        }
    }

    fn metric_bundle(
        &self,
        graph: &TextAttributedGraph,
        features: &EmbeddingMatrix,
        seed: u64,
    ) -> MetricBundle {
        let labels = graph.labels();
        let n = graph.num_nodes();
        let k = 10.min(n.saturating_sub(1)).max(1);
        let clusters = graph.num_classes().max(2);
        MetricBundle {
            acc: None,
            rda: None,
            dbi: metrics::davies_bouldin(features, labels).ok(),
            silhouette: metrics::silhouette(features, labels, 2000, seed).ok(),
            homophily_k: metrics::embedding_homophily(features, labels, k).ok(),
            elmi: metrics::elmi(features, labels, clusters, seed).ok(),
            esmi: metrics::esmi(features, graph, clusters, 10, seed).ok(),
            ncon: metrics::neighbor_consistency(features, graph).ok(),
        }
    }

    fn certify(
        &self,
        cert: &CertSpec,
        model: &VictimModel,
        graph: &TextAttributedGraph,
        features: &EmbeddingMatrix,
        eval_set: &[usize],
        seed: u64,
    ) -> Result<(f64, f64)> {
        let nodes: Vec<usize> = if eval_set.len() <= cert.max_nodes {
            eval_set.to_vec()
        } else {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let mut order = eval_set.to_vec();
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cert.seed ^ seed);
            order.shuffle(&mut rng);
            let mut nodes = order[..cert.max_nodes].to_vec();
            nodes.sort_unstable();
            nodes
        };
        let clf = VictimClassifier { model, features };
        let result = certify_set(
            &clf,
            graph,
            &nodes,
            graph.labels(),
            &SmoothingConfig {
                p_del: cert.p_del,
                num_samples: cert.num_samples,
                alpha: cert.alpha,
                seed: cert.seed ^ seed,
                correct_by_base: false,
            },
        )?;
        Ok((result.ca, result.mcr))
    }
}

fn prepare(cfg: &ExperimentConfig) -> Result<PipelineCtx> {
    let (graph, dataset_label) = match &cfg.dataset {
        DatasetSpec::Synthetic { params } => (
            generate_synthetic_tag(params)?,
            format!("sbm{}x{}", params.num_nodes, params.num_classes),
        ),
        DatasetSpec::Files {
            edges,
            texts,
            labels,
        } => {
            let (graph, _) = load_graph(Path::new(edges), Path::new(texts), Path::new(labels))?;
            (graph, "files".to_string())
        }
        DatasetSpec::Dir { path } => {
            let (graph, _) = load_graph_dir(Path::new(path))?;
            let label = Path::new(path)
                .file_name()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dir".into());
            (graph, label)
        }
    };
    let graph = match &cfg.subset {
        Some(s) => sample_subset(&graph, s.seed_nodes, s.fanout, s.hops, s.seed)?,
        None => graph,
    };
    let split = split_nodes(&graph, cfg.split.train_frac, cfg.split.val_frac, cfg.split.seed)?;
    let mut labeled: Vec<usize> = split.train.iter().chain(split.val.iter()).copied().collect();
    labeled.sort_unstable();

    let (clean_vocab, clean_features) = match &cfg.embedding {
        EmbeddingSpec::Bow { max_size, min_df } => {
            let vocab = build_vocab(graph.texts(), *max_size, *min_df)?;
            let features = bow_embed(graph.texts(), &vocab)?;
            (Some(vocab), features)
        }
        EmbeddingSpec::Tfidf { max_size, min_df } => {
            let vocab = build_vocab(graph.texts(), *max_size, *min_df)?;
            let features = tfidf_embed(graph.texts(), &vocab)?;
            (Some(vocab), features)
        }
        EmbeddingSpec::External { path, normalize } => {
            let features = load_embeddings(Path::new(path), graph.num_nodes())?;
            let features = if *normalize {
                features.l2_normalized()
            } else {
                features
            };
            (None, features)
        }
    };
    Ok(PipelineCtx {
        cfg: cfg.clone(),
        dataset_label,
        graph,
        split,
        labeled,
        clean_vocab,
        clean_features,
    })
}

/// Perturbation plus the evaluation node set it implies.
struct AttackOutcome {
    pset: PerturbationSet,
    eval_set: Vec<usize>,
}

fn build_pset(ctx: &PipelineCtx, spec: &AttackSpec, seed: u64) -> Result<AttackOutcome> {
    let graph = &ctx.graph;
    let features = &ctx.clean_features;
    let test_set = ctx.split.test.clone();
    match spec {
        AttackSpec::Dice {
            rate,
            oracle_labels,
            ..
        } => {
            let surrogate = train_surrogate(graph, features, &ctx.labeled)?;
            let view =
                surrogate_label_view(graph, &ctx.split, &surrogate, features, *oracle_labels);
            Ok(AttackOutcome {
                pset: dice_attack(graph, &view, *rate, seed)?,
                eval_set: test_set,
            })
        }
        AttackSpec::MetaGradient {
            rate,
            inner_steps,
            inner_lr,
            ..
        } => {
            let mut meta_cfg = MetaAttackConfig::default();
            if let Some(steps) = inner_steps {
                meta_cfg.inner_steps = *steps;
            }
            if let Some(lr) = inner_lr {
                meta_cfg.inner_lr = *lr;
            }
            Ok(AttackOutcome {
                pset: meta_gradient_attack(graph, features, &ctx.split, *rate, seed, &meta_cfg)?,
                eval_set: test_set,
            })
        }
        AttackSpec::RandomFlip { rate, .. } => Ok(AttackOutcome {
            pset: random_flip_attack(graph, *rate, seed)?,
            eval_set: test_set,
        }),
        AttackSpec::Targeted {
            per_target_budget,
            min_degree,
            sample_rate,
            ..
        } => {
            let targets = select_targets(graph, &ctx.split, *min_degree, *sample_rate, seed)?;
            let surrogate = train_surrogate(graph, features, &ctx.labeled)?;
            let mut merged =
                PerturbationSet::new("targeted", seed, crate::attacks::BudgetSpec::per_target(*per_target_budget));
            merge_per_target(&mut merged, graph, targets.nodes.iter().map(|&target| {
                targeted_gradient_attack(graph, features, &surrogate, target, *per_target_budget)
            }))?;
            Ok(AttackOutcome {
                pset: merged,
                eval_set: targets.nodes,
            })
        }
        AttackSpec::RandomRewire {
            per_target_budget,
            min_degree,
            sample_rate,
            ..
        } => {
            let targets = select_targets(graph, &ctx.split, *min_degree, *sample_rate, seed)?;
            let mut merged = PerturbationSet::new(
                "random_rewire",
                seed,
                crate::attacks::BudgetSpec::per_target(*per_target_budget),
            );
            merge_per_target(&mut merged, graph, targets.nodes.iter().map(|&target| {
                random_rewire_attack(graph, target, *per_target_budget, seed.wrapping_add(target as u64))
            }))?;
            Ok(AttackOutcome {
                pset: merged,
                eval_set: targets.nodes,
            })
        }
        AttackSpec::Char { edits_per_node, .. } => {
            let vocab = ctx.clean_vocab.as_ref().ok_or_else(|| {
                Error::Config("textual attacks require a text-derived embedding".into())
            })?;
            let clf = train_text_surrogate(
                graph.texts(),
                graph.labels(),
                &ctx.labeled,
                vocab,
                graph.num_classes(),
            )?;
            let anchors: Vec<usize> = ctx.labeled.iter().map(|&n| graph.labels()[n]).collect();
            let result =
                char_attack(graph.texts(), &clf, &ctx.labeled, &anchors, *edits_per_node, seed)?;
            Ok(AttackOutcome {
                pset: result.pset,
                eval_set: test_set,
            })
        }
        AttackSpec::Word {
            edits_per_node,
            top_k,
            ..
        } => {
            let vocab = ctx.clean_vocab.as_ref().ok_or_else(|| {
                Error::Config("textual attacks require a text-derived embedding".into())
            })?;
            let clf = train_text_surrogate(
                graph.texts(),
                graph.labels(),
                &ctx.labeled,
                vocab,
                graph.num_classes(),
            )?;
            let anchors: Vec<usize> = ctx.labeled.iter().map(|&n| graph.labels()[n]).collect();
            let result = word_attack(
                graph.texts(),
                &clf,
                vocab,
                &ctx.labeled,
                &anchors,
                *edits_per_node,
                *top_k,
                seed,
            )?;
            Ok(AttackOutcome {
                pset: result.pset,
                eval_set: test_set,
            })
        }
        AttackSpec::Combined {
            structural,
            textual,
            ..
        } => {
            let s = build_pset(ctx, structural, seed)?;
            let t = build_pset(ctx, textual, seed)?;
            let pset = combined_attack(graph, &s.pset, &t.pset)?;
            // Structural leg decides the evaluation set (targeted legs eval
            // on their targets, global legs on the test set).
            Ok(AttackOutcome {
                pset,
                eval_set: s.eval_set,
            })
        }
    }
}

/// Merges per-target perturbation sets, skipping flips whose pair was
/// already flipped by an earlier target or that became infeasible.
fn merge_per_target(
    merged: &mut PerturbationSet,
    graph: &TextAttributedGraph,
    per_target: impl Iterator<Item = Result<PerturbationSet>>,
) -> Result<()> {
    let mut edges: std::collections::BTreeSet<(usize, usize)> =
        graph.edges().iter().copied().collect();
    let mut flipped = std::collections::BTreeSet::new();
    for pset in per_target {
        let pset = pset?;
        merged.warnings.extend(pset.warnings.iter().cloned());
        for flip in pset.edge_flips {
            let pair = flip.pair();
            if flipped.contains(&pair) {
                merged
                    .warnings
                    .push(format!("skipped colliding flip on ({}, {})", pair.0, pair.1));
                continue;
            }
            let feasible = match flip.op {
                crate::attacks::FlipOp::Add => !edges.contains(&pair),
                crate::attacks::FlipOp::Remove => edges.contains(&pair),
            };
            if !feasible {
                merged
                    .warnings
                    .push(format!("skipped infeasible flip on ({}, {})", pair.0, pair.1));
                continue;
            }
            match flip.op {
                crate::attacks::FlipOp::Add => {
                    edges.insert(pair);
                }
                crate::attacks::FlipOp::Remove => {
                    edges.remove(&pair);
                }
            }
            flipped.insert(pair);
            merged.edge_flips.push(flip);
        }
    }
    Ok(())
}

enum Job {
    Clean { victim_idx: usize, seed: u64 },
    Attack { attack_idx: usize, seed: u64 },
}

fn run_clean_job(ctx: &PipelineCtx, victim_idx: usize, seed: u64) -> Vec<ReportRow> {
    let started = Instant::now();
    let victim = &ctx.cfg.victims[victim_idx];
    let arch = ctx.arch_for(victim);
    let mut row = ReportRow {
        dataset: ctx.dataset_label.clone(),
        embedding: ctx.cfg.embedding.label(),
        arch: victim.arch.to_string(),
        attack: "clean".into(),
        budget: "0".into(),
        seed,
        acc_clean: None,
        acc_attack: None,
        rda: None,
        metrics: MetricBundle::default(),
        ca: None,
        mcr: None,
        wall_ms: 0,
        pset_hash: None,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let model = train_gnn(
            &arch,
            &ctx.graph,
            &ctx.clean_features,
            &ctx.split,
            &ctx.train_cfg(seed),
        )?;
        let acc =
            evaluate_accuracy(&model, &ctx.graph, &ctx.clean_features, &ctx.split.test)? * 100.0;
        row.acc_clean = Some(acc);
        row.metrics = ctx.metric_bundle(&ctx.graph, &ctx.clean_features, seed);
        row.metrics.acc = Some(acc);
        if let Some(cert) = &ctx.cfg.certification {
            let (ca, mcr) = ctx.certify(
                cert,
                &model,
                &ctx.graph,
                &ctx.clean_features,
                &ctx.split.test,
                seed,
            )?;
            row.ca = Some(ca);
            row.mcr = Some(mcr);
        }
        Ok(())
    })();
    if let Err(e) = outcome {
        row.error = Some(e.to_string());
    }
    row.wall_ms = started.elapsed().as_millis() as u64;
    vec![row]
}

fn run_attack_job(ctx: &PipelineCtx, attack_idx: usize, seed: u64) -> Vec<ReportRow> {
    let spec = &ctx.cfg.attacks[attack_idx];
    let template = ReportRow {
        dataset: ctx.dataset_label.clone(),
        embedding: ctx.cfg.embedding.label(),
        arch: String::new(),
        attack: spec.name(),
        budget: spec.budget_label(),
        seed,
        acc_clean: None,
        acc_attack: None,
        rda: None,
        metrics: MetricBundle::default(),
        ca: None,
        mcr: None,
        wall_ms: 0,
        pset_hash: None,
        error: None,
    };

    let started = Instant::now();
    let prepared = (|| -> Result<_> {
        let outcome = build_pset(ctx, spec, seed)?;
        let poisoned = apply_perturbation(&ctx.graph, &outcome.pset)?;
        let texts_changed = !outcome.pset.text_edits.is_empty();
        let features = ctx.features_for(&poisoned, texts_changed)?;
        Ok((outcome, poisoned, features))
    })();
    let (outcome, poisoned, features) = match prepared {
        Ok(v) => v,
        Err(e) => {
            // The whole job failed before any victim work: one error row per
            // victim keeps the accounting visible.
            return ctx
                .cfg
                .victims
                .iter()
                .map(|victim| {
                    let mut row = template.clone();
                    row.arch = victim.arch.to_string();
                    row.error = Some(e.to_string());
                    row.wall_ms = started.elapsed().as_millis() as u64;
                    row
                })
                .collect();
        }
    };
    let pset_hash = outcome.pset.content_hash();
    let bundle = ctx.metric_bundle(&poisoned, &features, seed);

    let purified = ctx.cfg.defense.as_ref().map(|defense| {
        let cfg = defense.resolve(spec.global_rate());
        purify(&poisoned, &features, &cfg)
    });

    let mut rows = Vec::new();
    for victim in &ctx.cfg.victims {
        let arch = ctx.arch_for(victim);
        let row_started = Instant::now();
        let mut row = template.clone();
        row.arch = victim.arch.to_string();
        row.pset_hash = Some(pset_hash.clone());
        row.metrics = bundle.clone();
        let outcome_result = (|| -> Result<Option<(f64, f64)>> {
            let clean_model = train_gnn(
                &arch,
                &ctx.graph,
                &ctx.clean_features,
                &ctx.split,
                &ctx.train_cfg(seed),
            )?;
            let acc_clean =
                evaluate_accuracy(&clean_model, &ctx.graph, &ctx.clean_features, &outcome.eval_set)?
                    * 100.0;
            let model = train_gnn(&arch, &poisoned, &features, &ctx.split, &ctx.train_cfg(seed))?;
            let acc_attack =
                evaluate_accuracy(&model, &poisoned, &features, &outcome.eval_set)? * 100.0;
            row.acc_clean = Some(acc_clean);
            row.acc_attack = Some(acc_attack);
            row.metrics.acc = Some(acc_attack);
            if acc_clean > 0.0 {
                let rda = metrics::rda(acc_clean, acc_attack)?;
                row.rda = Some(rda);
                row.metrics.rda = Some(rda);
            }
            if let Some(cert) = &ctx.cfg.certification {
                let (ca, mcr) =
                    ctx.certify(cert, &model, &poisoned, &features, &outcome.eval_set, seed)?;
                return Ok(Some((ca, mcr)));
            }
            Ok(None)
        })();
        match outcome_result {
            Ok(Some((ca, mcr))) => {
                row.ca = Some(ca);
                row.mcr = Some(mcr);
            }
            Ok(None) => {}
            Err(e) => row.error = Some(e.to_string()),
        }
        row.wall_ms = row_started.elapsed().as_millis() as u64;
        rows.push(row);

        // Defense row: retrain on the purified graph.
        if let Some(purify_result) = &purified {
            let row_started = Instant::now();
            let mut row = template.clone();
            row.arch = victim.arch.to_string();
            row.attack = format!("{}+purify", spec.name());
            row.pset_hash = Some(pset_hash.clone());
            let outcome_result = (|| -> Result<Option<(f64, f64)>> {
                let purified = purify_result
                    .as_ref()
                    .map_err(|e| Error::Validation(e.to_string()))?;
                let clean_model = train_gnn(
                    &arch,
                    &ctx.graph,
                    &ctx.clean_features,
                    &ctx.split,
                    &ctx.train_cfg(seed),
                )?;
                let acc_clean = evaluate_accuracy(
                    &clean_model,
                    &ctx.graph,
                    &ctx.clean_features,
                    &outcome.eval_set,
                )? * 100.0;
                let model = train_gnn(
                    &arch,
                    &purified.graph,
                    &features,
                    &ctx.split,
                    &ctx.train_cfg(seed),
                )?;
                let acc =
                    evaluate_accuracy(&model, &purified.graph, &features, &outcome.eval_set)?
                        * 100.0;
                row.acc_clean = Some(acc_clean);
                row.acc_attack = Some(acc);
                if acc_clean > 0.0 {
                    row.rda = Some(metrics::rda(acc_clean, acc)?);
                }
                row.metrics = ctx.metric_bundle(&purified.graph, &features, seed);
                row.metrics.acc = Some(acc);
                row.metrics.rda = row.rda;
                if let Some(cert) = &ctx.cfg.certification {
                    let (ca, mcr) = ctx.certify(
                        cert,
                        &model,
                        &purified.graph,
                        &features,
                        &outcome.eval_set,
                        seed,
                    )?;
                    return Ok(Some((ca, mcr)));
                }
                Ok(None)
            })();
            match outcome_result {
                Ok(Some((ca, mcr))) => {
                    row.ca = Some(ca);
                    row.mcr = Some(mcr);
                }
                Ok(None) => {}
                Err(e) => row.error = Some(e.to_string()),
            }
            row.wall_ms = row_started.elapsed().as_millis() as u64;
            rows.push(row);
        }
    }
    rows
}

fn worker_count(jobs: usize) -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&t| t >= 1)
        .unwrap_or(1)
        .min(jobs.max(1))
}

/// Runs the full pipeline for a validated config and returns the report.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RobustnessReport> {
    cfg.validate()?;
    let ctx = Arc::new(prepare(cfg)?);

    let mut jobs = Vec::new();
    for (victim_idx, victim) in cfg.victims.iter().enumerate() {
        for &seed in &victim.seeds {
            jobs.push(Job::Clean { victim_idx, seed });
        }
    }
    for (attack_idx, attack) in cfg.attacks.iter().enumerate() {
        for &seed in attack.seeds() {
            jobs.push(Job::Attack { attack_idx, seed });
        }
    }

    let workers = worker_count(jobs.len());
    let mut results: Vec<(usize, Vec<ReportRow>)> = if workers <= 1 {
        jobs.iter()
            .enumerate()
            .map(|(idx, job)| (idx, run_job(&ctx, job)))
            .collect()
    } else {
        let jobs = Arc::new(jobs);
        let mut handles = Vec::new();
        for w in 0..workers {
            let ctx = Arc::clone(&ctx);
            let jobs = Arc::clone(&jobs);
            handles.push(std::thread::spawn(move || {
                let mut out = Vec::new();
                for (idx, job) in jobs.iter().enumerate() {
                    if idx % workers == w {
                        out.push((idx, run_job(&ctx, job)));
                    }
                }
                out
            }));
        }
        let mut merged = Vec::new();
        for handle in handles {
            merged.extend(handle.join().expect("worker thread panicked"));
        }
        merged
    };
    results.sort_by_key(|(idx, _)| *idx);

    let rows = results.into_iter().flat_map(|(_, rows)| rows).collect();
    Ok(RobustnessReport {
        config: cfg.clone(),
        rows,
    })
}

fn run_job(ctx: &PipelineCtx, job: &Job) -> Vec<ReportRow> {
    match job {
        Job::Clean { victim_idx, seed } => run_clean_job(ctx, *victim_idx, *seed),
        Job::Attack { attack_idx, seed } => run_attack_job(ctx, *attack_idx, *seed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{DefenseSpec, SplitSpec, TrainSpec};
    use crate::tagraph::SbmParams;
    use crate::victims::GnnKind;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            dataset: DatasetSpec::Synthetic {
                params: SbmParams {
                    num_nodes: 80,
                    num_classes: 2,
                    intra_edge_prob: 0.18,
                    inter_edge_prob: 0.03,
                    vocab_size: 24,
                    words_per_node: 6,
                    class_word_skew: 0.7,
                    seed: 3,
                },
            },
            subset: None,
            split: SplitSpec {
                train_frac: 0.3,
                val_frac: 0.1,
                seed: 1,
            },
            embedding: EmbeddingSpec::Bow {
                max_size: 24,
                min_df: 1,
            },
            victims: vec![VictimSpec {
                arch: GnnKind::Gcn,
                seeds: vec![1, 2],
                hidden: Some(16),
                dropout: None,
            }],
            train: TrainSpec {
                epochs: 40,
                ..TrainSpec::default()
            },
            attacks: vec![AttackSpec::Dice {
                rate: 0.3,
                seeds: vec![1],
                oracle_labels: false,
            }],
            defense: Some(DefenseSpec::Auto),
            certification: None,
            output_dir: "unused".into(),
        }
    }

    #[test]
    fn clean_only_config_produces_clean_rows() {
        let mut cfg = small_config();
        cfg.attacks.clear();
        cfg.defense = None;
        let report = run_experiment(&cfg).unwrap();
        assert_eq!(report.rows.len(), 2); // one per victim seed
        for row in &report.rows {
            assert_eq!(row.attack, "clean");
            assert!(row.rda.is_none());
            assert!(row.acc_clean.is_some());
            assert!(row.error.is_none(), "{:?}", row.error);
        }
    }

    #[test]
    fn attack_rows_count_and_consistency() {
        let report = run_experiment(&small_config()).unwrap();
        // 2 clean rows + 1 attack seed x 1 victim x (attack + purify rows).
        assert_eq!(report.rows.len(), 2 + 2);
        let attack_row = report
            .rows
            .iter()
            .find(|r| r.attack == "dice")
            .expect("dice row");
        assert!(attack_row.error.is_none(), "{:?}", attack_row.error);
        let rda = crate::metrics::rda(
            attack_row.acc_clean.unwrap(),
            attack_row.acc_attack.unwrap(),
        )
        .unwrap();
        assert!((rda - attack_row.rda.unwrap()).abs() < 1e-9);
        assert!(attack_row.pset_hash.is_some());
        let purify_row = report
            .rows
            .iter()
            .find(|r| r.attack == "dice+purify")
            .expect("purify row");
        assert!(purify_row.error.is_none(), "{:?}", purify_row.error);
    }

    #[test]
    fn rerun_hash_is_stable_and_thread_count_invariant() {
        let cfg = small_config();
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());

        std::env::set_var(THREADS_ENV, "3");
        let c = run_experiment(&cfg).unwrap();
        std::env::remove_var(THREADS_ENV);
        assert_eq!(a.content_hash(), c.content_hash());
    }
}
