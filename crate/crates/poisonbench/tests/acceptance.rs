//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the measured numbers. Run with
//! `cargo test --release --test acceptance -- --nocapture`.
//!
//! The synthetic-dataset parameters used here were pinned by reference runs;
//! the asserted thresholds are fixed in code below.

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::Instant;

use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use poisonbench::attacks::*;
use poisonbench::bench::*;
use poisonbench::defend::*;
use poisonbench::embed::*;
use poisonbench::metrics;
use poisonbench::tagraph::*;
use poisonbench::victims::*;

#[allow(clippy::too_many_arguments)]
fn sbm(
    n: usize,
    c: usize,
    intra: f64,
    inter: f64,
    vocab: usize,
    words: usize,
    skew: f64,
    seed: u64,
) -> TextAttributedGraph {
    generate_synthetic_tag(&SbmParams {
        num_nodes: n,
        num_classes: c,
        intra_edge_prob: intra,
        inter_edge_prob: inter,
        vocab_size: vocab,
        words_per_node: words,
        class_word_skew: skew,
        seed,
    })
    .expect("valid SBM parameters")
}

fn bow(graph: &TextAttributedGraph, max: usize) -> EmbeddingMatrix {
    let vocab = build_vocab(graph.texts(), max, 1).unwrap();
    bow_embed(graph.texts(), &vocab).unwrap()
}

fn train_eval(
    graph: &TextAttributedGraph,
    features: &EmbeddingMatrix,
    split: &NodeSplit,
    seed: u64,
    eval: &[usize],
) -> f64 {
    let model = train_gnn(
        &GnnArch::gcn(),
        graph,
        features,
        split,
        &TrainConfig::with_seed(seed),
    )
    .unwrap();
    evaluate_accuracy(&model, graph, features, eval).unwrap() * 100.0
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

// ---------------------------------------------------------------------------
// 1. RDA identities.
// ---------------------------------------------------------------------------

#[test]
fn criterion_01_rda_identities() {
    let cases = [
        (85.46, 58.15, 31.96),
        (89.49, 70.93, 20.74),
        (92.17, 92.49, -0.35),
    ];
    for (clean, attack, expect) in cases {
        let got = metrics::rda(clean, attack).unwrap();
        assert!(
            (got - expect).abs() <= 0.01,
            "ACCEPTANCE 1 FAIL: rda({clean}, {attack}) = {got}, expected {expect} +/- 0.01"
        );
    }
    println!("ACCEPTANCE 1 PASS: rda(85.46,58.15)=31.96, rda(89.49,70.93)=20.74, rda(92.17,92.49)=-0.35, all within 0.01");
}

// ---------------------------------------------------------------------------
// 2. Victim sanity: clean accuracy on the reference SBM and gradient check.
// ---------------------------------------------------------------------------

#[test]
fn criterion_02_victim_sanity() {
    let started = Instant::now();
    // Reference run with these parameters lands at 91.5% test accuracy,
    // inside the 85-95% band; the asserted floor is 85%.
    let graph = sbm(1000, 5, 0.02, 0.002, 300, 10, 0.2, 7);
    let features = bow(&graph, 300);
    let split = split_nodes(&graph, 0.1, 0.1, 0).unwrap();
    let acc = train_eval(&graph, &features, &split, 1, &split.test);
    assert!(
        acc >= 85.0,
        "ACCEPTANCE 2 FAIL: clean GCN accuracy {acc:.2}% below the 85% floor"
    );

    // Gradient check on a 10-node toy: central finite differences within
    // 1e-4 relative error for every GCN weight.
    let labels = vec![0, 1, 0, 1, 0, 1, 0, 1, 0, 1];
    let toy = TextAttributedGraph::new(
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
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let toy_features = EmbeddingMatrix::new(
        Array2::from_shape_fn((10, 4), |_| rng.gen_range(-1.0..1.0)),
        Provenance::External("toy".into()),
    )
    .unwrap();
    let worst = gradient_check(GnnKind::Gcn, &toy, &toy_features, 8, 11).unwrap();
    assert!(
        worst < 1e-4,
        "ACCEPTANCE 2 FAIL: worst relative gradient error {worst:e} exceeds 1e-4"
    );
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 90,
        "ACCEPTANCE 2 FAIL: runtime {elapsed:?} exceeds 90 s"
    );
    println!(
        "ACCEPTANCE 2 PASS: clean GCN accuracy {acc:.2}% >= 85%, gradient check worst rel err {worst:.2e} < 1e-4 ({elapsed:?})"
    );
}

// ---------------------------------------------------------------------------
// 3 & 11. Attack effectiveness ordering and combined-attack direction share a
// five-seed study on the same SBM.
// ---------------------------------------------------------------------------

struct GlobalStudy {
    meta_rda: Vec<f64>,
    rand_rda: Vec<f64>,
    dice10_rda: Vec<f64>,
    dice40_rda: Vec<f64>,
    word_rda: Vec<f64>,
    meta_acc: Vec<f64>,
    combined_acc: Vec<f64>,
    elapsed_s: f64,
}

static GLOBAL_STUDY: OnceLock<GlobalStudy> = OnceLock::new();

fn global_study() -> &'static GlobalStudy {
    GLOBAL_STUDY.get_or_init(|| {
        let started = Instant::now();
        let vocab_size = 200;
        let graph = sbm(300, 3, 0.06, 0.006, vocab_size, 15, 0.3, 11);
        let features = bow(&graph, vocab_size);
        let split = split_nodes(&graph, 0.3, 0.1, 0).unwrap();
        let labeled: Vec<usize> = split.train.iter().chain(split.val.iter()).copied().collect();

        let mut study = GlobalStudy {
            meta_rda: vec![],
            rand_rda: vec![],
            dice10_rda: vec![],
            dice40_rda: vec![],
            word_rda: vec![],
            meta_acc: vec![],
            combined_acc: vec![],
            elapsed_s: 0.0,
        };
        for seed in 1..=5u64 {
            let clean_acc = train_eval(&graph, &features, &split, seed, &split.test);

            let meta = meta_gradient_attack(
                &graph,
                &features,
                &split,
                0.2,
                seed,
                &MetaAttackConfig::default(),
            )
            .unwrap();
            let poisoned = apply_perturbation(&graph, &meta).unwrap();
            let acc = train_eval(&poisoned, &features, &split, seed, &split.test);
            study.meta_rda.push(metrics::rda(clean_acc, acc).unwrap());
            study.meta_acc.push(acc);

            let rnd = random_flip_attack(&graph, 0.2, seed).unwrap();
            let poisoned = apply_perturbation(&graph, &rnd).unwrap();
            let acc = train_eval(&poisoned, &features, &split, seed, &split.test);
            study.rand_rda.push(metrics::rda(clean_acc, acc).unwrap());

            let surrogate = train_surrogate(&graph, &features, &labeled).unwrap();
            let view = surrogate_label_view(&graph, &split, &surrogate, &features, false);
            for (rate, out) in [(0.1, &mut study.dice10_rda), (0.4, &mut study.dice40_rda)] {
                let pset = dice_attack(&graph, &view, rate, seed).unwrap();
                let poisoned = apply_perturbation(&graph, &pset).unwrap();
                let acc = train_eval(&poisoned, &features, &split, seed, &split.test);
                out.push(metrics::rda(clean_acc, acc).unwrap());
            }

            let vocab = build_vocab(graph.texts(), vocab_size, 1).unwrap();
            let clf = train_text_surrogate(
                graph.texts(),
                graph.labels(),
                &labeled,
                &vocab,
                graph.num_classes(),
            )
            .unwrap();
            let anchors: Vec<usize> = labeled.iter().map(|&n| graph.labels()[n]).collect();
            let word =
                word_attack(graph.texts(), &clf, &vocab, &labeled, &anchors, 3, 30, seed).unwrap();
            let poisoned = apply_perturbation(&graph, &word.pset).unwrap();
            let features_w = bow(&poisoned, vocab_size);
            let acc = train_eval(&poisoned, &features_w, &split, seed, &split.test);
            study.word_rda.push(metrics::rda(clean_acc, acc).unwrap());

            let combined = combined_attack(&graph, &meta, &word.pset).unwrap();
            let poisoned = apply_perturbation(&graph, &combined).unwrap();
            let features_c = bow(&poisoned, vocab_size);
            let acc = train_eval(&poisoned, &features_c, &split, seed, &split.test);
            study.combined_acc.push(acc);
        }
        study.elapsed_s = started.elapsed().as_secs_f64();
        study
    })
}

#[test]
fn criterion_03_attack_effectiveness_ordering() {
    let started = Instant::now();
    let study = global_study();

    let meta = mean(&study.meta_rda);
    let rand = mean(&study.rand_rda);
    assert!(
        meta >= rand + 2.0,
        "ACCEPTANCE 3 FAIL: mean meta RDA {meta:.2} < random RDA {rand:.2} + 2"
    );
    let dice10 = mean(&study.dice10_rda);
    let dice40 = mean(&study.dice40_rda);
    assert!(
        dice40 > dice10 && dice10 > -1.0,
        "ACCEPTANCE 3 FAIL: DICE ordering violated: 40% -> {dice40:.2}, 10% -> {dice10:.2}"
    );

    // Targeted leg: misclassification under the greedy margin attack vs the
    // random-rewire baseline at budget 5, averaged over five seeds.
    let graph = sbm(400, 3, 0.08, 0.008, 150, 8, 0.2, 13);
    let features = bow(&graph, 150);
    let split = split_nodes(&graph, 0.1, 0.1, 0).unwrap();
    let labeled: Vec<usize> = split.train.iter().chain(split.val.iter()).copied().collect();
    let mut targeted_mis = vec![];
    let mut rewire_mis = vec![];
    for seed in 1..=5u64 {
        let targets = select_targets(&graph, &split, 10, 0.1, seed).unwrap();
        let surrogate = train_surrogate(&graph, &features, &labeled).unwrap();

        let union = |mk: &mut dyn FnMut(usize) -> PerturbationSet| -> TextAttributedGraph {
            let mut edges: BTreeSet<(usize, usize)> = graph.edges().iter().copied().collect();
            let mut merged = PerturbationSet::new("union", seed, BudgetSpec::per_target(5));
            for &t in &targets.nodes {
                for f in mk(t).edge_flips {
                    let feasible = match f.op {
                        FlipOp::Add => !edges.contains(&f.pair()),
                        FlipOp::Remove => edges.contains(&f.pair()),
                    };
                    if feasible && !merged.edge_flips.iter().any(|g| g.pair() == f.pair()) {
                        match f.op {
                            FlipOp::Add => {
                                edges.insert(f.pair());
                            }
                            FlipOp::Remove => {
                                edges.remove(&f.pair());
                            }
                        }
                        merged.edge_flips.push(f);
                    }
                }
            }
            apply_perturbation(&graph, &merged).unwrap()
        };

        let poisoned = union(&mut |t| {
            targeted_gradient_attack(&graph, &features, &surrogate, t, 5).unwrap()
        });
        let acc = train_eval(&poisoned, &features, &split, seed, &targets.nodes);
        targeted_mis.push(100.0 - acc);

        let poisoned = union(&mut |t| {
            random_rewire_attack(&graph, t, 5, seed.wrapping_add(t as u64)).unwrap()
        });
        let acc = train_eval(&poisoned, &features, &split, seed, &targets.nodes);
        rewire_mis.push(100.0 - acc);
    }
    let tgt = mean(&targeted_mis);
    let rwr = mean(&rewire_mis);
    assert!(
        tgt >= rwr + 10.0,
        "ACCEPTANCE 3 FAIL: targeted misclassification {tgt:.2} < rewire {rwr:.2} + 10"
    );
    let total = study.elapsed_s + started.elapsed().as_secs_f64();
    assert!(
        total < 600.0,
        "ACCEPTANCE 3 FAIL: runtime {total:.0} s exceeds 10 min"
    );
    println!(
        "ACCEPTANCE 3 PASS: meta RDA {meta:.2} >= random {rand:.2}+2; DICE {dice40:.2} > {dice10:.2} > -1; targeted misclassification {tgt:.2} >= rewire {rwr:.2}+10 ({total:.0} s total)"
    );
}

#[test]
fn criterion_11_combined_attack_direction() {
    let study = global_study();
    let wins = study
        .combined_acc
        .iter()
        .zip(study.meta_acc.iter())
        .filter(|(c, m)| c <= m)
        .count();
    assert!(
        wins >= 3,
        "ACCEPTANCE 11 FAIL: combined <= structural in only {wins} of 5 seeds (combined {:?}, structural {:?})",
        study.combined_acc,
        study.meta_acc
    );
    let word = mean(&study.word_rda);
    let structural = mean(&study.meta_rda);
    assert!(
        word < structural,
        "ACCEPTANCE 11 FAIL: textual-only RDA {word:.2} not below structural-only RDA {structural:.2}"
    );
    println!(
        "ACCEPTANCE 11 PASS: combined <= structural in {wins}/5 seeds; textual RDA {word:.2} < structural RDA {structural:.2}"
    );
}

// ---------------------------------------------------------------------------
// 4. Targeted oracle equivalence on 50 random graphs with <= 10 nodes.
// ---------------------------------------------------------------------------

#[test]
fn criterion_04_targeted_oracle_equivalence() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut checked = 0usize;
    while checked < 50 {
        let n = rng.gen_range(5..=10);
        let classes = rng.gen_range(2..=3);
        let p = rng.gen_range(0.25..0.55);
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.gen::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        if labels.iter().collect::<BTreeSet<_>>().len() < 2 {
            continue;
        }
        let graph = TextAttributedGraph::new(
            n,
            &edges,
            vec![String::new(); n],
            labels,
            classes,
        )
        .unwrap();
        let d = 3;
        let features = EmbeddingMatrix::new(
            Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0)),
            Provenance::External("rand".into()),
        )
        .unwrap();
        let labeled: Vec<usize> = (0..n).step_by(2).collect();
        let surrogate = match train_surrogate(&graph, &features, &labeled) {
            Ok(s) => s,
            Err(_) => continue,
        };
        let target = rng.gen_range(0..n);

        let pset = match targeted_gradient_attack(&graph, &features, &surrogate, target, 1) {
            Ok(p) => p,
            Err(_) => continue, // singleton pools cannot occur for n >= 5
        };
        if pset.edge_flips.is_empty() {
            continue; // margin could not be decreased; nothing to compare
        }

        // Independent dense oracle: enumerate every candidate flip, rebuild
        // A_hat from scratch, and compute the target margin by dense matrix
        // products.
        let anchor = dense_prediction(&graph, &features, &surrogate, graph.edges(), target);
        let mut pool = BTreeSet::new();
        let mut local = vec![target];
        local.extend_from_slice(graph.neighbors(target));
        for &x in &local {
            for w in 0..n {
                if w != x {
                    pool.insert((x.min(w), x.max(w)));
                }
            }
        }
        let mut best = f64::INFINITY;
        for &(u, v) in &pool {
            let mut trial: Vec<(usize, usize)> = graph.edges().to_vec();
            if trial.contains(&(u, v)) {
                trial.retain(|&e| e != (u, v));
            } else {
                trial.push((u, v));
            }
            best = best.min(dense_margin(&graph, &features, &surrogate, &trial, target, anchor));
        }
        let chosen = {
            let mut trial: Vec<(usize, usize)> = graph.edges().to_vec();
            let pair = pset.edge_flips[0].pair();
            if trial.contains(&pair) {
                trial.retain(|&e| e != pair);
            } else {
                trial.push(pair);
            }
            dense_margin(&graph, &features, &surrogate, &trial, target, anchor)
        };
        assert!(
            (chosen - best).abs() < 1e-9,
            "ACCEPTANCE 4 FAIL: case {checked}: chosen flip margin {chosen} vs exhaustive best {best}"
        );
        checked += 1;
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 30,
        "ACCEPTANCE 4 FAIL: runtime {elapsed:?} exceeds 30 s"
    );
    println!("ACCEPTANCE 4 PASS: budget-1 targeted flip equals the exhaustive best on 50 random graphs ({elapsed:?})");
}

fn dense_a_hat(n: usize, edges: &[(usize, usize)]) -> Array2<f64> {
    let mut a = Array2::<f64>::zeros((n, n));
    for &(u, v) in edges {
        a[[u, v]] = 1.0;
        a[[v, u]] = 1.0;
    }
    for i in 0..n {
        a[[i, i]] = 1.0;
    }
    let degree: Vec<f64> = (0..n).map(|i| a.row(i).sum()).collect();
    for i in 0..n {
        for j in 0..n {
            a[[i, j]] /= (degree[i] * degree[j]).sqrt();
        }
    }
    a
}

fn dense_logits(
    graph: &TextAttributedGraph,
    features: &EmbeddingMatrix,
    surrogate: &SurrogateModel,
    edges: &[(usize, usize)],
    target: usize,
) -> Vec<f64> {
    let a = dense_a_hat(graph.num_nodes(), edges);
    let z = a.dot(&a.dot(features.data())).dot(&surrogate.w);
    z.row(target).to_vec()
}

fn dense_prediction(
    graph: &TextAttributedGraph,
    features: &EmbeddingMatrix,
    surrogate: &SurrogateModel,
    edges: &[(usize, usize)],
    target: usize,
) -> usize {
    dense_logits(graph, features, surrogate, edges, target)
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .map(|(c, _)| c)
        .unwrap()
}

fn dense_margin(
    graph: &TextAttributedGraph,
    features: &EmbeddingMatrix,
    surrogate: &SurrogateModel,
    edges: &[(usize, usize)],
    target: usize,
    anchor: usize,
) -> f64 {
    let logits = dense_logits(graph, features, surrogate, edges, target);
    let mut best_other = f64::NEG_INFINITY;
    for (c, &v) in logits.iter().enumerate() {
        if c != anchor {
            best_other = best_other.max(v);
        }
    }
    logits[anchor] - best_other
}

// ---------------------------------------------------------------------------
// 5. Metric oracles: brute-force agreement within 1e-9.
// ---------------------------------------------------------------------------

#[test]
fn criterion_05_metric_oracles() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for case in 0..100 {
        let n = rng.gen_range(6..=50);
        let d = rng.gen_range(2..=4);
        let classes = rng.gen_range(2..=4);
        let data = Array2::from_shape_fn((n, d), |_| rng.gen_range(-2.0..2.0));
        let mut labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        // Every class needs at least one member for the cluster metrics.
        for (c, label) in labels.iter_mut().enumerate().take(classes) {
            *label = c;
        }
        let emb = EmbeddingMatrix::new(data.clone(), Provenance::External("t".into())).unwrap();

        let dbi = metrics::davies_bouldin(&emb, &labels).unwrap();
        let dbi_ref = brute_dbi(&data, &labels, classes);
        assert!(
            (dbi - dbi_ref).abs() < 1e-9,
            "ACCEPTANCE 5 FAIL: DBI case {case}: {dbi} vs {dbi_ref}"
        );

        let sil = metrics::silhouette(&emb, &labels, 10_000, 0).unwrap();
        let sil_ref = brute_silhouette(&data, &labels, classes);
        assert!(
            (sil - sil_ref).abs() < 1e-9,
            "ACCEPTANCE 5 FAIL: silhouette case {case}: {sil} vs {sil_ref}"
        );

        let k = rng.gen_range(1..n.min(6));
        let hom = metrics::embedding_homophily(&emb, &labels, k).unwrap();
        let hom_ref = brute_homophily(&data, &labels, k);
        assert!(
            (hom - hom_ref).abs() < 1e-9,
            "ACCEPTANCE 5 FAIL: homophily case {case}: {hom} vs {hom_ref}"
        );

        // A random graph on the same nodes for NCon and edge homophily.
        let mut edges = Vec::new();
        for u in 0..n {
            for v in (u + 1)..n {
                if rng.gen::<f64>() < 0.2 {
                    edges.push((u, v));
                }
            }
        }
        if edges.is_empty() {
            edges.push((0, 1));
        }
        let graph =
            TextAttributedGraph::new(n, &edges, vec![String::new(); n], labels.clone(), classes)
                .unwrap();
        let ncon = metrics::neighbor_consistency(&emb, &graph).unwrap();
        let ncon_ref = brute_ncon(&data, &edges);
        assert!(
            (ncon - ncon_ref).abs() < 1e-9,
            "ACCEPTANCE 5 FAIL: NCon case {case}: {ncon} vs {ncon_ref}"
        );

        let eh = metrics::edge_homophily(&graph, &labels).unwrap();
        let eh_ref = 100.0
            * edges.iter().filter(|&&(u, v)| labels[u] == labels[v]).count() as f64
            / edges.len() as f64;
        assert!(
            (eh - eh_ref).abs() < 1e-9,
            "ACCEPTANCE 5 FAIL: edge homophily case {case}: {eh} vs {eh_ref}"
        );
    }

    // ELMI against an exact table on a constructed discrete instance.
    let values = [0.0, 0.0, 0.0, 0.0, 0.0, 10.0, 10.0, 10.0, 10.0, 10.0];
    let labels = [0usize, 0, 0, 0, 1, 0, 1, 1, 1, 1];
    let mut data = Array2::zeros((10, 1));
    for (i, &v) in values.iter().enumerate() {
        data[[i, 0]] = v;
    }
    let emb = EmbeddingMatrix::new(data, Provenance::External("d".into())).unwrap();
    let got = metrics::elmi(&emb, &labels, 2, 0).unwrap();
    let expect = 100.0 * exact_nmi(&[[4.0, 1.0], [1.0, 4.0]]);
    assert!(
        (got - expect).abs() < 1e-9,
        "ACCEPTANCE 5 FAIL: ELMI exact-table {got} vs {expect}"
    );

    // ESMI degree term against an exact table on a 30-node toy: three hubs
    // wired to nine leaves each, embeddings one-hot in the hub/leaf degree
    // bin, so the (cell, bin) joint is a known diagonal table.
    let mut edges = Vec::new();
    for hub in 0..3usize {
        for leaf in 0..9usize {
            edges.push((hub, 3 + hub * 9 + leaf));
        }
    }
    let toy30 = TextAttributedGraph::new(30, &edges, vec![String::new(); 30], vec![0; 30], 1)
        .unwrap();
    let mut data = Array2::zeros((30, 2));
    for node in 0..30 {
        data[[node, usize::from(node >= 3)]] = 1.0;
    }
    let emb = EmbeddingMatrix::new(data, Provenance::External("d".into())).unwrap();
    let (_, per) = metrics::esmi_detailed(&emb, &toy30, 2, 2, 0).unwrap();
    let expect = 100.0 * exact_nmi(&[[3.0, 0.0], [0.0, 27.0]]);
    assert!(
        (per[0] - expect).abs() < 1e-9,
        "ACCEPTANCE 5 FAIL: ESMI degree term {} vs {expect}",
        per[0]
    );

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 60,
        "ACCEPTANCE 5 FAIL: runtime {elapsed:?} exceeds 60 s"
    );
    println!("ACCEPTANCE 5 PASS: DBI/silhouette/Hom/NCon/edge-homophily match brute force on 100 instances; ELMI/ESMI match exact tables ({elapsed:?})");
}

fn dist(a: &Array2<f64>, i: usize, j: usize) -> f64 {
    let mut s = 0.0;
    for c in 0..a.ncols() {
        s += (a[[i, c]] - a[[j, c]]).powi(2);
    }
    s.sqrt()
}

fn brute_dbi(data: &Array2<f64>, labels: &[usize], classes: usize) -> f64 {
    let n = data.nrows();
    let d = data.ncols();
    let members: Vec<Vec<usize>> = (0..classes)
        .map(|c| (0..n).filter(|&i| labels[i] == c).collect())
        .collect();
    let present: Vec<&Vec<usize>> = members.iter().filter(|m| !m.is_empty()).collect();
    let centroid = |m: &[usize]| -> Vec<f64> {
        let mut c = vec![0.0; d];
        for &i in m {
            for (k, ck) in c.iter_mut().enumerate() {
                *ck += data[[i, k]];
            }
        }
        c.iter().map(|v| v / m.len() as f64).collect()
    };
    let cents: Vec<Vec<f64>> = present.iter().map(|m| centroid(m)).collect();
    let disp: Vec<f64> = present
        .iter()
        .zip(cents.iter())
        .map(|(m, c)| {
            m.iter()
                .map(|&i| {
                    (0..d)
                        .map(|k| (data[[i, k]] - c[k]).powi(2))
                        .sum::<f64>()
                        .sqrt()
                })
                .sum::<f64>()
                / m.len() as f64
        })
        .collect();
    let k = present.len();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..k {
            if i == j {
                continue;
            }
            let sep: f64 = (0..d)
                .map(|c| (cents[i][c] - cents[j][c]).powi(2))
                .sum::<f64>()
                .sqrt();
            worst = worst.max((disp[i] + disp[j]) / sep);
        }
        total += worst;
    }
    total / k as f64
}

fn brute_silhouette(data: &Array2<f64>, labels: &[usize], classes: usize) -> f64 {
    let n = data.nrows();
    let mut total = 0.0;
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| labels[j] == labels[i]).collect();
        if own.len() <= 1 {
            continue;
        }
        let a = own
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| dist(data, i, j))
            .sum::<f64>()
            / (own.len() - 1) as f64;
        let mut b = f64::INFINITY;
        for c in 0..classes {
            if c == labels[i] {
                continue;
            }
            let other: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
            if other.is_empty() {
                continue;
            }
            b = b.min(other.iter().map(|&j| dist(data, i, j)).sum::<f64>() / other.len() as f64);
        }
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    100.0 * total / n as f64
}

fn brute_homophily(data: &Array2<f64>, labels: &[usize], k: usize) -> f64 {
    let n = data.nrows();
    let mut matches = 0usize;
    for i in 0..n {
        let mut order: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        order.sort_by(|&a, &b| {
            dist(data, i, a)
                .partial_cmp(&dist(data, i, b))
                .unwrap()
                .then(a.cmp(&b))
        });
        matches += order[..k].iter().filter(|&&j| labels[j] == labels[i]).count();
    }
    100.0 * matches as f64 / (n * k) as f64
}

fn brute_ncon(data: &Array2<f64>, edges: &[(usize, usize)]) -> f64 {
    let cos = |i: usize, j: usize| -> f64 {
        let mut dot = 0.0;
        let mut ni = 0.0;
        let mut nj = 0.0;
        for c in 0..data.ncols() {
            dot += data[[i, c]] * data[[j, c]];
            ni += data[[i, c]].powi(2);
            nj += data[[j, c]].powi(2);
        }
        if ni == 0.0 || nj == 0.0 {
            0.0
        } else {
            dot / (ni.sqrt() * nj.sqrt())
        }
    };
    100.0 * edges.iter().map(|&(u, v)| cos(u, v)).sum::<f64>() / edges.len() as f64
}

fn exact_nmi(joint: &[[f64; 2]; 2]) -> f64 {
    let n: f64 = joint.iter().flatten().sum();
    let pa = [
        (joint[0][0] + joint[0][1]) / n,
        (joint[1][0] + joint[1][1]) / n,
    ];
    let pb = [
        (joint[0][0] + joint[1][0]) / n,
        (joint[0][1] + joint[1][1]) / n,
    ];
    let mut mi = 0.0;
    for x in 0..2 {
        for y in 0..2 {
            let pxy = joint[x][y] / n;
            if pxy > 0.0 {
                mi += pxy * (pxy / (pa[x] * pb[y])).ln();
            }
        }
    }
    let h = |p: &[f64; 2]| -> f64 {
        p.iter()
            .filter(|&&v| v > 0.0)
            .map(|&v| -v * v.ln())
            .sum()
    };
    mi / h(&pa).min(h(&pb))
}

// ---------------------------------------------------------------------------
// 6. DICE homophily law.
// ---------------------------------------------------------------------------

#[test]
fn criterion_06_dice_homophily_law() {
    let graph = sbm(300, 3, 0.06, 0.006, 200, 15, 0.3, 11);
    let features = bow(&graph, 200);
    let split = split_nodes(&graph, 0.3, 0.1, 0).unwrap();
    let labeled: Vec<usize> = split.train.iter().chain(split.val.iter()).copied().collect();
    let surrogate = train_surrogate(&graph, &features, &labeled).unwrap();
    let view = surrogate_label_view(&graph, &split, &surrogate, &features, false);
    let clean = metrics::edge_homophily(&graph, graph.labels()).unwrap();
    let mut drops = Vec::new();
    for seed in 0..20u64 {
        let pset = dice_attack(&graph, &view, 0.4, seed).unwrap();
        assert!(!pset.edge_flips.is_empty());
        let poisoned = apply_perturbation(&graph, &pset).unwrap();
        let hom = metrics::edge_homophily(&poisoned, graph.labels()).unwrap();
        assert!(
            hom < clean,
            "ACCEPTANCE 6 FAIL: seed {seed}: homophily {hom:.2} did not strictly drop below {clean:.2}"
        );
        drops.push(clean - hom);
    }
    let min_drop = drops.iter().cloned().fold(f64::INFINITY, f64::min);
    println!(
        "ACCEPTANCE 6 PASS: edge homophily strictly decreased in all 20 seeded DICE runs (clean {clean:.2}%, min drop {min_drop:.2} points)"
    );
}

// ---------------------------------------------------------------------------
// 7. Purification efficacy.
// ---------------------------------------------------------------------------

#[test]
fn criterion_07_purification_efficacy() {
    let started = Instant::now();
    let graph = sbm(300, 3, 0.04, 0.005, 200, 25, 0.5, 17);
    let vocab = build_vocab(graph.texts(), 200, 1).unwrap();
    let features = tfidf_embed(graph.texts(), &vocab).unwrap();
    let split = split_nodes(&graph, 0.1, 0.1, 0).unwrap();
    let labeled: Vec<usize> = split.train.iter().chain(split.val.iter()).copied().collect();
    let surrogate = train_surrogate(&graph, &features, &labeled).unwrap();
    let view = surrogate_label_view(&graph, &split, &surrogate, &features, false);

    let mut added_fraction = Vec::new();
    for seed in 1..=5u64 {
        let pset = dice_attack(&graph, &view, 0.4, seed).unwrap();
        let poisoned = apply_perturbation(&graph, &pset).unwrap();
        let acc_poisoned = train_eval(&poisoned, &features, &split, seed, &split.test);
        let outcome = purify(
            &poisoned,
            &features,
            &PurifyConfig::Quantile { quantile: 0.4 },
        )
        .unwrap();
        let acc_purified = train_eval(&outcome.graph, &features, &split, seed, &split.test);
        assert!(
            acc_purified >= acc_poisoned + 2.0,
            "ACCEPTANCE 7 FAIL: seed {seed}: purified {acc_purified:.2}% < poisoned {acc_poisoned:.2}% + 2"
        );

        let added: BTreeSet<(usize, usize)> = pset
            .edge_flips
            .iter()
            .filter(|f| matches!(f.op, FlipOp::Add))
            .map(|f| f.pair())
            .collect();
        let removed_added = outcome
            .removed_edges
            .iter()
            .filter(|e| added.contains(e))
            .count();
        let fraction = removed_added as f64 / outcome.removed_edges.len() as f64;
        // DICE spends about half its budget on removals, so attack-added
        // edges can make up at most ~50% of a rate-matched quantile sweep.
        // Reference runs land at 36-41%; the frozen floor is 30%, roughly
        // 1.5x the share a random sweep would catch.
        assert!(
            fraction >= 0.30,
            "ACCEPTANCE 7 FAIL: seed {seed}: only {:.0}% of removed edges were attack-added",
            100.0 * fraction
        );
        added_fraction.push(fraction);
    }
    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 300,
        "ACCEPTANCE 7 FAIL: runtime {elapsed:?} exceeds 5 min"
    );
    println!(
        "ACCEPTANCE 7 PASS: purified accuracy beat poisoned by >= 2 points in all 5 runs; {:.0}-{:.0}% of removed edges were attack-added ({elapsed:?})",
        100.0 * added_fraction.iter().cloned().fold(f64::INFINITY, f64::min),
        100.0 * added_fraction.iter().cloned().fold(0.0f64, f64::max)
    );
}

// ---------------------------------------------------------------------------
// 8. Certification exactness.
// ---------------------------------------------------------------------------

#[test]
fn criterion_08_certification_exactness() {
    let started = Instant::now();

    // Clopper-Pearson against an independent bisection on statrs's
    // regularized incomplete beta, over a 200-case grid.
    let oracle = |k: usize, n: usize, alpha: f64| -> f64 {
        if k == 0 {
            return 0.0;
        }
        let (a, b) = (k as f64, (n - k + 1) as f64);
        let mut lo = 0.0;
        let mut hi = 1.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if statrs::function::beta::beta_reg(a, b, mid) < alpha {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    };
    let mut cases = 0usize;
    for n in [10usize, 100, 1000, 10_000] {
        for i in 1..=10usize {
            let k = (i * n / 10).min(n);
            for alpha in [0.01, 0.05, 0.10, 0.20, 0.5] {
                let ours = clopper_pearson_lower(k, n, alpha).unwrap();
                let reference = oracle(k, n, alpha);
                assert!(
                    (ours - reference).abs() < 1e-8,
                    "ACCEPTANCE 8 FAIL: CP(k={k}, n={n}, alpha={alpha}): {ours} vs {reference}"
                );
                cases += 1;
            }
        }
    }
    assert!(cases >= 200, "grid too small: {cases}");

    // Radius identities.
    assert_eq!(
        certified_radius(0.9997, 0.4),
        8,
        "ACCEPTANCE 8 FAIL: certified_radius(0.9997, 0.4) != 8"
    );
    assert_eq!(
        certified_radius(0.81, 0.4),
        1,
        "ACCEPTANCE 8 FAIL: certified_radius(0.81, 0.4) != 1"
    );

    // Soundness: zero false certificates across 100 random 5-node
    // lookup-table classifiers under exhaustive deletion enumeration. The
    // radius is derived from the exact smoothed probability, isolating the
    // certificate from Monte-Carlo noise.
    let p_del = 0.4f64;
    let keep = 1.0 - p_del;
    let base_edges = [(0usize, 1usize), (0, 2), (1, 2), (2, 3), (3, 4)];
    let e = base_edges.len();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut certified = 0usize;
    for _ in 0..100 {
        // Biased tables make some nodes certifiable.
        let preferred: Vec<usize> = (0..5).map(|_| rng.gen_range(0..2)).collect();
        let table: Vec<Vec<usize>> = (0..(1usize << e))
            .map(|_| {
                (0..5)
                    .map(|node| {
                        if rng.gen::<f64>() < 0.92 {
                            preferred[node]
                        } else {
                            rng.gen_range(0..2)
                        }
                    })
                    .collect()
            })
            .collect();
        let exact_dist = |node: usize, deleted_mask: usize| -> [f64; 2] {
            let alive: Vec<usize> = (0..e).filter(|b| deleted_mask & (1 << b) == 0).collect();
            let mut dist = [0.0f64; 2];
            for sub in 0..(1usize << alive.len()) {
                let mut mask = 0usize;
                let mut kept = 0i32;
                for (i, &bit) in alive.iter().enumerate() {
                    if sub & (1 << i) != 0 {
                        mask |= 1 << bit;
                        kept += 1;
                    }
                }
                let prob = keep.powi(kept) * (1.0 - keep).powi(alive.len() as i32 - kept);
                dist[table[mask][node]] += prob;
            }
            dist
        };
        for node in 0..5 {
            let dist = exact_dist(node, 0);
            let pred = if dist[0] >= dist[1] { 0 } else { 1 };
            let radius = certified_radius(dist[pred], p_del);
            if radius == 0 {
                continue;
            }
            certified += 1;
            for deleted_mask in 1usize..(1 << e) {
                if (deleted_mask.count_ones() as usize) > radius.min(e) {
                    continue;
                }
                let after = exact_dist(node, deleted_mask);
                assert!(
                    after[pred] > 0.5,
                    "ACCEPTANCE 8 FAIL: false certificate at node {node}, radius {radius}, deletion mask {deleted_mask:#b}"
                );
            }
        }
    }
    assert!(certified > 0, "ACCEPTANCE 8 FAIL: soundness sweep certified nothing");

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs() < 120,
        "ACCEPTANCE 8 FAIL: runtime {elapsed:?} exceeds 2 min"
    );
    println!(
        "ACCEPTANCE 8 PASS: CP matches the Beta-quantile oracle on {cases} grid cases within 1e-8; radius identities hold; zero false certificates over 100 lookup classifiers ({certified} certified nodes checked exhaustively, {elapsed:?})"
    );
}

// ---------------------------------------------------------------------------
// 9. Smoothing statistics.
// ---------------------------------------------------------------------------

#[test]
fn criterion_09_smoothing_statistics() {
    let edges: Vec<(usize, usize)> = (0..100).map(|i| (i, i + 100)).collect();
    let p_del = 0.4;
    let mut kept = 0usize;
    let samples = 10_000usize;
    for sample in 0..samples {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        rng.set_stream(sample as u64 + 1);
        kept += sample_deleted_edges(&edges, p_del, &mut rng).len();
    }
    let rate = kept as f64 / (samples * edges.len()) as f64;
    assert!(
        (rate - (1.0 - p_del)).abs() <= 0.02,
        "ACCEPTANCE 9 FAIL: empirical retention {rate:.4} outside 0.6 +/- 0.02"
    );
    println!(
        "ACCEPTANCE 9 PASS: empirical edge retention {rate:.4} within 0.02 of {:.1} over 10000 samples",
        1.0 - p_del
    );
}

// ---------------------------------------------------------------------------
// 10. End-to-end determinism.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_end_to_end_determinism() {
    let cfg = ExperimentConfig {
        dataset: DatasetSpec::Synthetic {
            params: SbmParams {
                num_nodes: 120,
                num_classes: 3,
                intra_edge_prob: 0.08,
                inter_edge_prob: 0.01,
                vocab_size: 40,
                words_per_node: 8,
                class_word_skew: 0.5,
                seed: 5,
            },
        },
        subset: None,
        split: SplitSpec {
            train_frac: 0.2,
            val_frac: 0.1,
            seed: 1,
        },
        embedding: EmbeddingSpec::Bow {
            max_size: 40,
            min_df: 1,
        },
        victims: vec![VictimSpec {
            arch: GnnKind::Gcn,
            seeds: vec![1],
            hidden: Some(16),
            dropout: None,
        }],
        train: TrainSpec {
            epochs: 40,
            ..TrainSpec::default()
        },
        attacks: vec![
            AttackSpec::Dice {
                rate: 0.3,
                seeds: vec![1, 2],
                oracle_labels: false,
            },
            AttackSpec::Word {
                edits_per_node: 2,
                seeds: vec![1],
                top_k: 15,
            },
        ],
        defense: Some(DefenseSpec::Auto),
        certification: None,
        output_dir: "unused".into(),
    };
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(
        a.content_hash(),
        b.content_hash(),
        "ACCEPTANCE 10 FAIL: identical configs produced different report hashes"
    );

    // Attack artifact hashes are seed-stable: same seed, same hash; a
    // different seed changes it.
    let graph = sbm(120, 3, 0.08, 0.01, 40, 8, 0.5, 5);
    let h1 = random_flip_attack(&graph, 0.3, 9).unwrap().content_hash();
    let h2 = random_flip_attack(&graph, 0.3, 9).unwrap().content_hash();
    let h3 = random_flip_attack(&graph, 0.3, 10).unwrap().content_hash();
    assert_eq!(h1, h2, "ACCEPTANCE 10 FAIL: same-seed attack hash drifted");
    assert_ne!(h1, h3, "ACCEPTANCE 10 FAIL: different seeds collided");
    println!(
        "ACCEPTANCE 10 PASS: rerun report hash identical ({}); attack hashes seed-stable",
        &a.content_hash()[..16]
    );
}
