//! Command-line interface. Subcommands compose through the on-disk formats:
//! graph directories, embedding files, perturbation JSON, model directories,
//! and experiment configs. Exit codes: 0 success, 1 validation/usage error,
//! 2 runtime failure.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::attacks::{
    self, apply_perturbation, char_attack, dice_attack, meta_gradient_attack, random_flip_attack,
    random_rewire_attack, select_targets, surrogate_label_view, targeted_gradient_attack,
    train_text_surrogate, word_attack, MetaAttackConfig, PerturbationSet,
};
use crate::bench::{run_experiment, ExperimentConfig, RobustnessReport};
use crate::defend::{certify_set, purify, PurifyConfig, SmoothingConfig, VictimClassifier};
use crate::embed::{bow_embed, build_vocab, load_embeddings, tfidf_embed, EmbeddingMatrix};
use crate::error::{Error, Result};
use crate::metrics;
use crate::tagraph::{
    generate_synthetic_tag, load_graph_dir, sample_subset, save_graph, split_nodes, NodeSplit,
    SbmParams, TextAttributedGraph,
};
use crate::victims::{
    evaluate_accuracy, load_model, save_model, train_gnn, train_surrogate, GnnArch, GnnKind,
    TrainConfig,
};

#[derive(Parser)]
#[command(
    name = "poisonbench",
    about = "Poisoning attacks, GNN victims, robustness metrics, purification and certification for text-attributed graphs",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic block-model graph into a data directory.
    Generate(GenerateArgs),
    /// Sample an induced subset of a graph directory.
    Subset(SubsetArgs),
    /// Build a structural or textual perturbation set.
    Attack(AttackArgs),
    /// Train a victim model on a graph directory.
    Train(TrainArgs),
    /// Evaluate a trained model and emit the metric bundle.
    Eval(EvalArgs),
    /// Apply a perturbation set to a graph directory.
    Apply(ApplyArgs),
    /// Purify a graph by pruning low-similarity edges.
    Purify(PurifyArgs),
    /// Certify node predictions under randomized edge deletion.
    Certify(CertifyArgs),
    /// Run a full experiment from a JSON config.
    Run(RunArgs),
    /// Re-emit CSV and plot files from a stored report.
    Report(ReportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 1000)]
    nodes: usize,
    #[arg(long, default_value_t = 5)]
    classes: usize,
    #[arg(long, default_value_t = 0.02)]
    intra: f64,
    #[arg(long, default_value_t = 0.002)]
    inter: f64,
    #[arg(long, default_value_t = 300)]
    vocab: usize,
    #[arg(long, default_value_t = 20)]
    words: usize,
    #[arg(long, default_value_t = 0.6)]
    skew: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SubsetArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    seed_nodes: usize,
    #[arg(long, default_value_t = 10)]
    fanout: usize,
    #[arg(long, default_value_t = 2)]
    hops: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct EmbeddingArgs {
    /// bow | tfidf | external
    #[arg(long, default_value = "bow")]
    embedding: String,
    #[arg(long, default_value_t = 2000)]
    max_vocab: usize,
    #[arg(long, default_value_t = 1)]
    min_df: usize,
    /// Path to an external embedding file (embedding = external).
    #[arg(long)]
    embedding_path: Option<PathBuf>,
    /// L2-normalize external embeddings on load.
    #[arg(long, default_value_t = false)]
    normalize: bool,
}

impl EmbeddingArgs {
    fn build(&self, graph: &TextAttributedGraph) -> Result<EmbeddingMatrix> {
        match self.embedding.as_str() {
            "bow" => {
                let vocab = build_vocab(graph.texts(), self.max_vocab, self.min_df)?;
                bow_embed(graph.texts(), &vocab)
            }
            "tfidf" => {
                let vocab = build_vocab(graph.texts(), self.max_vocab, self.min_df)?;
                tfidf_embed(graph.texts(), &vocab)
            }
            "external" => {
                let path = self.embedding_path.as_ref().ok_or_else(|| {
                    Error::Config("--embedding-path is required with --embedding external".into())
                })?;
                let emb = load_embeddings(path, graph.num_nodes())?;
                Ok(if self.normalize {
                    emb.l2_normalized()
                } else {
                    emb
                })
            }
            other => Err(Error::Config(format!("unknown embedding kind {other:?}"))),
        }
    }
}

#[derive(Args, Clone)]
struct SplitArgs {
    #[arg(long, default_value_t = 0.1)]
    train_frac: f64,
    #[arg(long, default_value_t = 0.1)]
    val_frac: f64,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
}

impl SplitArgs {
    fn build(&self, graph: &TextAttributedGraph) -> Result<NodeSplit> {
        split_nodes(graph, self.train_frac, self.val_frac, self.split_seed)
    }
}

#[derive(Args)]
struct AttackArgs {
    #[arg(long)]
    data: PathBuf,
    /// dice | meta_gradient | random_flip | targeted | random_rewire | char | word
    #[arg(long)]
    name: String,
    /// Global perturbation rate (dice, meta_gradient, random_flip).
    #[arg(long)]
    rate: Option<f64>,
    /// Flips per target (targeted, random_rewire), 1-5.
    #[arg(long)]
    per_target: Option<usize>,
    /// Text edits per node (char, word).
    #[arg(long)]
    edits_per_node: Option<usize>,
    #[arg(long, default_value_t = 30)]
    top_k: usize,
    #[arg(long, default_value_t = 10)]
    min_degree: usize,
    #[arg(long, default_value_t = 1.0)]
    sample_rate: f64,
    /// Use true labels everywhere instead of the gray-box view (dice).
    #[arg(long, default_value_t = false)]
    oracle_labels: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    embedding: EmbeddingArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// gcn | gat | sage
    #[arg(long, default_value = "gcn")]
    arch: String,
    #[arg(long, default_value_t = 256)]
    hidden: usize,
    #[arg(long, default_value_t = 0.5)]
    dropout: f64,
    #[arg(long, default_value_t = 0.001)]
    lr: f64,
    #[arg(long, default_value_t = 300)]
    epochs: usize,
    #[arg(long, default_value_t = 5e-4)]
    weight_decay: f64,
    #[arg(long, default_value_t = 30)]
    patience: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    embedding: EmbeddingArgs,
    #[command(flatten)]
    split: SplitArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    embedding: EmbeddingArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Optional JSON output path (stdout otherwise).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ApplyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    pset: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PurifyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    quantile: Option<f64>,
    #[command(flatten)]
    embedding: EmbeddingArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CertifyArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    num_samples: usize,
    #[arg(long, default_value_t = 0.4)]
    p_del: f64,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Cap on certified nodes (seeded sample of the test split).
    #[arg(long, default_value_t = 50)]
    max_nodes: usize,
    /// Score CA by the base classifier's clean-graph correctness instead of
    /// the smoothed prediction.
    #[arg(long, default_value_t = false)]
    correct_by_base: bool,
    #[command(flatten)]
    embedding: EmbeddingArgs,
    #[command(flatten)]
    split: SplitArgs,
    /// Output prefix: writes <prefix>.csv and <prefix>.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

fn parse_arch(name: &str, hidden: usize, dropout: f64) -> Result<GnnArch> {
    let kind: GnnKind = name.parse()?;
    let mut arch = GnnArch::new(kind);
    arch.hidden = hidden;
    arch.dropout = dropout;
    arch.validate()?;
    Ok(arch)
}

fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let params = SbmParams {
        num_nodes: args.nodes,
        num_classes: args.classes,
        intra_edge_prob: args.intra,
        inter_edge_prob: args.inter,
        vocab_size: args.vocab,
        words_per_node: args.words,
        class_word_skew: args.skew,
        seed: args.seed,
    };
    let graph = generate_synthetic_tag(&params)?;
    let manifest = save_graph(&graph, &args.out)?;
    println!(
        "generated {} nodes, {} edges, {} classes -> {}",
        manifest.num_nodes,
        manifest.num_edges,
        manifest.num_classes,
        args.out.display()
    );
    Ok(())
}

fn cmd_subset(args: &SubsetArgs) -> Result<()> {
    let (graph, _) = load_graph_dir(&args.data)?;
    let sub = sample_subset(&graph, args.seed_nodes, args.fanout, args.hops, args.seed)?;
    let manifest = save_graph(&sub, &args.out)?;
    println!(
        "subset: {} nodes, {} edges -> {}",
        manifest.num_nodes,
        manifest.num_edges,
        args.out.display()
    );
    Ok(())
}

fn cmd_attack(args: &AttackArgs) -> Result<()> {
    let (graph, _) = load_graph_dir(&args.data)?;
    let split = args.split.build(&graph)?;
    let features = args.embedding.build(&graph)?;
    let mut labeled: Vec<usize> = split.train.iter().chain(split.val.iter()).copied().collect();
    labeled.sort_unstable();

    let need_rate = || {
        args.rate
            .ok_or_else(|| Error::Config(format!("attack {} needs --rate", args.name)))
    };
    let need_per_target = || {
        args.per_target
            .ok_or_else(|| Error::Config(format!("attack {} needs --per-target", args.name)))
    };
    let need_edits = || {
        args.edits_per_node
            .ok_or_else(|| Error::Config(format!("attack {} needs --edits-per-node", args.name)))
    };

    let pset: PerturbationSet = match args.name.as_str() {
        "dice" => {
            let surrogate = train_surrogate(&graph, &features, &labeled)?;
            let view =
                surrogate_label_view(&graph, &split, &surrogate, &features, args.oracle_labels);
            dice_attack(&graph, &view, need_rate()?, args.seed)?
        }
        "meta_gradient" => meta_gradient_attack(
            &graph,
            &features,
            &split,
            need_rate()?,
            args.seed,
            &MetaAttackConfig::default(),
        )?,
        "random_flip" => random_flip_attack(&graph, need_rate()?, args.seed)?,
        "targeted" => {
            let budget = need_per_target()?;
            let targets =
                select_targets(&graph, &split, args.min_degree, args.sample_rate, args.seed)?;
            let surrogate = train_surrogate(&graph, &features, &labeled)?;
            let mut merged = PerturbationSet::new(
                "targeted",
                args.seed,
                attacks::BudgetSpec::per_target(budget),
            );
            for &target in &targets.nodes {
                let single =
                    targeted_gradient_attack(&graph, &features, &surrogate, target, budget)?;
                for flip in single.edge_flips {
                    if !merged.edge_flips.iter().any(|f| f.pair() == flip.pair()) {
                        merged.edge_flips.push(flip);
                    }
                }
                merged.warnings.extend(single.warnings);
            }
            merged
        }
        "random_rewire" => {
            let budget = need_per_target()?;
            let targets =
                select_targets(&graph, &split, args.min_degree, args.sample_rate, args.seed)?;
            let mut merged = PerturbationSet::new(
                "random_rewire",
                args.seed,
                attacks::BudgetSpec::per_target(budget),
            );
            for &target in &targets.nodes {
                let single = random_rewire_attack(
                    &graph,
                    target,
                    budget,
                    args.seed.wrapping_add(target as u64),
                )?;
                for flip in single.edge_flips {
                    if !merged.edge_flips.iter().any(|f| f.pair() == flip.pair()) {
                        merged.edge_flips.push(flip);
                    }
                }
                merged.warnings.extend(single.warnings);
            }
            merged
        }
        "char" | "word" => {
            let edits = need_edits()?;
            let vocab = build_vocab(graph.texts(), args.embedding.max_vocab, args.embedding.min_df)?;
            let clf = train_text_surrogate(
                graph.texts(),
                graph.labels(),
                &labeled,
                &vocab,
                graph.num_classes(),
            )?;
            let anchors: Vec<usize> = labeled.iter().map(|&n| graph.labels()[n]).collect();
            if args.name == "char" {
                char_attack(graph.texts(), &clf, &labeled, &anchors, edits, args.seed)?.pset
            } else {
                word_attack(
                    graph.texts(),
                    &clf,
                    &vocab,
                    &labeled,
                    &anchors,
                    edits,
                    args.top_k,
                    args.seed,
                )?
                .pset
            }
        }
        other => return Err(Error::Config(format!("unknown attack {other:?}"))),
    };
    pset.validate_against(&graph)?;
    std::fs::write(&args.out, pset.to_json())?;
    println!(
        "{}: {} edge flips, {} text edits, hash {} -> {}",
        pset.attack_name,
        pset.edge_flips.len(),
        pset.text_edits.len(),
        pset.content_hash(),
        args.out.display()
    );
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let (graph, _) = load_graph_dir(&args.data)?;
    let split = args.split.build(&graph)?;
    let features = args.embedding.build(&graph)?;
    let arch = parse_arch(&args.arch, args.hidden, args.dropout)?;
    let cfg = TrainConfig {
        learning_rate: args.lr,
        epochs: args.epochs,
        weight_decay: args.weight_decay,
        early_stop_patience: args.patience,
        seed: args.seed,
    };
    let model = train_gnn(&arch, &graph, &features, &split, &cfg)?;
    let test_acc = evaluate_accuracy(&model, &graph, &features, &split.test)? * 100.0;
    save_model(&model, &args.out)?;
    println!(
        "trained {} (seed {}): val acc {:.2}%, test acc {test_acc:.2}% -> {}",
        args.arch,
        args.seed,
        model.final_val_accuracy.unwrap_or(f64::NAN) * 100.0,
        args.out.display()
    );
    Ok(())
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let (graph, _) = load_graph_dir(&args.data)?;
    let split = args.split.build(&graph)?;
    let features = args.embedding.build(&graph)?;
    let model = load_model(&args.model)?;
    let acc = evaluate_accuracy(&model, &graph, &features, &split.test)? * 100.0;
    let labels = graph.labels();
    let k = 10.min(graph.num_nodes().saturating_sub(1)).max(1);
    let clusters = graph.num_classes().max(2);
    let esmi_detail = metrics::esmi_detailed(&features, &graph, clusters, 10, args.split.split_seed).ok();
    let bundle = crate::metrics::MetricBundle {
        acc: Some(acc),
        rda: None,
        dbi: metrics::davies_bouldin(&features, labels).ok(),
        silhouette: metrics::silhouette(&features, labels, 2000, args.split.split_seed).ok(),
        homophily_k: metrics::embedding_homophily(&features, labels, k).ok(),
        elmi: metrics::elmi(&features, labels, clusters, args.split.split_seed).ok(),
        esmi: esmi_detail.map(|(mean, _)| mean),
        ncon: metrics::neighbor_consistency(&features, &graph).ok(),
    };
    let mut value = serde_json::to_value(&bundle)?;
    if let Some((_, per)) = esmi_detail {
        value["esmi_per_property"] = serde_json::json!({
            "degree": per[0],
            "clustering": per[1],
            "pagerank": per[2],
            "avg_neighbor_degree": per[3],
        });
    }
    value["hom_k"] = serde_json::json!(k);
    let body = serde_json::to_string_pretty(&value)?;
    match &args.out {
        Some(path) => std::fs::write(path, body)?,
        None => println!("{body}"),
    }
    Ok(())
}

fn cmd_apply(args: &ApplyArgs) -> Result<()> {
    let (graph, _) = load_graph_dir(&args.data)?;
    let pset = PerturbationSet::from_json(&std::fs::read_to_string(&args.pset)?)?;
    let poisoned = apply_perturbation(&graph, &pset)?;
    let manifest = save_graph(&poisoned, &args.out)?;
    println!(
        "applied {}: {} edges -> {} edges, out {}",
        pset.attack_name,
        graph.num_edges(),
        manifest.num_edges,
        args.out.display()
    );
    Ok(())
}

fn cmd_purify(args: &PurifyArgs) -> Result<()> {
    let (graph, _) = load_graph_dir(&args.data)?;
    let features = args.embedding.build(&graph)?;
    let cfg = match (args.threshold, args.quantile) {
        (Some(threshold), None) => PurifyConfig::FixedThreshold { threshold },
        (None, Some(quantile)) => PurifyConfig::Quantile { quantile },
        (None, None) => PurifyConfig::FixedThreshold { threshold: 0.1 },
        (Some(_), Some(_)) => {
            return Err(Error::Config(
                "--threshold and --quantile are mutually exclusive".into(),
            ))
        }
    };
    let outcome = purify(&graph, &features, &cfg)?;
    let manifest = save_graph(&outcome.graph, &args.out)?;
    println!(
        "purified: removed {} of {} edges -> {}",
        outcome.removed_edges.len(),
        graph.num_edges(),
        manifest.num_edges + outcome.removed_edges.len()
    );
    for warning in outcome.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(())
}

fn cmd_certify(args: &CertifyArgs) -> Result<()> {
    let (graph, _) = load_graph_dir(&args.data)?;
    let split = args.split.build(&graph)?;
    let features = args.embedding.build(&graph)?;
    let model = load_model(&args.model)?;
    let nodes: Vec<usize> = if split.test.len() <= args.max_nodes {
        split.test.clone()
    } else {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut order = split.test.clone();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(args.seed);
        order.shuffle(&mut rng);
        let mut nodes = order[..args.max_nodes].to_vec();
        nodes.sort_unstable();
        nodes
    };
    let cfg = SmoothingConfig {
        p_del: args.p_del,
        num_samples: args.num_samples,
        alpha: args.alpha,
        seed: args.seed,
        correct_by_base: args.correct_by_base,
    };
    let clf = VictimClassifier {
        model: &model,
        features: &features,
    };
    let result = certify_set(&clf, &graph, &nodes, graph.labels(), &cfg)?;

    let mut csv = String::from("node,pred,correct,count,p_lower,radius\n");
    for row in &result.rows {
        csv.push_str(&format!(
            "{},{},{},{},{:.8},{}\n",
            row.node, row.pred, row.correct, row.count, row.p_lower, row.radius
        ));
    }
    std::fs::write(args.out.with_extension("csv"), csv)?;
    let aggregate = serde_json::json!({
        "CA": result.ca,
        "MCR": result.mcr,
        "MCR_certified_only": result.mcr_certified_only,
        "config": result.config,
    });
    std::fs::write(
        args.out.with_extension("json"),
        serde_json::to_string_pretty(&aggregate)?,
    )?;
    println!(
        "certified {} nodes: CA {:.2}%, MCR {:.3}",
        result.rows.len(),
        result.ca,
        result.mcr
    );
    Ok(())
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(&args.config)?)?;
    let report = run_experiment(&cfg)?;
    let out_dir = Path::new(&cfg.output_dir);
    report.emit(out_dir)?;
    println!(
        "{} rows, content hash {} -> {}",
        report.rows.len(),
        report.content_hash(),
        out_dir.display()
    );
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let report = RobustnessReport::from_json(&std::fs::read_to_string(&args.input)?)?;
    report.emit(&args.out_dir)?;
    println!(
        "re-emitted {} rows -> {}",
        report.rows.len(),
        args.out_dir.display()
    );
    Ok(())
}

/// Entry point used by the binary; returns the process exit code.
pub fn run() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Usage and help output; exit 0 for --help/--version, 1 otherwise.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match &cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Subset(args) => cmd_subset(args),
        Command::Attack(args) => cmd_attack(args),
        Command::Train(args) => cmd_train(args),
        Command::Eval(args) => cmd_eval(args),
        Command::Apply(args) => cmd_apply(args),
        Command::Purify(args) => cmd_purify(args),
        Command::Certify(args) => cmd_certify(args),
        Command::Run(args) => cmd_run(args),
        Command::Report(args) => cmd_report(args),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
