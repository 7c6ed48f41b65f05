//! Experiment orchestration: configuration, the four-phase pipeline
//! (prepare, poison, train, evaluate/defend/certify), and report emission.

mod report;
mod runner;

pub use report::{ReportRow, RobustnessReport};
pub use runner::run_experiment;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tagraph::SbmParams;
use crate::victims::GnnKind;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Synthetic { params: SbmParams },
    Files {
        edges: String,
        texts: String,
        labels: String,
    },
    Dir { path: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSpec {
    pub seed_nodes: usize,
    pub fanout: usize,
    pub hops: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.1,
            val_frac: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingSpec {
    Bow {
        max_size: usize,
        min_df: usize,
    },
    Tfidf {
        max_size: usize,
        min_df: usize,
    },
    External {
        path: String,
        #[serde(default)]
        normalize: bool,
    },
}

impl EmbeddingSpec {
    pub fn label(&self) -> String {
        match self {
            EmbeddingSpec::Bow { .. } => "bow".into(),
            EmbeddingSpec::Tfidf { .. } => "tfidf".into(),
            EmbeddingSpec::External { path, .. } => format!("external:{path}"),
        }
    }

    pub fn is_text_derived(&self) -> bool {
        !matches!(self, EmbeddingSpec::External { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VictimSpec {
    pub arch: GnnKind,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub hidden: Option<usize>,
    #[serde(default)]
    pub dropout: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSpec {
    pub learning_rate: f64,
    pub epochs: usize,
    pub weight_decay: f64,
    pub early_stop_patience: usize,
}

impl Default for TrainSpec {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            epochs: 300,
            weight_decay: 5e-4,
            early_stop_patience: 30,
        }
    }
}

fn default_min_degree() -> usize {
    10
}

fn default_sample_rate() -> f64 {
    1.0
}

fn default_top_k() -> usize {
    30
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum AttackSpec {
    Dice {
        rate: f64,
        seeds: Vec<u64>,
        #[serde(default)]
        oracle_labels: bool,
    },
    MetaGradient {
        rate: f64,
        seeds: Vec<u64>,
        #[serde(default)]
        inner_steps: Option<usize>,
        #[serde(default)]
        inner_lr: Option<f64>,
    },
    RandomFlip {
        rate: f64,
        seeds: Vec<u64>,
    },
    Targeted {
        per_target_budget: usize,
        seeds: Vec<u64>,
        #[serde(default = "default_min_degree")]
        min_degree: usize,
        #[serde(default = "default_sample_rate")]
        sample_rate: f64,
    },
    RandomRewire {
        per_target_budget: usize,
        seeds: Vec<u64>,
        #[serde(default = "default_min_degree")]
        min_degree: usize,
        #[serde(default = "default_sample_rate")]
        sample_rate: f64,
    },
    Char {
        edits_per_node: usize,
        seeds: Vec<u64>,
    },
    Word {
        edits_per_node: usize,
        seeds: Vec<u64>,
        #[serde(default = "default_top_k")]
        top_k: usize,
    },
    Combined {
        structural: Box<AttackSpec>,
        textual: Box<AttackSpec>,
        seeds: Vec<u64>,
    },
}

impl AttackSpec {
    pub fn name(&self) -> String {
        match self {
            AttackSpec::Dice { .. } => "dice".into(),
            AttackSpec::MetaGradient { .. } => "meta_gradient".into(),
            AttackSpec::RandomFlip { .. } => "random_flip".into(),
            AttackSpec::Targeted { .. } => "targeted".into(),
            AttackSpec::RandomRewire { .. } => "random_rewire".into(),
            AttackSpec::Char { .. } => "char".into(),
            AttackSpec::Word { .. } => "word".into(),
            AttackSpec::Combined {
                structural, textual, ..
            } => format!("combined({}+{})", structural.name(), textual.name()),
        }
    }

    pub fn seeds(&self) -> &[u64] {
        match self {
            AttackSpec::Dice { seeds, .. }
            | AttackSpec::MetaGradient { seeds, .. }
            | AttackSpec::RandomFlip { seeds, .. }
            | AttackSpec::Targeted { seeds, .. }
            | AttackSpec::RandomRewire { seeds, .. }
            | AttackSpec::Char { seeds, .. }
            | AttackSpec::Word { seeds, .. }
            | AttackSpec::Combined { seeds, .. } => seeds,
        }
    }

    /// Budget column value for the report.
    pub fn budget_label(&self) -> String {
        match self {
            AttackSpec::Dice { rate, .. }
            | AttackSpec::MetaGradient { rate, .. }
            | AttackSpec::RandomFlip { rate, .. } => format!("{rate}"),
            AttackSpec::Targeted {
                per_target_budget, ..
            }
            | AttackSpec::RandomRewire {
                per_target_budget, ..
            } => format!("{per_target_budget}"),
            AttackSpec::Char { edits_per_node, .. } | AttackSpec::Word { edits_per_node, .. } => {
                format!("t{edits_per_node}")
            }
            AttackSpec::Combined {
                structural, textual, ..
            } => format!("{}+{}", structural.budget_label(), textual.budget_label()),
        }
    }

    pub fn is_structural(&self) -> bool {
        matches!(
            self,
            AttackSpec::Dice { .. }
                | AttackSpec::MetaGradient { .. }
                | AttackSpec::RandomFlip { .. }
                | AttackSpec::Targeted { .. }
                | AttackSpec::RandomRewire { .. }
        )
    }

    pub fn is_textual(&self) -> bool {
        matches!(self, AttackSpec::Char { .. } | AttackSpec::Word { .. })
    }

    pub fn is_targeted(&self) -> bool {
        matches!(
            self,
            AttackSpec::Targeted { .. } | AttackSpec::RandomRewire { .. }
        )
    }

    /// Global structural rate, when this spec has one (for budget-matched
    /// purification).
    pub fn global_rate(&self) -> Option<f64> {
        match self {
            AttackSpec::Dice { rate, .. }
            | AttackSpec::MetaGradient { rate, .. }
            | AttackSpec::RandomFlip { rate, .. } => Some(*rate),
            AttackSpec::Combined { structural, .. } => structural.global_rate(),
            _ => None,
        }
    }

    fn collect_problems(&self, problems: &mut Vec<String>) {
        let name = self.name();
        if self.seeds().is_empty() {
            problems.push(format!("attack {name}: empty seed list"));
        }
        match self {
            AttackSpec::Dice { rate, .. }
            | AttackSpec::MetaGradient { rate, .. }
            | AttackSpec::RandomFlip { rate, .. } => {
                if !(0.0..=1.0).contains(rate) {
                    problems.push(format!("attack {name}: rate {rate} outside [0, 1]"));
                }
            }
            AttackSpec::Targeted {
                per_target_budget,
                sample_rate,
                ..
            }
            | AttackSpec::RandomRewire {
                per_target_budget,
                sample_rate,
                ..
            } => {
                if !(1..=5).contains(per_target_budget) {
                    problems.push(format!(
                        "attack {name}: per-target budget {per_target_budget} outside [1, 5]"
                    ));
                }
                if !(0.0..=1.0).contains(sample_rate) {
                    problems.push(format!(
                        "attack {name}: sample_rate {sample_rate} outside [0, 1]"
                    ));
                }
            }
            AttackSpec::Char { .. } | AttackSpec::Word { .. } => {}
            AttackSpec::Combined {
                structural, textual, ..
            } => {
                if !structural.is_structural() {
                    problems.push(format!(
                        "attack {name}: combined structural leg is {}",
                        structural.name()
                    ));
                }
                if !textual.is_textual() {
                    problems.push(format!(
                        "attack {name}: combined textual leg is {}",
                        textual.name()
                    ));
                }
                structural.collect_problems(problems);
                textual.collect_problems(problems);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum DefenseSpec {
    /// Quantile purification matched to the attack's structural rate when it
    /// has one, else a fixed cosine threshold of 0.1.
    Auto,
    FixedThreshold { threshold: f64 },
    Quantile { quantile: f64 },
}

impl DefenseSpec {
    pub fn resolve(&self, attack_rate: Option<f64>) -> crate::defend::PurifyConfig {
        match self {
            DefenseSpec::Auto => match attack_rate {
                Some(rate) if rate > 0.0 && rate < 1.0 => {
                    crate::defend::PurifyConfig::Quantile { quantile: rate }
                }
                _ => crate::defend::PurifyConfig::FixedThreshold { threshold: 0.1 },
            },
            DefenseSpec::FixedThreshold { threshold } => {
                crate::defend::PurifyConfig::FixedThreshold {
                    threshold: *threshold,
                }
            }
            DefenseSpec::Quantile { quantile } => crate::defend::PurifyConfig::Quantile {
                quantile: *quantile,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertSpec {
    pub num_samples: usize,
    pub p_del: f64,
    pub alpha: f64,
    pub seed: u64,
    /// Cap on the number of evaluated nodes (seeded subsample of the row's
    /// evaluation set).
    pub max_nodes: usize,
}

impl Default for CertSpec {
    fn default() -> Self {
        Self {
            num_samples: 10_000,
            p_del: 0.4,
            alpha: 0.05,
            seed: 0,
            max_nodes: 50,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub subset: Option<SubsetSpec>,
    #[serde(default)]
    pub split: SplitSpec,
    pub embedding: EmbeddingSpec,
    pub victims: Vec<VictimSpec>,
    #[serde(default)]
    pub train: TrainSpec,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
    #[serde(default)]
    pub defense: Option<DefenseSpec>,
    #[serde(default)]
    pub certification: Option<CertSpec>,
    pub output_dir: String,
}

impl ExperimentConfig {
    /// Validation reports every violation at once.
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        match &self.dataset {
            DatasetSpec::Synthetic { params } => {
                if let Err(e) = params.validate() {
                    problems.push(format!("dataset: {e}"));
                }
            }
            DatasetSpec::Files {
                edges,
                texts,
                labels,
            } => {
                for path in [edges, texts, labels] {
                    if !Path::new(path).exists() {
                        problems.push(format!("dataset file {path} does not exist"));
                    }
                }
            }
            DatasetSpec::Dir { path } => {
                if !Path::new(path).is_dir() {
                    problems.push(format!("dataset directory {path} does not exist"));
                }
            }
        }
        if let EmbeddingSpec::External { path, .. } = &self.embedding {
            if !Path::new(path).exists() {
                problems.push(format!("embedding file {path} does not exist"));
            }
        }
        if self.split.train_frac + self.split.val_frac >= 1.0 {
            problems.push("split fractions must sum below 1".into());
        }
        if self.victims.is_empty() {
            problems.push("at least one victim is required".into());
        }
        for victim in &self.victims {
            if victim.seeds.is_empty() {
                problems.push(format!("victim {}: empty seed list", victim.arch));
            }
        }
        if self.train.learning_rate <= 0.0 {
            problems.push("learning_rate must be positive".into());
        }
        if self.train.epochs == 0 {
            problems.push("epochs must be at least 1".into());
        }
        for attack in &self.attacks {
            attack.collect_problems(&mut problems);
            if (attack.is_textual()
                || matches!(attack, AttackSpec::Combined { .. }))
                && !self.embedding.is_text_derived()
            {
                problems.push(format!(
                    "attack {}: textual attacks need a text-derived embedding (bow or tfidf)",
                    attack.name()
                ));
            }
        }
        if let Some(cert) = &self.certification {
            if cert.num_samples < 100 {
                problems.push("certification num_samples must be at least 100".into());
            }
            if !(0.0..1.0).contains(&cert.p_del) || cert.p_del == 0.0 {
                problems.push(format!("certification p_del {} outside (0, 1)", cert.p_del));
            }
            if cert.max_nodes == 0 {
                problems.push("certification max_nodes must be positive".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(problems.join("; ")))
        }
    }
}
