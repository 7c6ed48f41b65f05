//! Robustness report: rows, CSV/JSON emission, plot hooks, content hashing.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::ExperimentConfig;
use crate::error::Result;
use crate::metrics::MetricBundle;

pub const CSV_HEADER: &str =
    "dataset,embedding,arch,attack,budget,seed,acc_clean,acc_attack,rda,dbi,sil,hom,elmi,esmi,ncon,ca,mcr,wall_ms";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ReportRow {
    pub dataset: String,
    pub embedding: String,
    pub arch: String,
    pub attack: String,
    pub budget: String,
    pub seed: u64,
    pub acc_clean: Option<f64>,
    pub acc_attack: Option<f64>,
    pub rda: Option<f64>,
    pub metrics: MetricBundle,
    pub ca: Option<f64>,
    pub mcr: Option<f64>,
    pub wall_ms: u64,
    /// Content hash of the perturbation set behind this row, when any.
    pub pset_hash: Option<String>,
    /// Recorded failure; numeric fields are absent when set.
    pub error: Option<String>,
}

fn cell(v: Option<f64>) -> String {
    match v {
        Some(v) => format!("{v:.6}"),
        None => String::new(),
    }
}

impl ReportRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.dataset,
            self.embedding,
            self.arch,
            self.attack,
            self.budget,
            self.seed,
            cell(self.acc_clean),
            cell(self.acc_attack),
            cell(self.rda),
            cell(self.metrics.dbi),
            cell(self.metrics.silhouette),
            cell(self.metrics.homophily_k),
            cell(self.metrics.elmi),
            cell(self.metrics.esmi),
            cell(self.metrics.ncon),
            cell(self.ca),
            cell(self.mcr),
            self.wall_ms
        )
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RobustnessReport {
    pub config: ExperimentConfig,
    pub rows: Vec<ReportRow>,
}

impl RobustnessReport {
    /// SHA-256 over the config and rows with wall-clock zeroed, so reruns of
    /// an identical config hash identically.
    pub fn content_hash(&self) -> String {
        let mut clone = self.clone();
        for row in &mut clone.rows {
            row.wall_ms = 0;
        }
        let body = serde_json::to_string(&clone).expect("report serializes");
        let mut hasher = Sha256::new();
        hasher.update(body.as_bytes());
        format!("{:x}", hasher.finalize())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv_line());
            out.push('\n');
        }
        out
    }

    pub fn to_json(&self) -> String {
        let mut value = serde_json::to_value(self).expect("report serializes");
        value["content_hash"] = serde_json::Value::String(self.content_hash());
        serde_json::to_string_pretty(&value).expect("json value serializes")
    }

    pub fn from_json(body: &str) -> Result<Self> {
        let mut value: serde_json::Value = serde_json::from_str(body)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("content_hash");
        }
        Ok(serde_json::from_value(value)?)
    }

    /// Writes report.csv, report.json and the plots/ directory of 2-column
    /// CSVs (budget vs mean ACC, budget vs mean RDA per arch and attack).
    pub fn emit(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join("report.csv"), self.to_csv())?;
        fs::write(dir.join("report.json"), self.to_json())?;

        let plots = dir.join("plots");
        fs::create_dir_all(&plots)?;
        // (arch, attack) -> budget -> (acc values, rda values)
        type BudgetSeries = BTreeMap<String, (Vec<f64>, Vec<f64>)>;
        let mut groups: BTreeMap<(String, String), BudgetSeries> = BTreeMap::new();
        for row in &self.rows {
            if row.error.is_some() || row.attack == "clean" {
                continue;
            }
            let slot = groups
                .entry((row.arch.clone(), row.attack.clone()))
                .or_default()
                .entry(row.budget.clone())
                .or_default();
            if let Some(acc) = row.acc_attack {
                slot.0.push(acc);
            }
            if let Some(rda) = row.rda {
                slot.1.push(rda);
            }
        }
        let sanitize = |s: &str| -> String {
            s.chars()
                .map(|c| if c.is_alphanumeric() { c } else { '_' })
                .collect()
        };
        for ((arch, attack), budgets) in groups {
            let mut acc_body = String::from("budget,acc\n");
            let mut rda_body = String::from("budget,rda\n");
            for (budget, (accs, rdas)) in budgets {
                if !accs.is_empty() {
                    let mean = accs.iter().sum::<f64>() / accs.len() as f64;
                    acc_body.push_str(&format!("{budget},{mean:.6}\n"));
                }
                if !rdas.is_empty() {
                    let mean = rdas.iter().sum::<f64>() / rdas.len() as f64;
                    rda_body.push_str(&format!("{budget},{mean:.6}\n"));
                }
            }
            let stem = format!("{}_{}", sanitize(&arch), sanitize(&attack));
            fs::write(plots.join(format!("acc_vs_budget_{stem}.csv")), acc_body)?;
            fs::write(plots.join(format!("rda_vs_budget_{stem}.csv")), rda_body)?;
        }
        Ok(())
    }
}
