//! Shallow node embeddings (bag-of-words, TF-IDF) and ingestion of
//! externally produced embedding matrices.
//!
//! External file format: first line `N=<rows> d=<dim> name=<tag>`, then `N`
//! lines of `d` space-separated decimal floats.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Where an embedding matrix came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Provenance {
    Bow,
    Tfidf,
    External(String),
}

impl fmt::Display for Provenance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Provenance::Bow => write!(f, "bow"),
            Provenance::Tfidf => write!(f, "tfidf"),
            Provenance::External(name) => write!(f, "external:{name}"),
        }
    }
}

/// Dense N x d node feature matrix with provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    data: Array2<f64>,
    provenance: Provenance,
}

impl EmbeddingMatrix {
    pub fn new(data: Array2<f64>, provenance: Provenance) -> Result<Self> {
        for ((row, col), &value) in data.indexed_iter() {
            if !value.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
        }
        Ok(Self { data, provenance })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn data(&self) -> &Array2<f64> {
        &self.data
    }

    pub fn row(&self, i: usize) -> ndarray::ArrayView1<'_, f64> {
        self.data.row(i)
    }

    /// Returns a copy with every nonzero row scaled to unit L2 norm.
    pub fn l2_normalized(&self) -> Self {
        let mut data = self.data.clone();
        for mut row in data.rows_mut() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.mapv_inplace(|v| v / norm);
            }
        }
        Self {
            data,
            provenance: self.provenance.clone(),
        }
    }
}

/// Token-to-column map with a deterministic ordering: descending document
/// frequency, ties broken by lexicographic token order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    /// Tokens in column order (most frequent first).
    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Lowercases and splits on any non-alphanumeric character.
pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// Builds a vocabulary from a corpus: top `max_size` tokens by document
/// frequency, keeping only tokens appearing in at least `min_df` documents.
pub fn build_vocab(texts: &[String], max_size: usize, min_df: usize) -> Result<Vocabulary> {
    if texts.is_empty() {
        return Err(Error::Validation("empty corpus".into()));
    }
    let mut df: HashMap<String, usize> = HashMap::new();
    for text in texts {
        let seen: BTreeSet<String> = tokenize(text).into_iter().collect();
        for token in seen {
            *df.entry(token).or_insert(0) += 1;
        }
    }
    let mut candidates: Vec<(String, usize)> = df
        .into_iter()
        .filter(|&(_, count)| count >= min_df.max(1))
        .collect();
    if candidates.is_empty() {
        return Err(Error::Validation(
            "no token satisfies the document-frequency filter".into(),
        ));
    }
    candidates.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    candidates.truncate(max_size);

    let tokens: Vec<String> = candidates.into_iter().map(|(t, _)| t).collect();
    let index = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    Ok(Vocabulary { tokens, index })
}

fn count_matrix(texts: &[String], vocab: &Vocabulary) -> Array2<f64> {
    let mut data = Array2::zeros((texts.len(), vocab.len()));
    for (row, text) in texts.iter().enumerate() {
        for token in tokenize(text) {
            if let Some(col) = vocab.index_of(&token) {
                data[[row, col]] += 1.0;
            }
        }
    }
    data
}

/// Raw token counts over the vocabulary columns.
pub fn bow_embed(texts: &[String], vocab: &Vocabulary) -> Result<EmbeddingMatrix> {
    if vocab.is_empty() {
        return Err(Error::Validation("empty vocabulary".into()));
    }
    EmbeddingMatrix::new(count_matrix(texts, vocab), Provenance::Bow)
}

/// Smoothed TF-IDF: `tf * (ln((1 + N) / (1 + df)) + 1)` with raw-count tf and
/// document frequencies taken from `texts`, followed by L2 row normalization.
pub fn tfidf_embed(texts: &[String], vocab: &Vocabulary) -> Result<EmbeddingMatrix> {
    if vocab.is_empty() {
        return Err(Error::Validation("empty vocabulary".into()));
    }
    let mut data = count_matrix(texts, vocab);
    let n = texts.len() as f64;
    let mut df = vec![0usize; vocab.len()];
    for text in texts {
        let seen: BTreeSet<usize> = tokenize(text)
            .into_iter()
            .filter_map(|t| vocab.index_of(&t))
            .collect();
        for col in seen {
            df[col] += 1;
        }
    }
    let idf: Vec<f64> = df
        .iter()
        .map(|&d| ((1.0 + n) / (1.0 + d as f64)).ln() + 1.0)
        .collect();
    for mut row in data.rows_mut() {
        for (col, value) in row.iter_mut().enumerate() {
            *value *= idf[col];
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.mapv_inplace(|v| v / norm);
        }
    }
    EmbeddingMatrix::new(data, Provenance::Tfidf)
}

/// Reads an external embedding matrix, validating the row count against the
/// paired graph and rejecting non-finite entries.
pub fn load_embeddings(path: &Path, expected_rows: usize) -> Result<EmbeddingMatrix> {
    let body = fs::read_to_string(path)?;
    let parse = |line: usize, msg: String| Error::Parse {
        path: path.display().to_string(),
        line,
        msg,
    };
    let mut lines = body.lines();
    let header = lines
        .next()
        .ok_or_else(|| parse(1, "empty embedding file".into()))?;
    let mut n = None;
    let mut d = None;
    let mut name = None;
    for field in header.split_whitespace() {
        if let Some(v) = field.strip_prefix("N=") {
            n = v.parse::<usize>().ok();
        } else if let Some(v) = field.strip_prefix("d=") {
            d = v.parse::<usize>().ok();
        } else if let Some(v) = field.strip_prefix("name=") {
            name = Some(v.to_string());
        }
    }
    let (n, d) = match (n, d) {
        (Some(n), Some(d)) => (n, d),
        _ => {
            return Err(parse(
                1,
                format!("expected header `N=<rows> d=<dim> name=<tag>`, got {header:?}"),
            ))
        }
    };
    let name = name.unwrap_or_else(|| "unnamed".to_string());
    if n != expected_rows {
        return Err(Error::Shape(format!(
            "embedding file declares {n} rows, expected {expected_rows}"
        )));
    }

    let mut data = Array2::zeros((n, d));
    let mut row = 0usize;
    for (idx, raw) in lines.enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if row >= n {
            return Err(Error::Shape(format!(
                "embedding file has more than {n} data rows"
            )));
        }
        let values: Vec<&str> = line.split_whitespace().collect();
        if values.len() != d {
            return Err(parse(
                idx + 2,
                format!("expected {d} values, got {}", values.len()),
            ));
        }
        for (col, value) in values.iter().enumerate() {
            let v: f64 = value
                .parse()
                .map_err(|_| parse(idx + 2, format!("bad float {value:?}")))?;
            if !v.is_finite() {
                return Err(Error::NonFinite { row, col });
            }
            data[[row, col]] = v;
        }
        row += 1;
    }
    if row != n {
        return Err(Error::Shape(format!(
            "embedding file has {row} data rows, header declares {n}"
        )));
    }
    EmbeddingMatrix::new(data, Provenance::External(name))
}

/// Writes an embedding matrix in the external text format.
pub fn save_embeddings(emb: &EmbeddingMatrix, path: &Path, name: &str) -> Result<()> {
    let mut body = format!("N={} d={} name={}\n", emb.rows(), emb.dim(), name);
    for row in emb.data().rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        body.push_str(&line.join(" "));
        body.push('\n');
    }
    fs::write(path, body)?;
    Ok(())
}
