//! Plain-text graph file formats.
//!
//! - Edge file: one `u<TAB>v` pair per line, 0-based ids, `#` starts a comment.
//! - Text file: one line per node in id order; literal tab, newline, carriage
//!   return and backslash are escaped as `\t`, `\n`, `\r`, `\\`.
//! - Label file: header `C=<num_classes>`, then one integer per line.
//! - `save_graph` writes the three files plus a JSON manifest with counts and
//!   a SHA-256 checksum over the file bytes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{LoadReport, TextAttributedGraph};
use crate::error::{Error, Result};

pub const EDGE_FILE: &str = "edges.tsv";
pub const TEXT_FILE: &str = "texts.txt";
pub const LABEL_FILE: &str = "labels.txt";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GraphManifest {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub num_classes: usize,
    /// SHA-256 over the bytes of the edge, text and label files, in that order.
    pub checksum: String,
    pub load_report: LoadReport,
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn escape_text(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            other => out.push(other),
        }
    }
    out
}

fn unescape_text(line: &str, path: &Path, line_no: usize) -> Result<String> {
    let mut out = String::with_capacity(line.len());
    let mut chars = line.chars();
    while let Some(ch) = chars.next() {
        if ch != '\\' {
            out.push(ch);
            continue;
        }
        match chars.next() {
            Some('\\') => out.push('\\'),
            Some('t') => out.push('\t'),
            Some('n') => out.push('\n'),
            Some('r') => out.push('\r'),
            Some(other) => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("unknown escape sequence \\{other}"),
                ))
            }
            None => return Err(parse_err(path, line_no, "dangling backslash")),
        }
    }
    Ok(out)
}

fn read_edge_file(path: &Path) -> Result<Vec<(usize, usize)>> {
    let body = fs::read_to_string(path)?;
    let mut edges = Vec::new();
    for (idx, raw) in body.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(parse_err(
                    path,
                    line_no,
                    format!("expected two node ids, got {line:?}"),
                ))
            }
        };
        let a: usize = a
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad node id {a:?}")))?;
        let b: usize = b
            .parse()
            .map_err(|_| parse_err(path, line_no, format!("bad node id {b:?}")))?;
        edges.push((a, b));
    }
    Ok(edges)
}

fn read_text_file(path: &Path) -> Result<Vec<String>> {
    let body = fs::read_to_string(path)?;
    body.lines()
        .enumerate()
        .map(|(idx, line)| unescape_text(line, path, idx + 1))
        .collect()
}

fn read_label_file(path: &Path) -> Result<(usize, Vec<usize>)> {
    let body = fs::read_to_string(path)?;
    let mut lines = body.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty label file"))?;
    let num_classes: usize = header
        .trim()
        .strip_prefix("C=")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| parse_err(path, 1, format!("expected header C=<count>, got {header:?}")))?;
    let mut labels = Vec::new();
    for (idx, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let label: usize = line
            .parse()
            .map_err(|_| parse_err(path, idx + 1, format!("bad label {line:?}")))?;
        labels.push(label);
    }
    Ok((num_classes, labels))
}

/// Loads and validates a graph from its three component files.
pub fn load_graph(
    edge_path: &Path,
    text_path: &Path,
    label_path: &Path,
) -> Result<(TextAttributedGraph, LoadReport)> {
    let edges = read_edge_file(edge_path)?;
    let texts = read_text_file(text_path)?;
    let (num_classes, labels) = read_label_file(label_path)?;
    let num_nodes = texts.len();
    if labels.len() != num_nodes {
        return Err(Error::Validation(format!(
            "{} texts but {} labels",
            num_nodes,
            labels.len()
        )));
    }
    TextAttributedGraph::new_with_report(num_nodes, &edges, texts, labels, num_classes)
}

/// Convenience: loads the standard file names from a directory.
pub fn load_graph_dir(dir: &Path) -> Result<(TextAttributedGraph, LoadReport)> {
    load_graph(
        &dir.join(EDGE_FILE),
        &dir.join(TEXT_FILE),
        &dir.join(LABEL_FILE),
    )
}

/// Writes the three component files plus `manifest.json` into `dir`.
pub fn save_graph(graph: &TextAttributedGraph, dir: &Path) -> Result<GraphManifest> {
    fs::create_dir_all(dir)?;

    let mut edge_body = String::new();
    for &(u, v) in graph.edges() {
        edge_body.push_str(&format!("{u}\t{v}\n"));
    }
    let mut text_body = String::new();
    for text in graph.texts() {
        text_body.push_str(&escape_text(text));
        text_body.push('\n');
    }
    let mut label_body = format!("C={}\n", graph.num_classes());
    for &label in graph.labels() {
        label_body.push_str(&format!("{label}\n"));
    }

    let mut hasher = Sha256::new();
    hasher.update(edge_body.as_bytes());
    hasher.update(text_body.as_bytes());
    hasher.update(label_body.as_bytes());
    let checksum = format!("{:x}", hasher.finalize());

    fs::write(dir.join(EDGE_FILE), edge_body)?;
    fs::write(dir.join(TEXT_FILE), text_body)?;
    fs::write(dir.join(LABEL_FILE), label_body)?;

    let manifest = GraphManifest {
        num_nodes: graph.num_nodes(),
        num_edges: graph.num_edges(),
        num_classes: graph.num_classes(),
        checksum,
        load_report: LoadReport::default(),
    };
    fs::write(
        dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}
