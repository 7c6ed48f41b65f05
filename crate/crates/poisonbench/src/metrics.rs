//! Robustness and embedding-quality metrics.
//!
//! Everything here is computed in f64 over immutable inputs. Percentages are
//! reported on a 0..100 scale; normalized mutual informations are also
//! multiplied by 100 to share that convention.

use ndarray::Array1;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::embed::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::tagraph::TextAttributedGraph;

/// One measurement bundle. Optional entries are absent when the pipeline did
/// not compute them for a row.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct MetricBundle {
    pub acc: Option<f64>,
    pub rda: Option<f64>,
    pub dbi: Option<f64>,
    pub silhouette: Option<f64>,
    pub homophily_k: Option<f64>,
    pub elmi: Option<f64>,
    pub esmi: Option<f64>,
    pub ncon: Option<f64>,
}

/// Relative drop in accuracy, in percent of the clean accuracy:
/// `100 * (acc_clean - acc_attack) / acc_clean`. Inputs are percentages.
/// Negative values mean the attack helped.
pub fn rda(acc_clean: f64, acc_attack: f64) -> Result<f64> {
    if acc_clean <= 0.0 {
        return Err(Error::Validation(
            "RDA is undefined for non-positive clean accuracy".into(),
        ));
    }
    Ok(100.0 * (acc_clean - acc_attack) / acc_clean)
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn rows_of(emb: &EmbeddingMatrix) -> Vec<Vec<f64>> {
    emb.data().rows().into_iter().map(|r| r.to_vec()).collect()
}

fn class_members(labels: &[usize], num_classes: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); num_classes];
    for (i, &l) in labels.iter().enumerate() {
        members[l].push(i);
    }
    members
}

/// Davies-Bouldin index with Euclidean centroid dispersion. Lower is better.
pub fn davies_bouldin(emb: &EmbeddingMatrix, labels: &[usize]) -> Result<f64> {
    if emb.rows() != labels.len() {
        return Err(Error::Shape("labels do not match embedding rows".into()));
    }
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let members = class_members(labels, num_classes);
    let present: Vec<&Vec<usize>> = members.iter().filter(|m| !m.is_empty()).collect();
    if present.len() < 2 {
        return Err(Error::Validation(
            "Davies-Bouldin needs at least two non-empty classes".into(),
        ));
    }
    let rows = rows_of(emb);
    let d = emb.dim();

    let mut centroids = Vec::with_capacity(present.len());
    let mut dispersion = Vec::with_capacity(present.len());
    for m in &present {
        let mut centroid = vec![0.0; d];
        for &i in m.iter() {
            for (c, v) in centroid.iter_mut().zip(rows[i].iter()) {
                *c += v;
            }
        }
        for c in centroid.iter_mut() {
            *c /= m.len() as f64;
        }
        let s = m.iter().map(|&i| euclidean(&rows[i], &centroid)).sum::<f64>() / m.len() as f64;
        centroids.push(centroid);
        dispersion.push(s);
    }

    let k = present.len();
    let mut total = 0.0;
    for i in 0..k {
        let mut worst = f64::NEG_INFINITY;
        for j in 0..k {
            if i == j {
                continue;
            }
            let sep = euclidean(&centroids[i], &centroids[j]);
            let ratio = if sep > 0.0 {
                (dispersion[i] + dispersion[j]) / sep
            } else {
                f64::INFINITY
            };
            worst = worst.max(ratio);
        }
        total += worst;
    }
    Ok(total / k as f64)
}

/// Mean silhouette score x100 in [-100, 100]. When the input exceeds
/// `sample_cap` points, a seeded subsample of that size is scored instead
/// (both the evaluated points and the reference sets are restricted to it).
pub fn silhouette(
    emb: &EmbeddingMatrix,
    labels: &[usize],
    sample_cap: usize,
    seed: u64,
) -> Result<f64> {
    if emb.rows() != labels.len() {
        return Err(Error::Shape("labels do not match embedding rows".into()));
    }
    let n = emb.rows();
    let distinct = {
        let mut seen = std::collections::BTreeSet::new();
        for &l in labels {
            seen.insert(l);
        }
        seen.len()
    };
    if distinct < 2 {
        return Err(Error::Validation(
            "silhouette needs at least two classes".into(),
        ));
    }

    let chosen: Vec<usize> = if n <= sample_cap {
        (0..n).collect()
    } else {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        order.shuffle(&mut rng);
        let mut chosen = order[..sample_cap].to_vec();
        chosen.sort_unstable();
        chosen
    };

    let rows = rows_of(emb);
    let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let sub_labels: Vec<usize> = chosen.iter().map(|&i| labels[i]).collect();
    let members = class_members(&sub_labels, num_classes);

    let mut total = 0.0;
    for (pos, &i) in chosen.iter().enumerate() {
        let own = &members[sub_labels[pos]];
        if own.len() <= 1 {
            continue; // singleton silhouette is defined as 0
        }
        let a = own
            .iter()
            .filter(|&&q| q != pos)
            .map(|&q| euclidean(&rows[i], &rows[chosen[q]]))
            .sum::<f64>()
            / (own.len() - 1) as f64;
        let mut b = f64::INFINITY;
        for (class, m) in members.iter().enumerate() {
            if class == sub_labels[pos] || m.is_empty() {
                continue;
            }
            let mean = m
                .iter()
                .map(|&q| euclidean(&rows[i], &rows[chosen[q]]))
                .sum::<f64>()
                / m.len() as f64;
            b = b.min(mean);
        }
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(100.0 * total / chosen.len() as f64)
}

/// Embedding homophily x100: the share of each node's k-nearest embedding
/// neighbors (Euclidean, self excluded, ties broken by node id) that carry
/// the node's label.
pub fn embedding_homophily(emb: &EmbeddingMatrix, labels: &[usize], k: usize) -> Result<f64> {
    let n = emb.rows();
    if labels.len() != n {
        return Err(Error::Shape("labels do not match embedding rows".into()));
    }
    if k == 0 || k >= n {
        return Err(Error::Validation(format!(
            "neighbor count k={k} must lie in [1, {})",
            n
        )));
    }
    let rows = rows_of(emb);
    let mut matches = 0usize;
    for i in 0..n {
        let mut dist: Vec<(f64, usize)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| (euclidean(&rows[i], &rows[j]), j))
            .collect();
        dist.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        matches += dist[..k].iter().filter(|&&(_, j)| labels[j] == labels[i]).count();
    }
    Ok(100.0 * matches as f64 / (n * k) as f64)
}

/// Seeded k-means (k-means++ initialization, Lloyd iterations) used to
/// discretize embeddings for the mutual-information metrics. Returns the
/// cell assignment per row.
pub fn kmeans_cells(emb: &EmbeddingMatrix, k: usize, seed: u64) -> Result<Vec<usize>> {
    let n = emb.rows();
    if k == 0 || n == 0 {
        return Err(Error::Validation("k-means needs k >= 1 and data".into()));
    }
    let rows = rows_of(emb);
    let k = k.min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    // k-means++ seeding.
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(k);
    let first = rand::Rng::gen_range(&mut rng, 0..n);
    centers.push(rows[first].clone());
    let mut d2: Vec<f64> = rows
        .iter()
        .map(|r| euclidean(r, &centers[0]).powi(2))
        .collect();
    while centers.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // All remaining points coincide with a center; pick the first
            // index deterministically.
            (0..n).find(|&i| d2[i] > 0.0).unwrap_or(0)
        } else {
            let mut target = rand::Rng::gen_range(&mut rng, 0.0..total);
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if target < w {
                    pick = i;
                    break;
                }
                target -= w;
            }
            pick
        };
        centers.push(rows[next].clone());
        for (i, row) in rows.iter().enumerate() {
            d2[i] = d2[i].min(euclidean(row, centers.last().unwrap()).powi(2));
        }
    }

    let mut assign = vec![0usize; n];
    for _ in 0..100 {
        let mut changed = false;
        for (i, row) in rows.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = euclidean(row, center);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            if assign[i] != best {
                assign[i] = best;
                changed = true;
            }
        }
        let d = emb.dim();
        for (c, center) in centers.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| assign[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            let mut mean = vec![0.0; d];
            for &i in &members {
                for (m, v) in mean.iter_mut().zip(rows[i].iter()) {
                    *m += v;
                }
            }
            for m in mean.iter_mut() {
                *m /= members.len() as f64;
            }
            *center = mean;
        }
        if !changed {
            break;
        }
    }
    Ok(assign)
}

/// Discrete mutual information of a joint assignment, in nats, normalized by
/// `min(H(a), H(b))`. Returns 0 when either marginal is constant.
pub fn normalized_mutual_information(a: &[usize], b: &[usize]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let ka = a.iter().max().unwrap() + 1;
    let kb = b.iter().max().unwrap() + 1;
    let mut joint = vec![vec![0usize; kb]; ka];
    let mut ma = vec![0usize; ka];
    let mut mb = vec![0usize; kb];
    for (&x, &y) in a.iter().zip(b.iter()) {
        joint[x][y] += 1;
        ma[x] += 1;
        mb[y] += 1;
    }
    let nf = n as f64;
    let entropy = |counts: &[usize]| -> f64 {
        counts
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / nf;
                -p * p.ln()
            })
            .sum()
    };
    let ha = entropy(&ma);
    let hb = entropy(&mb);
    if ha <= 0.0 || hb <= 0.0 {
        return 0.0;
    }
    let mut mi = 0.0;
    for (x, row) in joint.iter().enumerate() {
        for (y, &c) in row.iter().enumerate() {
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / nf;
            let px = ma[x] as f64 / nf;
            let py = mb[y] as f64 / nf;
            mi += pxy * (pxy / (px * py)).ln();
        }
    }
    (mi / ha.min(hb)).clamp(0.0, 1.0)
}

/// Embedding-label mutual information x100: embeddings are discretized into
/// `num_clusters` cells by seeded k-means, then discrete normalized MI with
/// the labels is computed.
pub fn elmi(
    emb: &EmbeddingMatrix,
    labels: &[usize],
    num_clusters: usize,
    seed: u64,
) -> Result<f64> {
    if num_clusters < 2 {
        return Err(Error::Validation("num_clusters must be at least 2".into()));
    }
    if labels.len() != emb.rows() {
        return Err(Error::Shape("labels do not match embedding rows".into()));
    }
    let cells = kmeans_cells(emb, num_clusters, seed)?;
    Ok(100.0 * normalized_mutual_information(&cells, labels))
}

/// Per-node structural properties of a graph.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StructuralProps {
    pub degree: Vec<usize>,
    pub clustering: Vec<f64>,
    pub pagerank: Vec<f64>,
    pub avg_neighbor_degree: Vec<f64>,
}

/// Degree, local clustering coefficient, PageRank (damping 0.85, power
/// iteration to 1e-10 with dangling-mass redistribution) and average
/// neighbor degree.
pub fn structural_properties(graph: &TextAttributedGraph) -> StructuralProps {
    let n = graph.num_nodes();
    let degree: Vec<usize> = (0..n).map(|i| graph.degree(i)).collect();

    let clustering: Vec<f64> = (0..n)
        .map(|i| {
            let neigh = graph.neighbors(i);
            let d = neigh.len();
            if d < 2 {
                return 0.0;
            }
            let mut triangles = 0usize;
            for (a_idx, &a) in neigh.iter().enumerate() {
                for &b in &neigh[a_idx + 1..] {
                    if graph.has_edge(a, b) {
                        triangles += 1;
                    }
                }
            }
            2.0 * triangles as f64 / (d * (d - 1)) as f64
        })
        .collect();

    let damping = 0.85;
    let mut pr = vec![1.0 / n as f64; n];
    loop {
        let mut next = vec![(1.0 - damping) / n as f64; n];
        let mut dangling = 0.0;
        for i in 0..n {
            if degree[i] == 0 {
                dangling += pr[i];
                continue;
            }
            let share = damping * pr[i] / degree[i] as f64;
            for &j in graph.neighbors(i) {
                next[j] += share;
            }
        }
        let dangling_share = damping * dangling / n as f64;
        for v in next.iter_mut() {
            *v += dangling_share;
        }
        let delta: f64 = pr.iter().zip(next.iter()).map(|(a, b)| (a - b).abs()).sum();
        pr = next;
        if delta < 1e-10 {
            break;
        }
    }

    let avg_neighbor_degree: Vec<f64> = (0..n)
        .map(|i| {
            let neigh = graph.neighbors(i);
            if neigh.is_empty() {
                0.0
            } else {
                neigh.iter().map(|&j| degree[j] as f64).sum::<f64>() / neigh.len() as f64
            }
        })
        .collect();

    StructuralProps {
        degree,
        clustering,
        pagerank: pr,
        avg_neighbor_degree,
    }
}

/// Quantile binning into at most `bins` cells. Constant inputs land in one
/// cell (the caller treats the resulting MI as 0).
pub fn quantile_bins(values: &[f64], bins: usize) -> Vec<usize> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    // Upper-inclusive boundaries: bin b-1 ends at sorted[b*n/bins - 1], so
    // runs of equal values never straddle a boundary.
    let mut edges: Vec<f64> = (1..bins)
        .map(|b| sorted[((b * n) / bins).saturating_sub(1).min(n - 1)])
        .collect();
    edges.dedup();
    values
        .iter()
        .map(|&v| edges.iter().take_while(|&&e| v > e).count())
        .collect()
}

/// Per-property and mean embedding-structural mutual information x100.
/// Embeddings are discretized as in [`elmi`]; each structural property is
/// quantile-binned into `bins` cells. Constant properties contribute 0.
pub fn esmi_detailed(
    emb: &EmbeddingMatrix,
    graph: &TextAttributedGraph,
    num_clusters: usize,
    bins: usize,
    seed: u64,
) -> Result<(f64, [f64; 4])> {
    if bins < 2 {
        return Err(Error::Validation("bins must be at least 2".into()));
    }
    if emb.rows() != graph.num_nodes() {
        return Err(Error::Shape("embedding rows do not match graph".into()));
    }
    let cells = kmeans_cells(emb, num_clusters, seed)?;
    let props = structural_properties(graph);
    let degree_f: Vec<f64> = props.degree.iter().map(|&d| d as f64).collect();
    let per_property: Vec<f64> = [
        &degree_f,
        &props.clustering,
        &props.pagerank,
        &props.avg_neighbor_degree,
    ]
    .iter()
    .map(|values| {
        let binned = quantile_bins(values, bins);
        100.0 * normalized_mutual_information(&cells, &binned)
    })
    .collect();
    let mean = per_property.iter().sum::<f64>() / 4.0;
    Ok((mean, [
        per_property[0],
        per_property[1],
        per_property[2],
        per_property[3],
    ]))
}

pub fn esmi(
    emb: &EmbeddingMatrix,
    graph: &TextAttributedGraph,
    num_clusters: usize,
    bins: usize,
    seed: u64,
) -> Result<f64> {
    Ok(esmi_detailed(emb, graph, num_clusters, bins, seed)?.0)
}

pub fn cosine(a: &Array1<f64>, b: &Array1<f64>) -> f64 {
    let na = a.dot(a).sqrt();
    let nb = b.dot(b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0; // zero-vector cosine is defined as 0
    }
    a.dot(b) / (na * nb)
}

/// Neighbor consistency x100: mean cosine similarity between embeddings of
/// edge endpoints, averaged over directed incidences of the symmetric
/// adjacency (which for an undirected simple graph equals the mean over
/// edges).
pub fn neighbor_consistency(emb: &EmbeddingMatrix, graph: &TextAttributedGraph) -> Result<f64> {
    if graph.num_edges() == 0 {
        return Err(Error::Validation(
            "neighbor consistency needs at least one edge".into(),
        ));
    }
    if emb.rows() != graph.num_nodes() {
        return Err(Error::Shape("embedding rows do not match graph".into()));
    }
    let total: f64 = graph
        .edges()
        .iter()
        .map(|&(u, v)| cosine(&emb.row(u).to_owned(), &emb.row(v).to_owned()))
        .sum();
    Ok(100.0 * total / graph.num_edges() as f64)
}

/// Fraction of edges whose endpoints share a label, x100.
pub fn edge_homophily(graph: &TextAttributedGraph, labels: &[usize]) -> Result<f64> {
    if graph.num_edges() == 0 {
        return Err(Error::Validation(
            "edge homophily needs at least one edge".into(),
        ));
    }
    if labels.len() != graph.num_nodes() {
        return Err(Error::Shape("labels do not match graph".into()));
    }
    let intra = graph
        .edges()
        .iter()
        .filter(|&&(u, v)| labels[u] == labels[v])
        .count();
    Ok(100.0 * intra as f64 / graph.num_edges() as f64)
}
