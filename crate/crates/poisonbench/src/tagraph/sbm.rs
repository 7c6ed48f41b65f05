//! Stochastic-block-model generator with class-informative node texts.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{SbmParams, TextAttributedGraph};
use crate::error::Result;

/// Generates a homophilous block-model graph. Node `i` belongs to class
/// `i * C / N` (contiguous near-equal blocks). Each unordered pair draws an
/// edge with `intra_edge_prob` when the endpoints share a class and
/// `inter_edge_prob` otherwise. Node text is `words_per_node` tokens, each
/// drawn from the node's class vocabulary slice with probability
/// `class_word_skew`, else from the shared slice. Deterministic per seed.
pub fn generate_synthetic_tag(params: &SbmParams) -> Result<TextAttributedGraph> {
    params.validate()?;
    let n = params.num_nodes;
    let c = params.num_classes;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);

    let labels: Vec<usize> = (0..n).map(|i| i * c / n).collect();

    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let p = if labels[i] == labels[j] {
                params.intra_edge_prob
            } else {
                params.inter_edge_prob
            };
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }

    // Vocabulary layout: C disjoint class slices followed by a shared slice.
    // With very small vocabularies the shared slice may be empty, in which
    // case shared draws fall back to the whole vocabulary.
    let v = params.vocab_size;
    let slice = (v / (c + 1)).max(1);
    let width = (v.max(2) - 1).to_string().len();
    let token = |idx: usize| format!("w{idx:0width$}");

    let mut texts = Vec::with_capacity(n);
    for &label in &labels {
        let class_lo = label * slice;
        let class_hi = ((label + 1) * slice).min(v);
        let shared_lo = (c * slice).min(v);
        let mut words = Vec::with_capacity(params.words_per_node);
        for _ in 0..params.words_per_node {
            let idx = if rng.gen::<f64>() < params.class_word_skew && class_lo < class_hi {
                rng.gen_range(class_lo..class_hi)
            } else if shared_lo < v {
                rng.gen_range(shared_lo..v)
            } else {
                rng.gen_range(0..v)
            };
            words.push(token(idx));
        }
        texts.push(words.join(" "));
    }

    TextAttributedGraph::new(n, &edges, texts, labels, c)
}
