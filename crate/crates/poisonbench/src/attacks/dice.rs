//! Label-guided structural attack: remove intra-class edges, add inter-class
//! edges, lowering homophily.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{BudgetSpec, EdgeFlip, PerturbationSet};
use crate::error::Result;
use crate::tagraph::TextAttributedGraph;

/// Spends exactly floor(rate * |E|) flips. Each flip is, with probability
/// one half, the removal of a uniformly chosen intra-class edge, otherwise
/// the addition of a uniformly chosen absent inter-class pair, judged by
/// `label_view` (the adversary's label knowledge). When one pool is empty
/// the other move is taken; when both are empty the set carries a
/// partial-budget warning.
pub fn dice_attack(
    graph: &TextAttributedGraph,
    label_view: &[usize],
    rate: f64,
    seed: u64,
) -> Result<PerturbationSet> {
    let budget_spec = BudgetSpec::global_rate(rate);
    budget_spec.validate()?;
    let n = graph.num_nodes();
    let budget = (rate * graph.num_edges() as f64).floor() as usize;
    let mut pset = PerturbationSet::new("dice", seed, budget_spec);
    if budget == 0 {
        return Ok(pset);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges: std::collections::BTreeSet<(usize, usize)> =
        graph.edges().iter().copied().collect();
    // Removal pool: original intra-class edges (by the attacker's view).
    let mut intra: Vec<(usize, usize)> = graph
        .edges()
        .iter()
        .copied()
        .filter(|&(u, v)| label_view[u] == label_view[v])
        .collect();
    let mut added = std::collections::BTreeSet::new();

    // Absent inter-class pairs are sampled by rejection; if the rejection
    // budget runs dry the exact pool is enumerated once and sampled directly.
    let mut inter_pool: Option<Vec<(usize, usize)>> = None;
    let mut draw_inter_addition =
        |rng: &mut ChaCha8Rng,
         edges: &std::collections::BTreeSet<(usize, usize)>,
         added: &std::collections::BTreeSet<(usize, usize)>|
         -> Option<(usize, usize)> {
            if inter_pool.is_none() {
                for _ in 0..20_000 {
                    let a = rng.gen_range(0..n);
                    let b = rng.gen_range(0..n);
                    if a == b || label_view[a] == label_view[b] {
                        continue;
                    }
                    let pair = (a.min(b), a.max(b));
                    if edges.contains(&pair) || added.contains(&pair) {
                        continue;
                    }
                    return Some(pair);
                }
                let mut pool = Vec::new();
                for a in 0..n {
                    for b in (a + 1)..n {
                        if label_view[a] != label_view[b]
                            && !edges.contains(&(a, b))
                            && !added.contains(&(a, b))
                        {
                            pool.push((a, b));
                        }
                    }
                }
                inter_pool = Some(pool);
            }
            let pool = inter_pool.as_mut().unwrap();
            pool.retain(|pair| !edges.contains(pair) && !added.contains(pair));
            if pool.is_empty() {
                return None;
            }
            let idx = rng.gen_range(0..pool.len());
            Some(pool.swap_remove(idx))
        };

    while pset.edge_flips.len() < budget {
        let prefer_removal = rng.gen_bool(0.5);
        let mut done = false;
        for attempt in 0..2 {
            let removal_turn = if attempt == 0 { prefer_removal } else { !prefer_removal };
            if removal_turn {
                if intra.is_empty() {
                    continue;
                }
                let idx = rng.gen_range(0..intra.len());
                let pair = intra.swap_remove(idx);
                edges.remove(&pair);
                pset.edge_flips.push(EdgeFlip::remove(pair.0, pair.1));
                done = true;
                break;
            } else if let Some(pair) = draw_inter_addition(&mut rng, &edges, &added) {
                edges.insert(pair);
                added.insert(pair);
                pset.edge_flips.push(EdgeFlip::add(pair.0, pair.1));
                done = true;
                break;
            }
        }
        if !done {
            pset.warnings.push(format!(
                "both pools empty after {} of {budget} flips",
                pset.edge_flips.len()
            ));
            break;
        }
    }
    Ok(pset)
}
