//! Sparse graph operators used by the GNN forward/backward passes.

use ndarray::Array2;

use crate::tagraph::TextAttributedGraph;

/// Symmetrically normalized adjacency with self-loops in CSR form:
/// entry (i, j) is `1 / sqrt(d_i * d_j)` with `d` the degree of `A + I`.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl NormalizedAdjacency {
    pub fn from_graph(graph: &TextAttributedGraph) -> Self {
        let n = graph.num_nodes();
        Self::from_neighbor_lists(n, |node| graph.neighbors(node))
    }

    /// Builds the operator from an arbitrary edge list (used by smoothing,
    /// where sampled graphs are plain edge subsets).
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        Self::from_neighbor_lists(n, |node| &adj[node])
    }

    fn from_neighbor_lists<'a, F>(n: usize, neighbors: F) -> Self
    where
        F: Fn(usize) -> &'a [usize],
    {
        let mut degree = vec![0f64; n];
        for (node, d) in degree.iter_mut().enumerate() {
            *d = neighbors(node).len() as f64 + 1.0;
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for i in 0..n {
            // Merge the self-loop into the sorted neighbor run.
            let mut pushed_self = false;
            for &j in neighbors(i) {
                if !pushed_self && j > i {
                    indices.push(i);
                    values.push(1.0 / degree[i]);
                    pushed_self = true;
                }
                indices.push(j);
                values.push(1.0 / (degree[i] * degree[j]).sqrt());
            }
            if !pushed_self {
                indices.push(i);
                values.push(1.0 / degree[i]);
            }
            indptr.push(indices.len());
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    /// Computes `A_hat * x`. The operator is symmetric, so this also serves
    /// as the transpose application during backprop.
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let cols = x.ncols();
        let mut out = Array2::zeros((self.n, cols));
        for i in 0..self.n {
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                let w = self.values[k];
                for c in 0..cols {
                    out[[i, c]] += w * x[[j, c]];
                }
            }
        }
        out
    }

    /// Row of the operator as (column, value) pairs, used for per-node logits.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.indptr[i]..self.indptr[i + 1]).map(move |k| (self.indices[k], self.values[k]))
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n, self.n));
        for i in 0..self.n {
            for (j, w) in self.row(i) {
                out[[i, j]] = w;
            }
        }
        out
    }
}

/// Neighborhoods including the self-loop, in CSR form. GAT attends over
/// exactly these incidences.
#[derive(Debug, Clone)]
pub struct SelfLoopCsr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
}

impl SelfLoopCsr {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        indptr.push(0);
        for (i, list) in adj.iter_mut().enumerate() {
            list.push(i);
            list.sort_unstable();
            indices.extend_from_slice(list);
            indptr.push(indices.len());
        }
        Self { n, indptr, indices }
    }
}

/// Row-normalized neighbor averaging (no self-loop): entry (i, j) is
/// `1 / deg(i)` for each neighbor j. Used by the mean-aggregator backbone.
#[derive(Debug, Clone)]
pub struct MeanAdjacency {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    inv_degree: Vec<f64>,
}

impl MeanAdjacency {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            adj[u].push(v);
            adj[v].push(u);
        }
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut inv_degree = Vec::with_capacity(n);
        indptr.push(0);
        for list in &mut adj {
            list.sort_unstable();
            indices.extend_from_slice(list);
            indptr.push(indices.len());
            inv_degree.push(if list.is_empty() {
                0.0
            } else {
                1.0 / list.len() as f64
            });
        }
        Self {
            n,
            indptr,
            indices,
            inv_degree,
        }
    }

    /// out_i = mean of x_j over neighbors j of i (zero for isolated nodes).
    pub fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let cols = x.ncols();
        let mut out = Array2::zeros((self.n, cols));
        for i in 0..self.n {
            let w = self.inv_degree[i];
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                for c in 0..cols {
                    out[[i, c]] += w * x[[j, c]];
                }
            }
        }
        out
    }

    /// Transpose application: scatters `g_i / deg(i)` back onto neighbors.
    pub fn apply_transpose(&self, g: &Array2<f64>) -> Array2<f64> {
        let cols = g.ncols();
        let mut out = Array2::zeros((self.n, cols));
        for i in 0..self.n {
            let w = self.inv_degree[i];
            for k in self.indptr[i]..self.indptr[i + 1] {
                let j = self.indices[k];
                for c in 0..cols {
                    out[[j, c]] += w * g[[i, c]];
                }
            }
        }
        out
    }
}
