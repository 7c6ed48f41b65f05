//! Two-layer graph attention backbone with manual backprop.
//!
//! Attention scores use a leaky-ReLU with slope 0.2 over
//! `a_src . (W x_i) + a_dst . (W x_j)` for every incidence j in N(i) plus the
//! self-loop, normalized by softmax per node. Layer-1 heads are concatenated
//! (per-head width = hidden / heads) and pass through an ELU; the single
//! layer-2 head emits the logits.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use super::adjacency::SelfLoopCsr;
use super::nn;

const LEAKY_SLOPE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct GatHead {
    pub w: Array2<f64>,
    pub a_src: Array1<f64>,
    pub a_dst: Array1<f64>,
}

impl GatHead {
    fn init(in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = nn::glorot(2, out_dim, rng);
        Self {
            w: nn::glorot(in_dim, out_dim, rng),
            a_src: a.row(0).to_owned(),
            a_dst: a.row(1).to_owned(),
        }
    }

    fn zeros_like(&self) -> Self {
        Self {
            w: Array2::zeros(self.w.raw_dim()),
            a_src: Array1::zeros(self.a_src.raw_dim()),
            a_dst: Array1::zeros(self.a_dst.raw_dim()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GatParams {
    pub heads1: Vec<GatHead>,
    pub b1: Array1<f64>,
    pub head2: GatHead,
    pub b2: Array1<f64>,
}

impl GatParams {
    pub fn init(
        in_dim: usize,
        hidden: usize,
        classes: usize,
        heads: usize,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let per_head = hidden / heads;
        let heads1 = (0..heads)
            .map(|_| GatHead::init(in_dim, per_head, rng))
            .collect();
        Self {
            heads1,
            b1: Array1::zeros(per_head * heads),
            head2: GatHead::init(per_head * heads, classes, rng),
            b2: Array1::zeros(classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            heads1: self.heads1.iter().map(GatHead::zeros_like).collect(),
            b1: Array1::zeros(self.b1.raw_dim()),
            head2: self.head2.zeros_like(),
            b2: Array1::zeros(self.b2.raw_dim()),
        }
    }

    pub fn tensor_shapes(&self) -> Vec<usize> {
        let mut shapes = Vec::new();
        for head in &self.heads1 {
            shapes.extend([head.w.len(), head.a_src.len(), head.a_dst.len()]);
        }
        shapes.push(self.b1.len());
        shapes.extend([
            self.head2.w.len(),
            self.head2.a_src.len(),
            self.head2.a_dst.len(),
        ]);
        shapes.push(self.b2.len());
        shapes
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for head in &mut self.heads1 {
            out.push(head.w.as_slice_mut().unwrap());
            out.push(head.a_src.as_slice_mut().unwrap());
            out.push(head.a_dst.as_slice_mut().unwrap());
        }
        out.push(self.b1.as_slice_mut().unwrap());
        out.push(self.head2.w.as_slice_mut().unwrap());
        out.push(self.head2.a_src.as_slice_mut().unwrap());
        out.push(self.head2.a_dst.as_slice_mut().unwrap());
        out.push(self.b2.as_slice_mut().unwrap());
        out
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for head in &self.heads1 {
            out.push(head.w.as_slice().unwrap());
            out.push(head.a_src.as_slice().unwrap());
            out.push(head.a_dst.as_slice().unwrap());
        }
        out.push(self.b1.as_slice().unwrap());
        out.push(self.head2.w.as_slice().unwrap());
        out.push(self.head2.a_src.as_slice().unwrap());
        out.push(self.head2.a_dst.as_slice().unwrap());
        out.push(self.b2.as_slice().unwrap());
        out
    }
}

pub struct HeadCache {
    hh: Array2<f64>,
    pre: Vec<f64>,
    pub alpha: Vec<f64>,
    out: Array2<f64>,
}

#[allow(clippy::needless_range_loop)]
fn head_forward(head: &GatHead, csr: &SelfLoopCsr, x: &Array2<f64>) -> HeadCache {
    let n = csr.n;
    let f = head.w.ncols();
    let hh = x.dot(&head.w);
    let s: Vec<f64> = (0..n).map(|i| hh.row(i).dot(&head.a_src)).collect();
    let t: Vec<f64> = (0..n).map(|j| hh.row(j).dot(&head.a_dst)).collect();

    let nnz = csr.indices.len();
    let mut pre = vec![0.0; nnz];
    let mut alpha = vec![0.0; nnz];
    let mut out = Array2::zeros((n, f));
    for i in 0..n {
        let lo = csr.indptr[i];
        let hi = csr.indptr[i + 1];
        let mut max = f64::NEG_INFINITY;
        for k in lo..hi {
            let j = csr.indices[k];
            pre[k] = nn::leaky_relu(s[i] + t[j], LEAKY_SLOPE);
            max = max.max(pre[k]);
        }
        let mut sum = 0.0;
        for k in lo..hi {
            alpha[k] = (pre[k] - max).exp();
            sum += alpha[k];
        }
        for k in lo..hi {
            alpha[k] /= sum;
            let j = csr.indices[k];
            for c in 0..f {
                out[[i, c]] += alpha[k] * hh[[j, c]];
            }
        }
    }
    HeadCache {
        hh,
        pre,
        alpha,
        out,
    }
}

/// Backward through one head. Returns the gradient w.r.t. the layer input and
/// accumulates parameter gradients into `grads`.
fn head_backward(
    head: &GatHead,
    grads: &mut GatHead,
    csr: &SelfLoopCsr,
    x: &Array2<f64>,
    cache: &HeadCache,
    dout: &Array2<f64>,
) -> Array2<f64> {
    let n = csr.n;
    let f = head.w.ncols();
    let mut dhh = Array2::<f64>::zeros(cache.hh.raw_dim());
    let mut ds = vec![0.0; n];
    let mut dt = vec![0.0; n];

    for i in 0..n {
        let lo = csr.indptr[i];
        let hi = csr.indptr[i + 1];
        // dalpha_k = dout_i . hh_j; softmax backward per node.
        let mut dalpha = vec![0.0; hi - lo];
        let mut inner = 0.0;
        for (idx, k) in (lo..hi).enumerate() {
            let j = csr.indices[k];
            let mut d = 0.0;
            for c in 0..f {
                d += dout[[i, c]] * cache.hh[[j, c]];
                dhh[[j, c]] += cache.alpha[k] * dout[[i, c]];
            }
            dalpha[idx] = d;
            inner += cache.alpha[k] * d;
        }
        for (idx, k) in (lo..hi).enumerate() {
            let j = csr.indices[k];
            let de = cache.alpha[k] * (dalpha[idx] - inner);
            let dpre = de * nn::leaky_relu_grad(s_plus_t_sign(cache.pre[k]), LEAKY_SLOPE);
            ds[i] += dpre;
            dt[j] += dpre;
        }
    }

    for i in 0..n {
        for c in 0..f {
            grads.a_src[c] += ds[i] * cache.hh[[i, c]];
            grads.a_dst[c] += dt[i] * cache.hh[[i, c]];
            dhh[[i, c]] += ds[i] * head.a_src[c] + dt[i] * head.a_dst[c];
        }
    }

    grads.w += &x.t().dot(&dhh);
    dhh.dot(&head.w.t())
}

// The cached `pre` value is the post-leaky activation; its sign matches the
// pre-activation sign (leaky-ReLU is sign-preserving), which is all the
// gradient needs.
fn s_plus_t_sign(post: f64) -> f64 {
    post
}

pub struct GatCache {
    x0: Array2<f64>,
    heads1: Vec<HeadCache>,
    z1: Array2<f64>,
    h1d: Array2<f64>,
    mask1: Option<Array2<f64>>,
    head2: HeadCache,
}

impl GatCache {
    /// Attention coefficients of a layer-1 head, one weight per incidence.
    #[cfg(test)]
    pub fn layer1_alpha(&self, head: usize) -> &[f64] {
        &self.heads1[head].alpha
    }
}

pub fn forward(
    params: &GatParams,
    csr: &SelfLoopCsr,
    x: &Array2<f64>,
    dropout_p: f64,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, GatCache) {
    let n = csr.n;
    let per_head = params.heads1[0].w.ncols();
    let (x0, mask_rng) = match dropout_rng {
        Some(rng) => {
            let (x0, _mask) = nn::dropout(x, dropout_p, rng);
            (x0, Some(rng))
        }
        None => (x.clone(), None),
    };

    let heads1: Vec<HeadCache> = params
        .heads1
        .iter()
        .map(|head| head_forward(head, csr, &x0))
        .collect();
    let mut z1 = Array2::zeros((n, per_head * heads1.len()));
    for (h, cache) in heads1.iter().enumerate() {
        for i in 0..n {
            for c in 0..per_head {
                z1[[i, h * per_head + c]] = cache.out[[i, c]];
            }
        }
    }
    z1 += &params.b1;
    let h1 = nn::elu(&z1);
    let (h1d, mask1) = match mask_rng {
        Some(rng) => {
            let (h1d, mask) = nn::dropout(&h1, dropout_p, rng);
            (h1d, Some(mask))
        }
        None => (h1, None),
    };
    let head2 = head_forward(&params.head2, csr, &h1d);
    let logits = &head2.out + &params.b2;
    (
        logits,
        GatCache {
            x0,
            heads1,
            z1,
            h1d,
            mask1,
            head2,
        },
    )
}

pub fn backward(
    params: &GatParams,
    csr: &SelfLoopCsr,
    cache: &GatCache,
    dlogits: &Array2<f64>,
) -> GatParams {
    let mut grads = params.zeros_like();
    grads.b2 = dlogits.sum_axis(ndarray::Axis(0));
    let mut dh1d = head_backward(
        &params.head2,
        &mut grads.head2,
        csr,
        &cache.h1d,
        &cache.head2,
        dlogits,
    );
    if let Some(mask) = &cache.mask1 {
        dh1d *= mask;
    }
    let dz1 = nn::elu_backward(&dh1d, &cache.z1);
    grads.b1 = dz1.sum_axis(ndarray::Axis(0));

    let per_head = params.heads1[0].w.ncols();
    for (h, head) in params.heads1.iter().enumerate() {
        let dout = dz1
            .slice(ndarray::s![.., h * per_head..(h + 1) * per_head])
            .to_owned();
        head_backward(
            head,
            &mut grads.heads1[h],
            csr,
            &cache.x0,
            &cache.heads1[h],
            &dout,
        );
    }
    grads
}
