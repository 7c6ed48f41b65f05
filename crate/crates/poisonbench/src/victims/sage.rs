//! Two-layer mean-aggregator backbone (full neighborhoods, no sampling).

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use super::adjacency::MeanAdjacency;
use super::nn;

#[derive(Debug, Clone, PartialEq)]
pub struct SageParams {
    pub w_self1: Array2<f64>,
    pub w_neigh1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w_self2: Array2<f64>,
    pub w_neigh2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl SageParams {
    pub fn init(in_dim: usize, hidden: usize, classes: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w_self1: nn::glorot(in_dim, hidden, rng),
            w_neigh1: nn::glorot(in_dim, hidden, rng),
            b1: Array1::zeros(hidden),
            w_self2: nn::glorot(hidden, classes, rng),
            w_neigh2: nn::glorot(hidden, classes, rng),
            b2: Array1::zeros(classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w_self1: Array2::zeros(self.w_self1.raw_dim()),
            w_neigh1: Array2::zeros(self.w_neigh1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w_self2: Array2::zeros(self.w_self2.raw_dim()),
            w_neigh2: Array2::zeros(self.w_neigh2.raw_dim()),
            b2: Array1::zeros(self.b2.raw_dim()),
        }
    }

    pub fn tensor_shapes(&self) -> Vec<usize> {
        vec![
            self.w_self1.len(),
            self.w_neigh1.len(),
            self.b1.len(),
            self.w_self2.len(),
            self.w_neigh2.len(),
            self.b2.len(),
        ]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w_self1.as_slice_mut().unwrap(),
            self.w_neigh1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w_self2.as_slice_mut().unwrap(),
            self.w_neigh2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
        ]
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w_self1.as_slice().unwrap(),
            self.w_neigh1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w_self2.as_slice().unwrap(),
            self.w_neigh2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
        ]
    }
}

pub struct SageCache {
    x0: Array2<f64>,
    x0_mean: Array2<f64>,
    z1: Array2<f64>,
    h1d: Array2<f64>,
    h1d_mean: Array2<f64>,
    mask1: Option<Array2<f64>>,
}

pub fn forward(
    params: &SageParams,
    mean: &MeanAdjacency,
    x: &Array2<f64>,
    dropout_p: f64,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, SageCache) {
    let (x0, mask_rng) = match dropout_rng {
        Some(rng) => {
            let (x0, _mask) = nn::dropout(x, dropout_p, rng);
            (x0, Some(rng))
        }
        None => (x.clone(), None),
    };
    let x0_mean = mean.apply(&x0);
    let z1 = x0.dot(&params.w_self1) + x0_mean.dot(&params.w_neigh1) + &params.b1;
    let h1 = nn::relu(&z1);
    let (h1d, mask1) = match mask_rng {
        Some(rng) => {
            let (h1d, mask) = nn::dropout(&h1, dropout_p, rng);
            (h1d, Some(mask))
        }
        None => (h1, None),
    };
    let h1d_mean = mean.apply(&h1d);
    let logits = h1d.dot(&params.w_self2) + h1d_mean.dot(&params.w_neigh2) + &params.b2;
    (
        logits,
        SageCache {
            x0,
            x0_mean,
            z1,
            h1d,
            h1d_mean,
            mask1,
        },
    )
}

pub fn backward(
    params: &SageParams,
    mean: &MeanAdjacency,
    cache: &SageCache,
    dlogits: &Array2<f64>,
) -> SageParams {
    let mut grads = params.zeros_like();
    grads.b2 = dlogits.sum_axis(ndarray::Axis(0));
    grads.w_self2 = cache.h1d.t().dot(dlogits);
    grads.w_neigh2 = cache.h1d_mean.t().dot(dlogits);
    let mut dh1d =
        dlogits.dot(&params.w_self2.t()) + mean.apply_transpose(&dlogits.dot(&params.w_neigh2.t()));
    if let Some(mask) = &cache.mask1 {
        dh1d *= mask;
    }
    let dz1 = nn::relu_backward(&dh1d, &cache.z1);
    grads.b1 = dz1.sum_axis(ndarray::Axis(0));
    grads.w_self1 = cache.x0.t().dot(&dz1);
    grads.w_neigh1 = cache.x0_mean.t().dot(&dz1);
    grads
}
