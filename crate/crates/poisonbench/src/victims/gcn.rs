//! Two-layer graph convolution backbone with manual backprop.

use ndarray::{Array1, Array2};
use rand_chacha::ChaCha8Rng;

use super::adjacency::NormalizedAdjacency;
use super::nn;

#[derive(Debug, Clone, PartialEq)]
pub struct GcnParams {
    pub w1: Array2<f64>,
    pub b1: Array1<f64>,
    pub w2: Array2<f64>,
    pub b2: Array1<f64>,
}

impl GcnParams {
    pub fn init(in_dim: usize, hidden: usize, classes: usize, rng: &mut ChaCha8Rng) -> Self {
        Self {
            w1: nn::glorot(in_dim, hidden, rng),
            b1: Array1::zeros(hidden),
            w2: nn::glorot(hidden, classes, rng),
            b2: Array1::zeros(classes),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w1: Array2::zeros(self.w1.raw_dim()),
            b1: Array1::zeros(self.b1.raw_dim()),
            w2: Array2::zeros(self.w2.raw_dim()),
            b2: Array1::zeros(self.b2.raw_dim()),
        }
    }

    pub fn tensor_shapes(&self) -> Vec<usize> {
        vec![self.w1.len(), self.b1.len(), self.w2.len(), self.b2.len()]
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            self.w1.as_slice_mut().unwrap(),
            self.b1.as_slice_mut().unwrap(),
            self.w2.as_slice_mut().unwrap(),
            self.b2.as_slice_mut().unwrap(),
        ]
    }

    pub fn tensors(&self) -> Vec<&[f64]> {
        vec![
            self.w1.as_slice().unwrap(),
            self.b1.as_slice().unwrap(),
            self.w2.as_slice().unwrap(),
            self.b2.as_slice().unwrap(),
        ]
    }
}

pub struct GcnCache {
    x0: Array2<f64>,
    mask0: Option<Array2<f64>>,
    z1: Array2<f64>,
    h1d: Array2<f64>,
    mask1: Option<Array2<f64>>,
}

/// Forward pass. With `dropout_rng` set, feature dropout with probability
/// `dropout_p` is applied before each layer (training mode).
pub fn forward(
    params: &GcnParams,
    adj: &NormalizedAdjacency,
    x: &Array2<f64>,
    dropout_p: f64,
    dropout_rng: Option<&mut ChaCha8Rng>,
) -> (Array2<f64>, GcnCache) {
    let (x0, mask0, mask_rng) = match dropout_rng {
        Some(rng) => {
            let (x0, mask) = nn::dropout(x, dropout_p, rng);
            (x0, Some(mask), Some(rng))
        }
        None => (x.clone(), None, None),
    };
    let z1 = adj.apply(&x0.dot(&params.w1)) + &params.b1;
    let h1 = nn::relu(&z1);
    let (h1d, mask1) = match mask_rng {
        Some(rng) => {
            let (h1d, mask) = nn::dropout(&h1, dropout_p, rng);
            (h1d, Some(mask))
        }
        None => (h1, None),
    };
    let logits = adj.apply(&h1d.dot(&params.w2)) + &params.b2;
    (
        logits,
        GcnCache {
            x0,
            mask0,
            z1,
            h1d,
            mask1,
        },
    )
}

pub fn backward(
    params: &GcnParams,
    adj: &NormalizedAdjacency,
    cache: &GcnCache,
    dlogits: &Array2<f64>,
) -> GcnParams {
    let mut grads = params.zeros_like();
    grads.b2 = dlogits.sum_axis(ndarray::Axis(0));
    let dt2 = adj.apply(dlogits);
    grads.w2 = cache.h1d.t().dot(&dt2);
    let mut dh1 = dt2.dot(&params.w2.t());
    if let Some(mask) = &cache.mask1 {
        dh1 *= mask;
    }
    let dz1 = nn::relu_backward(&dh1, &cache.z1);
    grads.b1 = dz1.sum_axis(ndarray::Axis(0));
    let dt1 = adj.apply(&dz1);
    grads.w1 = cache.x0.t().dot(&dt1);
    let _ = &cache.mask0; // input gradient not needed
    grads
}
