//! Shared neural-network primitives: initialization, dropout, the optimizer
//! and the masked softmax cross-entropy head.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Uniform Glorot-style init over (-a, a) with a = sqrt(6 / (fan_in + fan_out)).
pub fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let a = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| rng.gen_range(-a..a))
}

/// Inverted dropout: zeroes entries with probability `p` and rescales the
/// survivors by 1/(1-p). Returns the mask applied (1/(1-p) or 0 per entry).
pub fn dropout(x: &Array2<f64>, p: f64, rng: &mut ChaCha8Rng) -> (Array2<f64>, Array2<f64>) {
    if p <= 0.0 {
        return (x.clone(), Array2::ones(x.raw_dim()));
    }
    let scale = 1.0 / (1.0 - p);
    let mask = Array2::from_shape_fn(x.raw_dim(), |_| {
        if rng.gen::<f64>() < p {
            0.0
        } else {
            scale
        }
    });
    (x * &mask, mask)
}

pub fn relu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| v.max(0.0))
}

pub fn relu_backward(grad: &Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut out = grad.clone();
    out.zip_mut_with(pre, |g, &z| {
        if z <= 0.0 {
            *g = 0.0;
        }
    });
    out
}

pub fn elu(x: &Array2<f64>) -> Array2<f64> {
    x.mapv(|v| if v > 0.0 { v } else { v.exp() - 1.0 })
}

pub fn elu_backward(grad: &Array2<f64>, pre: &Array2<f64>) -> Array2<f64> {
    let mut out = grad.clone();
    out.zip_mut_with(pre, |g, &z| {
        if z <= 0.0 {
            *g *= z.exp();
        }
    });
    out
}

pub fn leaky_relu(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        slope * v
    }
}

pub fn leaky_relu_grad(v: f64, slope: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        slope
    }
}

/// Row-wise softmax.
pub fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// Mean cross-entropy over `nodes` plus the gradient w.r.t. the logits
/// (zero rows outside `nodes`).
pub fn masked_cross_entropy(
    logits: &Array2<f64>,
    labels: &[usize],
    nodes: &[usize],
) -> (f64, Array2<f64>) {
    let probs = softmax_rows(logits);
    let m = nodes.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for &node in nodes {
        let label = labels[node];
        loss -= probs[[node, label]].max(1e-300).ln();
        for c in 0..logits.ncols() {
            let one_hot = if c == label { 1.0 } else { 0.0 };
            grad[[node, c]] = (probs[[node, c]] - one_hot) / m;
        }
    }
    (loss / m, grad)
}

/// Adam with optional L2 weight decay folded into the gradient.
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    weight_decay: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64, shapes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            m: shapes.iter().map(|&s| vec![0.0; s]).collect(),
            v: shapes.iter().map(|&s| vec![0.0; s]).collect(),
        }
    }

    /// Applies one update. `params` and `grads` must line up with the shapes
    /// the optimizer was built with.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for ((param, grad), (m, v)) in params
            .iter_mut()
            .zip(grads.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            for i in 0..param.len() {
                let g = grad[i] + self.weight_decay * param[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
