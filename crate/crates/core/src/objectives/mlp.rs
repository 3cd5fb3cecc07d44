use rand_distr::{Distribution, Uniform};

use super::{softmax_xent, GradientOracle};
use crate::data::RngStream;
use crate::vector::ParamVector;

/// One tanh hidden layer, softmax cross-entropy output, hand-written backprop.
///
/// Layout (row-major blocks, in order): `W1` (hidden x dim), `b1` (hidden),
/// `W2` (classes x hidden), `b2` (classes).
#[derive(Clone, Debug)]
pub struct MlpOneHidden {
    dim: usize,
    hidden: usize,
    classes: usize,
}

struct Offsets {
    b1: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

impl MlpOneHidden {
    pub fn new(dim: usize, hidden: usize, classes: usize) -> Self {
        Self { dim, hidden, classes }
    }

    fn offsets(&self) -> Offsets {
        let b1 = self.hidden * self.dim;
        let w2 = b1 + self.hidden;
        let b2 = w2 + self.classes * self.hidden;
        Offsets { b1, w2, b2, end: b2 + self.classes }
    }

    fn forward(&self, params: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let o = self.offsets();
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|j| {
                let w = &params[j * self.dim..(j + 1) * self.dim];
                (params[o.b1 + j] + w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()).tanh()
            })
            .collect();
        let logits = (0..self.classes)
            .map(|c| {
                let w = &params[o.w2 + c * self.hidden..o.w2 + (c + 1) * self.hidden];
                params[o.b2 + c] + w.iter().zip(&hidden).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        (hidden, logits)
    }

    /// Glorot-uniform weights `U(-sqrt(6/(fan_in+fan_out)), +)`, zero biases.
    pub(super) fn glorot_init(&self, rng: &mut RngStream) -> ParamVector {
        let o = self.offsets();
        let mut p = vec![0.0; o.end];
        let l1 = (6.0 / (self.dim + self.hidden) as f64).sqrt();
        let u1 = Uniform::new_inclusive(-l1, l1).expect("finite bound");
        for w in p[..o.b1].iter_mut() {
            *w = u1.sample(rng);
        }
        let l2 = (6.0 / (self.hidden + self.classes) as f64).sqrt();
        let u2 = Uniform::new_inclusive(-l2, l2).expect("finite bound");
        for w in p[o.w2..o.b2].iter_mut() {
            *w = u2.sample(rng);
        }
        ParamVector(p)
    }
}

impl GradientOracle for MlpOneHidden {
    fn param_dim(&self) -> usize {
        self.offsets().end
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn accumulate(&self, params: &[f64], x: &[f64], label: usize, grad: &mut [f64]) -> f64 {
        let o = self.offsets();
        let (hidden, logits) = self.forward(params, x);
        let mut dz = vec![0.0; self.classes];
        let loss = softmax_xent(&logits, label, &mut dz);

        let mut dh = vec![0.0; self.hidden];
        for c in 0..self.classes {
            let base = o.w2 + c * self.hidden;
            for j in 0..self.hidden {
                grad[base + j] += dz[c] * hidden[j];
                dh[j] += params[base + j] * dz[c];
            }
            grad[o.b2 + c] += dz[c];
        }
        for j in 0..self.hidden {
            let da = dh[j] * (1.0 - hidden[j] * hidden[j]);
            let row = &mut grad[j * self.dim..(j + 1) * self.dim];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += da * xi;
            }
            grad[o.b1 + j] += da;
        }
        loss
    }

    fn scores(&self, params: &[f64], x: &[f64]) -> Option<Vec<f64>> {
        Some(self.forward(params, x).1)
    }
}
