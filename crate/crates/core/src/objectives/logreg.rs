use super::{softmax_xent, GradientOracle};

/// Multinomial logistic regression.
///
/// Layout: weights `W` (classes x dim, row-major) at offset 0, then the
/// bias vector `b` (classes) at [`bias_offset`](Self::bias_offset).
#[derive(Clone, Debug)]
pub struct LogisticRegression {
    dim: usize,
    classes: usize,
}

impl LogisticRegression {
    pub fn new(dim: usize, classes: usize) -> Self {
        Self { dim, classes }
    }

    pub fn bias_offset(&self) -> usize {
        self.classes * self.dim
    }

    fn logits(&self, params: &[f64], x: &[f64]) -> Vec<f64> {
        let b = &params[self.bias_offset()..];
        (0..self.classes)
            .map(|c| {
                let w = &params[c * self.dim..(c + 1) * self.dim];
                b[c] + w.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>()
            })
            .collect()
    }
}

impl GradientOracle for LogisticRegression {
    fn param_dim(&self) -> usize {
        self.classes * (self.dim + 1)
    }

    fn input_dim(&self) -> usize {
        self.dim
    }

    fn accumulate(&self, params: &[f64], x: &[f64], label: usize, grad: &mut [f64]) -> f64 {
        let logits = self.logits(params, x);
        let mut dz = vec![0.0; self.classes];
        let loss = softmax_xent(&logits, label, &mut dz);
        let off = self.bias_offset();
        for c in 0..self.classes {
            let row = &mut grad[c * self.dim..(c + 1) * self.dim];
            for (g, xi) in row.iter_mut().zip(x) {
                *g += dz[c] * xi;
            }
            grad[off + c] += dz[c];
        }
        loss
    }

    fn scores(&self, params: &[f64], x: &[f64]) -> Option<Vec<f64>> {
        Some(self.logits(params, x))
    }
}
