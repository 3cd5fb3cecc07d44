use super::GradientOracle;

/// Separable non-convex objective centred on the data:
/// `F(x; s) = sum_k (x_k - s_k)^2 + a_k sin^2(x_k - s_k)`.
///
/// Each coordinate is `L = 2 + 2 a_k` smooth and non-convex once `a_k > 1`.
/// With zero features the unique minimiser is `x = 0`. Parameter layout is
/// one entry per feature.
#[derive(Clone, Debug)]
pub struct SyntheticNonConvex {
    amplitude: Vec<f64>,
    pub(super) init_radius: f64,
}

impl SyntheticNonConvex {
    pub fn new(dim: usize, amplitude: f64) -> Self {
        Self { amplitude: vec![amplitude; dim], init_radius: 3.0 }
    }

    pub fn with_amplitudes(amplitude: Vec<f64>) -> Self {
        Self { amplitude, init_radius: 3.0 }
    }

    /// Half-width of the uniform box the initial model is drawn from.
    pub fn with_init_radius(mut self, r: f64) -> Self {
        self.init_radius = r;
        self
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitude
    }
}

impl GradientOracle for SyntheticNonConvex {
    fn param_dim(&self) -> usize {
        self.amplitude.len()
    }

    fn input_dim(&self) -> usize {
        self.amplitude.len()
    }

    fn accumulate(&self, params: &[f64], features: &[f64], _label: usize, grad: &mut [f64]) -> f64 {
        let mut loss = 0.0;
        for k in 0..params.len() {
            let z = params[k] - features[k];
            let a = self.amplitude[k];
            let s = z.sin();
            loss += z * z + a * s * s;
            grad[k] += 2.0 * z + a * (2.0 * z).sin();
        }
        loss
    }

    fn scores(&self, _params: &[f64], _features: &[f64]) -> Option<Vec<f64>> {
        None
    }
}
