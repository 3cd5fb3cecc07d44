//! Loss and gradient oracles over flat parameter vectors.
//!
//! Every model implements a per-sample loss with an accumulated gradient;
//! batch losses are plain means over the batch, summed in batch order.

mod logreg;
mod mlp;
mod synthetic;

use rand_distr::{Distribution, Uniform};

pub use logreg::LogisticRegression;
pub use mlp::MlpOneHidden;
pub use synthetic::SyntheticNonConvex;

use crate::data::{Dataset, Purpose, RngStream, Shard};
use crate::error::{Error, Result};
use crate::vector::ParamVector;

/// Loss `F(x; sample)` and its gradient for one parametric model.
pub trait GradientOracle: Send + Sync {
    fn param_dim(&self) -> usize;

    /// Feature dimension the model expects.
    fn input_dim(&self) -> usize;

    /// Adds the gradient of the single-sample loss into `grad` and returns the loss.
    fn accumulate(&self, params: &[f64], features: &[f64], label: usize, grad: &mut [f64]) -> f64;

    /// Per-class scores for classification models; `None` for pure objectives.
    fn scores(&self, params: &[f64], features: &[f64]) -> Option<Vec<f64>>;
}

fn check_inputs<O: GradientOracle + ?Sized>(oracle: &O, params: &[f64], batch: &[usize], ds: &Dataset) -> Result<()> {
    if params.len() != oracle.param_dim() {
        return Err(Error::invalid(format!(
            "parameter vector has length {}, model expects {}",
            params.len(),
            oracle.param_dim()
        )));
    }
    if ds.dim() != oracle.input_dim() {
        return Err(Error::invalid(format!(
            "dataset dimension {} does not match model input {}",
            ds.dim(),
            oracle.input_dim()
        )));
    }
    if batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if let Some(&bad) = batch.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::invalid(format!("batch index {bad} out of range ({} samples)", ds.len())));
    }
    Ok(())
}

/// Mean loss over `batch` and its gradient at `params`.
pub fn value_and_grad<O: GradientOracle + ?Sized>(
    oracle: &O,
    params: &[f64],
    batch: &[usize],
    ds: &Dataset,
) -> Result<(f64, ParamVector)> {
    check_inputs(oracle, params, batch, ds)?;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for &i in batch {
        loss += oracle.accumulate(params, ds.features(i), ds.label(i), &mut grad);
    }
    let inv = 1.0 / batch.len() as f64;
    for g in grad.iter_mut() {
        *g *= inv;
    }
    Ok((loss * inv, ParamVector(grad)))
}

/// Mean loss only (no gradient buffer kept).
pub fn value<O: GradientOracle + ?Sized>(oracle: &O, params: &[f64], batch: &[usize], ds: &Dataset) -> Result<f64> {
    Ok(value_and_grad(oracle, params, batch, ds)?.0)
}

/// Exact gradient of the shard's empirical loss `f_i`.
pub fn full_gradient<O: GradientOracle + ?Sized>(
    oracle: &O,
    params: &[f64],
    shard: &Shard,
    ds: &Dataset,
) -> Result<ParamVector> {
    Ok(full_value_and_grad(oracle, params, shard, ds)?.1)
}

pub fn full_value_and_grad<O: GradientOracle + ?Sized>(
    oracle: &O,
    params: &[f64],
    shard: &Shard,
    ds: &Dataset,
) -> Result<(f64, ParamVector)> {
    if shard.is_empty() {
        return Err(Error::state(format!("shard of worker {} is empty", shard.owner)));
    }
    value_and_grad(oracle, params, &shard.indices, ds)
}

/// Central differences `(f(x + h e_k) - f(x - h e_k)) / 2h` per coordinate.
pub fn finite_difference_grad<O: GradientOracle + ?Sized>(
    oracle: &O,
    params: &[f64],
    batch: &[usize],
    ds: &Dataset,
    h: f64,
) -> Result<ParamVector> {
    if !(h > 0.0) {
        return Err(Error::invalid(format!("finite-difference step must be positive, got {h}")));
    }
    check_inputs(oracle, params, batch, ds)?;
    let mut x = params.to_vec();
    let mut out = vec![0.0; params.len()];
    for k in 0..params.len() {
        let orig = x[k];
        x[k] = orig + h;
        let up = value(oracle, &x, batch, ds)?;
        x[k] = orig - h;
        let down = value(oracle, &x, batch, ds)?;
        x[k] = orig;
        out[k] = (up - down) / (2.0 * h);
    }
    Ok(ParamVector(out))
}

/// `log(sum(exp(z)))` without overflow.
pub(crate) fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

/// Softmax cross-entropy for `logits` with true class `label`. Writes
/// `p - onehot(label)` into `dlogits` and returns the loss.
pub(crate) fn softmax_xent(logits: &[f64], label: usize, dlogits: &mut [f64]) -> f64 {
    let lse = log_sum_exp(logits);
    for (d, z) in dlogits.iter_mut().zip(logits) {
        *d = (z - lse).exp();
    }
    dlogits[label] -= 1.0;
    lse - logits[label]
}

/// Model family selected by configuration.
#[derive(Clone, Debug)]
pub enum Model {
    Synthetic(SyntheticNonConvex),
    Logreg(LogisticRegression),
    Mlp(MlpOneHidden),
}

impl Model {
    fn inner(&self) -> &dyn GradientOracle {
        match self {
            Model::Synthetic(m) => m,
            Model::Logreg(m) => m,
            Model::Mlp(m) => m,
        }
    }

    /// Initial model `x_0`, identical for every worker: drawn from a
    /// dedicated stream keyed only by the global seed.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        let mut rng = RngStream::new(seed, 0, 0, Purpose::ModelInit);
        match self {
            Model::Synthetic(m) => {
                let u = Uniform::new(-m.init_radius, m.init_radius).expect("positive radius");
                ParamVector((0..m.param_dim()).map(|_| u.sample(&mut rng)).collect())
            }
            Model::Logreg(m) => ParamVector::zeros(m.param_dim()),
            Model::Mlp(m) => m.glorot_init(&mut rng),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Model::Synthetic(_) => "synthetic",
            Model::Logreg(_) => "logreg",
            Model::Mlp(_) => "mlp",
        }
    }
}

impl GradientOracle for Model {
    fn param_dim(&self) -> usize {
        self.inner().param_dim()
    }

    fn input_dim(&self) -> usize {
        self.inner().input_dim()
    }

    fn accumulate(&self, params: &[f64], features: &[f64], label: usize, grad: &mut [f64]) -> f64 {
        self.inner().accumulate(params, features, label, grad)
    }

    fn scores(&self, params: &[f64], features: &[f64]) -> Option<Vec<f64>> {
        self.inner().scores(params, features)
    }
}
