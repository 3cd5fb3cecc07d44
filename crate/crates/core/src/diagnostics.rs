//! Per-epoch measurements: loss, stationarity of the averaged model,
//! consensus distance, tracker error, and gradient heterogeneity.
//!
//! The heterogeneity and tracker error are point estimates at the current
//! models, not suprema over parameter space.

use std::fmt::Write as _;

use crate::data::{sample_minibatch, Dataset, Purpose, RngStream, Shard};
use crate::error::{Error, Result};
use crate::objectives::{full_gradient, full_value_and_grad, value_and_grad, GradientOracle};
use crate::optim::{Algorithm, Cohort, Problem};
use crate::vector::{self, dist_sq, ParamVector};

pub const CSV_HEADER: &str = "epoch,train_loss,test_acc,grad_norm_avg,consensus_dist,tracker_err,heterogeneity,rho";

/// Minibatch gradients drawn per worker by [`stochastic_variance`].
pub const VARIANCE_RESAMPLES: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsRecord {
    pub epoch: usize,
    /// Mean over workers of `f_i(x_i)`.
    pub train_loss: f64,
    /// Accuracy of `x_bar` on the test set, when the model classifies.
    pub test_acc: Option<f64>,
    /// `||grad f(x_bar)||`.
    pub grad_norm_avg: f64,
    /// `(1/n) sum_i ||x_i - x_bar||^2`.
    pub consensus_dist: f64,
    /// `max_i ||y_i - (1/n) sum_j grad f_j(x_i)||` (GT-DSUM only).
    pub tracker_err: Option<f64>,
    /// `(1/n) sum_i ||grad f_i(x_bar) - grad f(x_bar)||^2`.
    pub heterogeneity: f64,
    /// Spectral gap of the matrix used this epoch.
    pub rho: f64,
}

/// 17 significant digits, enough to round-trip any `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

impl MetricsRecord {
    /// One CSV line in [`CSV_HEADER`] order, without the newline.
    pub fn csv_row(&self) -> String {
        let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
        let mut s = String::new();
        let _ = write!(
            s,
            "{},{},{},{},{},{},{},{}",
            self.epoch,
            format_float(self.train_loss),
            opt(self.test_acc),
            format_float(self.grad_norm_avg),
            format_float(self.consensus_dist),
            opt(self.tracker_err),
            format_float(self.heterogeneity),
            format_float(self.rho),
        );
        s
    }
}

/// `(1/n) sum_i ||x_i - x_bar||^2`, summed in worker order.
pub fn consensus_distance<V: AsRef<[f64]>>(xs: &[V]) -> Result<f64> {
    if xs.is_empty() {
        return Err(Error::invalid("consensus distance of zero workers"));
    }
    let mean = vector::mean(xs);
    let total: f64 = xs.iter().map(|x| dist_sq(x.as_ref(), &mean)).sum();
    Ok(total / xs.len() as f64)
}

/// `grad f(x) = (1/n) sum_i grad f_i(x)` over the shards.
pub fn global_gradient<O: GradientOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    shards: &[Shard],
    ds: &Dataset,
) -> Result<ParamVector> {
    let grads = shards.iter().map(|s| full_gradient(oracle, x, s, ds)).collect::<Result<Vec<_>>>()?;
    if grads.is_empty() {
        return Err(Error::invalid("global gradient over zero shards"));
    }
    Ok(vector::mean(&grads))
}

/// `max_i ||y_i - (1/n) sum_j grad f_j(x_i)||`.
pub fn tracker_error_of<O: GradientOracle + ?Sized, V: AsRef<[f64]>>(
    oracle: &O,
    xs: &[V],
    ys: &[V],
    shards: &[Shard],
    ds: &Dataset,
) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("tracker error needs one tracker per model"));
    }
    let mut worst: f64 = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        let target = global_gradient(oracle, x.as_ref(), shards, ds)?;
        worst = worst.max(dist_sq(y.as_ref(), &target));
    }
    Ok(worst.sqrt())
}

/// Tracker error of a GT-DSUM cohort.
pub fn tracker_error(cohort: &Cohort, p: &Problem<'_>) -> Result<f64> {
    if cohort.hyper().algo != Algorithm::Gtdsum {
        return Err(Error::state(format!(
            "tracker error is only defined for gtdsum, cohort runs {}",
            cohort.hyper().algo.name()
        )));
    }
    let xs = cohort.models();
    let ys: Vec<&ParamVector> = cohort.workers().iter().map(|w| &w.y).collect();
    tracker_error_of(p.oracle, &xs, &ys, p.shards, p.data)
}

/// `(1/n) sum_i ||grad f_i(x) - grad f(x)||^2` at a single point.
pub fn heterogeneity<O: GradientOracle + ?Sized>(oracle: &O, x: &[f64], shards: &[Shard], ds: &Dataset) -> Result<f64> {
    let grads = shards.iter().map(|s| full_gradient(oracle, x, s, ds)).collect::<Result<Vec<_>>>()?;
    if grads.is_empty() {
        return Err(Error::invalid("heterogeneity over zero shards"));
    }
    let mean = vector::mean(&grads);
    Ok(grads.iter().map(|g| dist_sq(g, &mean)).sum::<f64>() / grads.len() as f64)
}

/// Mean loss and argmax accuracy of `params` on `test`; ties go to the
/// lowest class index.
pub fn evaluate_test<O: GradientOracle + ?Sized>(oracle: &O, params: &[f64], test: &Dataset) -> Result<(f64, f64)> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    let all: Vec<usize> = (0..test.len()).collect();
    let (loss, _) = value_and_grad(oracle, params, &all, test)?;
    let mut correct = 0usize;
    for i in 0..test.len() {
        let scores = oracle
            .scores(params, test.features(i))
            .ok_or_else(|| Error::invalid("model does not produce class scores"))?;
        let mut best = 0;
        for (c, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = c;
            }
        }
        correct += usize::from(best == test.label(i));
    }
    Ok((loss, correct as f64 / test.len() as f64))
}

/// Mean over workers of the mean-square deviation of `VARIANCE_RESAMPLES`
/// minibatch gradients at `x` from the shard's full gradient.
pub fn stochastic_variance<O: GradientOracle + ?Sized>(
    oracle: &O,
    x: &[f64],
    shards: &[Shard],
    ds: &Dataset,
    batch: usize,
    seed: u64,
    epoch: usize,
) -> Result<f64> {
    if shards.is_empty() {
        return Err(Error::invalid("variance over zero shards"));
    }
    let mut total = 0.0;
    for s in shards {
        let full = full_gradient(oracle, x, s, ds)?;
        let mut rng = RngStream::new(seed, s.owner, epoch, Purpose::Diagnostics);
        let mut acc = 0.0;
        for _ in 0..VARIANCE_RESAMPLES {
            let b = sample_minibatch(s, batch, &mut rng)?;
            let (_, g) = value_and_grad(oracle, x, &b, ds)?;
            acc += dist_sq(&g, &full);
        }
        total += acc / VARIANCE_RESAMPLES as f64;
    }
    Ok(total / shards.len() as f64)
}

/// Which optional metrics to compute for an epoch.
#[derive(Clone, Copy, Debug, Default)]
pub struct Measure<'a> {
    pub test: Option<&'a Dataset>,
    pub tracker: bool,
}

/// Full metrics record of the cohort after `epoch`.
pub fn measure(cohort: &Cohort, p: &Problem<'_>, epoch: usize, opts: Measure<'_>) -> Result<MetricsRecord> {
    let xs = cohort.models();
    let mut train_loss = 0.0;
    for (x, s) in xs.iter().zip(p.shards) {
        train_loss += full_value_and_grad(p.oracle, x, s, p.data)?.0;
    }
    train_loss /= xs.len() as f64;
    let x_bar = cohort.mean_model();
    let grad = global_gradient(p.oracle, &x_bar, p.shards, p.data)?;
    let test_acc = match opts.test {
        Some(t) => Some(evaluate_test(p.oracle, &x_bar, t)?.1),
        None => None,
    };
    let tracker_err = if opts.tracker { Some(tracker_error(cohort, p)?) } else { None };
    Ok(MetricsRecord {
        epoch,
        train_loss,
        test_acc,
        grad_norm_avg: grad.norm_sq().sqrt(),
        consensus_dist: consensus_distance(&xs)?,
        tracker_err,
        heterogeneity: heterogeneity(p.oracle, &x_bar, p.shards, p.data)?,
        rho: cohort.schedule().lookup(epoch)?.rho(),
    })
}
