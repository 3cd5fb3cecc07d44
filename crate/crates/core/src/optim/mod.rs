//! The SUM local update, gossip averaging, and the D-SUM / GT-DSUM epochs.
//!
//! One SUM step with stochastic gradient `g`:
//!
//! ```text
//! u' = x - eta g
//! v' = x - alpha eta g
//! x' = u' + beta (v' - v)
//! ```
//!
//! `alpha = 0` is heavy ball, `alpha = 1` is Nesterov, `beta = 0` is SGD.

mod cohort;

use serde::Deserialize;

pub use cohort::{BatchMode, Cohort, LocalStep, Problem, StepStates, Trace, TraceLevel};

use crate::data::RngStream;
use crate::error::{Error, Result};
use crate::topology::MixingMatrix;
use crate::vector::ParamVector;

/// Parameters beyond this magnitude are treated as divergence.
pub const DIVERGENCE_BOUND: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Gossip of the model only; local momentum restarts every epoch
    /// (plain local SGD when `beta = 0`).
    Vanilla,
    /// Local SUM steps, gossip of the model and the auxiliary sequence.
    Dsum,
    /// D-SUM with the tracker-blended gradient and pseudo-gradient tracking.
    Gtdsum,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Vanilla => "vanilla",
            Algorithm::Dsum => "dsum",
            Algorithm::Gtdsum => "gtdsum",
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "vanilla" => Ok(Algorithm::Vanilla),
            "dsum" => Ok(Algorithm::Dsum),
            "gtdsum" => Ok(Algorithm::Gtdsum),
            other => Err(Error::invalid(format!("unknown algorithm {other:?} (expected vanilla, dsum or gtdsum)"))),
        }
    }
}

/// Unified-momentum hyperparameters plus the algorithm selector.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SumHyper {
    pub alpha: f64,
    pub beta: f64,
    pub eta: f64,
    pub lambda: f64,
    pub k_local: usize,
    pub algo: Algorithm,
}

impl SumHyper {
    pub const DEFAULT_ALPHA: f64 = 2.0;
    pub const DEFAULT_BETA: f64 = 0.9;
    pub const DEFAULT_LAMBDA: f64 = 0.8;
    pub const DEFAULT_K_LOCAL: usize = 10;

    /// Defaults `alpha = 2, beta = 0.9, lambda = 0.8, K = 10` with the given step size.
    pub fn new(algo: Algorithm, eta: f64) -> Self {
        Self {
            alpha: Self::DEFAULT_ALPHA,
            beta: Self::DEFAULT_BETA,
            eta,
            lambda: Self::DEFAULT_LAMBDA,
            k_local: Self::DEFAULT_K_LOCAL,
            algo,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::invalid(format!("beta must lie in [0, 1), got {}", self.beta)));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(Error::invalid(format!("eta must be > 0, got {}", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::invalid(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        if self.k_local == 0 {
            return Err(Error::invalid("k_local must be at least 1"));
        }
        Ok(())
    }
}

/// Per-worker optimizer state.
#[derive(Clone, Debug)]
pub struct WorkerState {
    pub id: usize,
    /// Model `x_i`.
    pub x: ParamVector,
    /// SUM auxiliary sequence `v_i`.
    pub v: ParamVector,
    /// Gradient tracker `y_i` (GT-DSUM only).
    pub y: ParamVector,
    /// Previous epoch's pseudo-gradient `d_i^{(t-1)}`; zero before the first epoch.
    pub d_prev: ParamVector,
    /// `x_i^{(t)}` at the start of the current epoch.
    pub x_epoch_start: ParamVector,
    /// Minibatch stream of the current epoch.
    pub rng: RngStream,
}

impl WorkerState {
    /// `x = v = x0`, tracker and pseudo-gradient zeroed.
    pub fn new(id: usize, x0: &ParamVector, rng: RngStream) -> Self {
        let d = x0.len();
        Self {
            id,
            x: x0.clone(),
            v: x0.clone(),
            y: ParamVector::zeros(d),
            d_prev: ParamVector::zeros(d),
            x_epoch_start: x0.clone(),
            rng,
        }
    }
}

/// One SUM update of `(x, v)` in place, elementwise.
#[inline]
pub fn sum_update(x: &mut [f64], v: &mut [f64], g: &[f64], alpha: f64, beta: f64, eta: f64) {
    for ((xk, vk), &gk) in x.iter_mut().zip(v.iter_mut()).zip(g) {
        let u_next = *xk - eta * gk;
        let v_next = *xk - alpha * eta * gk;
        *xk = u_next + beta * (v_next - *vk);
        *vk = v_next;
    }
}

fn guard(x: &[f64], epoch: usize, worker: usize, step: usize) -> Result<()> {
    if let Some(bad) = x.iter().find(|v| !v.is_finite() || v.abs() > DIVERGENCE_BOUND) {
        return Err(Error::Divergence { epoch, worker, step, reason: format!("parameter magnitude {bad:e}") });
    }
    Ok(())
}

/// Applies one SUM step with direction `g` to the worker's `(x, v)`.
///
/// Fails with a divergence error if the new model is non-finite or exceeds
/// [`DIVERGENCE_BOUND`] in magnitude.
pub fn sum_local_step(state: &mut WorkerState, g: &[f64], hyper: &SumHyper, epoch: usize, step: usize) -> Result<()> {
    if g.len() != state.x.len() {
        return Err(Error::invalid("gradient length does not match the model"));
    }
    if !g.iter().all(|v| v.is_finite()) {
        return Err(Error::Divergence { epoch, worker: state.id, step, reason: "non-finite gradient".into() });
    }
    sum_update(&mut state.x, &mut state.v, g, hyper.alpha, hyper.beta, hyper.eta);
    guard(&state.x, epoch, state.id, step)
}

/// `out_i = sum_j w_ij in_j`, accumulated in ascending `j`.
pub fn gossip_average<V: AsRef<[f64]>>(vectors: &[V], w: &MixingMatrix) -> Result<Vec<ParamVector>> {
    if vectors.len() != w.n() {
        return Err(Error::invalid(format!("gossip over {} vectors with a {}-worker matrix", vectors.len(), w.n())));
    }
    let d = vectors.first().map_or(0, |v| v.as_ref().len());
    if vectors.iter().any(|v| v.as_ref().len() != d) {
        return Err(Error::invalid("gossip vectors have different lengths"));
    }
    Ok((0..w.n())
        .map(|i| {
            let mut acc = vec![0.0; d];
            for (j, v) in vectors.iter().enumerate() {
                let wij = w.weight(i, j);
                if wij != 0.0 {
                    for (a, x) in acc.iter_mut().zip(v.as_ref()) {
                        *a += wij * x;
                    }
                }
            }
            ParamVector(acc)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Purpose;
    use crate::topology::{build_full_mesh, build_ring, MixingMatrix};

    fn worker(x: f64, v: f64) -> WorkerState {
        let mut w = WorkerState::new(0, &ParamVector(vec![x]), RngStream::new(0, 0, 0, Purpose::Minibatch));
        w.v = ParamVector(vec![v]);
        w
    }

    #[test]
    fn scalar_sum_step() {
        // u' = 1 - 0.05 = 0.95, v' = 1 - 0.1 = 0.9, x' = 0.95 + 0.5 (0.9 - 1) = 0.90
        let mut s = worker(1.0, 1.0);
        let h = SumHyper { alpha: 2.0, beta: 0.5, eta: 0.1, lambda: 1.0, k_local: 1, algo: Algorithm::Dsum };
        sum_local_step(&mut s, &[0.5], &h, 0, 0).unwrap();
        assert!((s.x[0] - 0.90).abs() < 1e-15);
        assert!((s.v[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn beta_zero_is_sgd() {
        for alpha in [0.0, 1.0, 3.7] {
            let mut s = worker(2.0, -5.0);
            let h = SumHyper { alpha, beta: 0.0, eta: 0.25, lambda: 1.0, k_local: 1, algo: Algorithm::Dsum };
            sum_local_step(&mut s, &[4.0], &h, 0, 0).unwrap();
            assert_eq!(s.x[0], 1.0);
        }
    }

    #[test]
    fn zero_gradient_fixed_point() {
        let mut s = worker(1.5, 1.5);
        let h = SumHyper::new(Algorithm::Dsum, 0.1);
        sum_local_step(&mut s, &[0.0], &h, 0, 0).unwrap();
        assert_eq!((s.x[0], s.v[0]), (1.5, 1.5));
    }

    #[test]
    fn divergence_is_reported() {
        let mut s = worker(1e11, 1e11);
        let h = SumHyper::new(Algorithm::Dsum, 1.0);
        let err = sum_local_step(&mut s, &[-1e12], &h, 3, 7).unwrap_err();
        match err {
            Error::Divergence { epoch, step, .. } => assert_eq!((epoch, step), (3, 7)),
            e => panic!("{e:?}"),
        }
        assert!(sum_local_step(&mut worker(0.0, 0.0), &[f64::NAN], &h, 0, 0).unwrap_err().is_divergence());
    }

    #[test]
    fn hyper_validation() {
        let ok = SumHyper::new(Algorithm::Gtdsum, 0.1);
        assert!(ok.validate().is_ok());
        for bad in [
            SumHyper { beta: 1.0, ..ok },
            SumHyper { alpha: -0.1, ..ok },
            SumHyper { eta: 0.0, ..ok },
            SumHyper { lambda: 1.5, ..ok },
            SumHyper { k_local: 0, ..ok },
        ] {
            assert!(bad.validate().is_err(), "{bad:?}");
        }
    }

    #[test]
    fn gossip_examples() {
        let mesh = build_full_mesh(3).unwrap();
        let out = gossip_average(&[vec![1.0], vec![2.0], vec![3.0]], &mesh).unwrap();
        for o in &out {
            assert!((o[0] - 2.0).abs() < 1e-15);
        }

        let ring = build_ring(4).unwrap();
        let out = gossip_average(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]], &ring).unwrap();
        let expect = [4.0 / 3.0, 1.0, 2.0, 5.0 / 3.0];
        for (o, e) in out.iter().zip(expect) {
            assert!((o[0] - e).abs() < 1e-15, "{} vs {e}", o[0]);
        }
        let mean: f64 = out.iter().map(|o| o[0]).sum::<f64>() / 4.0;
        assert!((mean - 1.5).abs() < 1e-15);

        assert!(gossip_average(&[vec![1.0]], &ring).is_err());
    }

    #[test]
    fn gossip_identity_leaves_vectors() {
        let eye = MixingMatrix::identity(3);
        let input = [vec![1.0, -2.0], vec![0.5, 7.0], vec![3.25, 0.0]];
        let out = gossip_average(&input, &eye).unwrap();
        for (o, i) in out.iter().zip(&input) {
            assert_eq!(&o.0, i);
        }
    }
}
