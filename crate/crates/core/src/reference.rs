//! Plain textbook forms of the classical methods, written out loop by loop
//! and used only to cross-check the optimizer in tests.

use crate::error::{Error, Result};
use crate::vector::ParamVector;

/// State of a single-worker reference optimizer.
#[derive(Clone, Debug, PartialEq)]
pub struct ReferenceState {
    pub x: ParamVector,
    /// Momentum buffer, zero at the start.
    pub u: ParamVector,
    /// Model before the last step (one-line forms only).
    pub prev_x: Option<ParamVector>,
    /// Gradient of the last step (one-line Nesterov form only).
    pub prev_g: Option<ParamVector>,
}

impl ReferenceState {
    pub fn new(x0: &[f64]) -> Self {
        Self { x: ParamVector(x0.to_vec()), u: ParamVector::zeros(x0.len()), prev_x: None, prev_g: None }
    }
}

/// Heavy ball: `u <- beta u + g; x <- x - eta u`.
pub fn hb_step(s: &mut ReferenceState, g: &[f64], beta: f64, eta: f64) {
    for k in 0..g.len() {
        s.u[k] = beta * s.u[k] + g[k];
        s.x[k] -= eta * s.u[k];
    }
}

/// Nesterov: `u <- beta u + g; x <- x - eta (beta u + g)`.
pub fn nesterov_step(s: &mut ReferenceState, g: &[f64], beta: f64, eta: f64) {
    for k in 0..g.len() {
        s.u[k] = beta * s.u[k] + g[k];
        let dir = beta * s.u[k] + g[k];
        s.x[k] -= eta * dir;
    }
}

/// Heavy ball one-line form `x' = x - eta g + beta (x - x_prev)`; the first
/// step (no `x_prev`) is plain SGD.
pub fn hb_one_line_step(s: &mut ReferenceState, g: &[f64], beta: f64, eta: f64) {
    let prev = s.prev_x.clone().unwrap_or_else(|| s.x.clone());
    let old = s.x.clone();
    for k in 0..g.len() {
        s.x[k] = old[k] - eta * g[k] + beta * (old[k] - prev[k]);
    }
    s.prev_x = Some(old);
}

/// Nesterov one-line form
/// `x' = x - eta g + beta (x - eta g - x_prev + eta g_prev)`; the first step
/// is `x' = x - eta (1 + beta) g`.
pub fn nesterov_one_line_step(s: &mut ReferenceState, g: &[f64], beta: f64, eta: f64) {
    let old = s.x.clone();
    match (&s.prev_x, &s.prev_g) {
        (Some(px), Some(pg)) => {
            for k in 0..g.len() {
                s.x[k] = old[k] - eta * g[k] + beta * (old[k] - eta * g[k] - px[k] + eta * pg[k]);
            }
        }
        _ => {
            for k in 0..g.len() {
                s.x[k] = old[k] - eta * (1.0 + beta) * g[k];
            }
        }
    }
    s.prev_x = Some(old);
    s.prev_g = Some(ParamVector(g.to_vec()));
}

/// Plain `x <- x - eta g`.
pub fn sgd_step(x: &mut [f64], g: &[f64], eta: f64) {
    for k in 0..g.len() {
        x[k] -= eta * g[k];
    }
}

/// `out_i = sum_j w[i][j] vs[j]` with a dense weight table.
pub fn mix(w: &[Vec<f64>], vs: &[ParamVector]) -> Vec<ParamVector> {
    let d = vs[0].len();
    let mut out = vec![ParamVector::zeros(d); vs.len()];
    for i in 0..vs.len() {
        for j in 0..vs.len() {
            for k in 0..d {
                out[i][k] += w[i][j] * vs[j][k];
            }
        }
    }
    out
}

/// Per-worker state of the reference gradient-tracking method.
#[derive(Clone, Debug)]
pub struct GtWorker {
    pub x: ParamVector,
    pub y: ParamVector,
    pub g_old: ParamVector,
}

impl GtWorker {
    /// `y` and `g_old` both start at the first gradient.
    pub fn new(x0: &[f64], g0: ParamVector) -> Self {
        Self { x: ParamVector(x0.to_vec()), y: g0.clone(), g_old: g0 }
    }
}

/// One round of classical gradient tracking:
/// `x_i <- sum_j w_ij (x_j - eta y_j)`, then with `g_j` the fresh gradient
/// at the new `x_j`, `y_i <- sum_j w_ij (y_j + g_j - g_old_j)`.
pub fn vanilla_gt_step<G>(ws: &mut [GtWorker], w: &[Vec<f64>], eta: f64, mut grad: G) -> Result<()>
where
    G: FnMut(usize, &ParamVector) -> Result<ParamVector>,
{
    let stepped: Vec<ParamVector> =
        ws.iter().map(|s| ParamVector(s.x.iter().zip(s.y.iter()).map(|(x, y)| x - eta * y).collect())).collect();
    let xs = mix(w, &stepped);
    let mut corrected = Vec::with_capacity(ws.len());
    let mut fresh = Vec::with_capacity(ws.len());
    for (j, s) in ws.iter().enumerate() {
        let g = grad(j, &xs[j])?;
        corrected.push(ParamVector((0..g.len()).map(|k| s.y[k] + g[k] - s.g_old[k]).collect()));
        fresh.push(g);
    }
    let ys = mix(w, &corrected);
    for (((s, x), y), g) in ws.iter_mut().zip(xs).zip(ys).zip(fresh) {
        s.x = x;
        s.y = y;
        s.g_old = g;
    }
    Ok(())
}

/// `(z, c)` with `z = x + beta/(1-beta) (x - v)` and `c = x - v`.
pub fn auxiliary_pair(x: &[f64], v: &[f64], beta: f64) -> (ParamVector, ParamVector) {
    let b = beta / (1.0 - beta);
    let c: Vec<f64> = x.iter().zip(v).map(|(a, b)| a - b).collect();
    let z = x.iter().zip(&c).map(|(a, ck)| a + b * ck).collect();
    (ParamVector(z), ParamVector(c))
}

/// One local epoch of SUM iterates: `x[0..=K]`, `v[0..=K]` and the directions
/// `g[0..K]` that produced them.
#[derive(Clone, Debug, Default)]
pub struct EpochTrajectory {
    pub x: Vec<ParamVector>,
    pub v: Vec<ParamVector>,
    pub g: Vec<ParamVector>,
}

/// Largest violation along the trajectory of
/// `z' = z - eta/(1-beta) g` and `c' = beta c + (alpha - alpha beta - 1) eta g`.
pub fn auxiliary_violation(t: &EpochTrajectory, alpha: f64, beta: f64, eta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::invalid(format!("beta must lie in [0, 1), got {beta}")));
    }
    if t.x.len() != t.g.len() + 1 || t.v.len() != t.x.len() {
        return Err(Error::invalid("trajectory needs K+1 states and K directions"));
    }
    let mut worst: f64 = 0.0;
    for tau in 0..t.g.len() {
        let (z0, c0) = auxiliary_pair(&t.x[tau], &t.v[tau], beta);
        let (z1, c1) = auxiliary_pair(&t.x[tau + 1], &t.v[tau + 1], beta);
        let g = &t.g[tau];
        for k in 0..g.len() {
            let ez = z1[k] - z0[k] + eta / (1.0 - beta) * g[k];
            let ec = c1[k] - beta * c0[k] - (alpha - alpha * beta - 1.0) * eta * g[k];
            worst = worst.max(ez.abs()).max(ec.abs());
        }
    }
    Ok(worst)
}
