//! Flat parameter vectors and the handful of fixed-order reductions the
//! algorithms need.

use std::ops::{Deref, DerefMut};

/// A model (or gradient, tracker, ...) as one flat vector in R^d.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamVector(pub Vec<f64>);

impl ParamVector {
    pub fn zeros(d: usize) -> Self {
        Self(vec![0.0; d])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }

    pub fn norm_sq(&self) -> f64 {
        norm_sq(&self.0)
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for ParamVector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for ParamVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

pub fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Coordinate-wise mean of equal-length vectors, accumulated in index order.
pub fn mean<V: AsRef<[f64]>>(vs: &[V]) -> ParamVector {
    let d = vs.first().map_or(0, |v| v.as_ref().len());
    let mut acc = vec![0.0; d];
    for v in vs {
        for (a, x) in acc.iter_mut().zip(v.as_ref()) {
            *a += x;
        }
    }
    let inv = vs.len() as f64;
    for a in acc.iter_mut() {
        *a /= inv;
    }
    ParamVector(acc)
}

impl AsRef<[f64]> for ParamVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}
