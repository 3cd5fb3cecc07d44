//! Datasets, non-IID partitioning across workers, and seeded minibatches.

mod csv;
mod idx;
mod partition;
mod rng;

use std::path::{Path, PathBuf};

use rand_distr::{Distribution, StandardNormal};
use serde::Deserialize;

pub use self::csv::load_csv;
pub use self::idx::{load_idx_pair, read_idx, IdxArray};
pub use self::partition::{dirichlet_partition, sample_minibatch, Shard};
pub use self::rng::{Purpose, RngStream};

use crate::error::{Error, Result};

/// Labelled samples with a fixed feature dimension, stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    name: String,
    dim: usize,
    classes: usize,
    features: Vec<f64>,
    labels: Vec<usize>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        classes: usize,
        features: Vec<f64>,
        labels: Vec<usize>,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::invalid("dataset has no samples"));
        }
        if dim == 0 || features.len() != labels.len() * dim {
            return Err(Error::invalid(format!(
                "feature buffer of length {} does not hold {} samples of dimension {dim}",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::invalid(format!("label {bad} out of range for {classes} classes")));
        }
        Ok(Self { name: name.into(), dim, classes, features, labels })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    #[inline]
    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    #[inline]
    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Keeps only the first `m` samples.
    pub fn truncated(mut self, m: usize) -> Self {
        if m < self.len() {
            self.labels.truncate(m);
            self.features.truncate(m * self.dim);
        }
        self
    }
}

/// Gaussian blobs: one random centre per class, isotropic noise around it.
#[derive(Clone, Copy, Debug, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub samples: usize,
    #[serde(default = "default_blob_stddev")]
    pub blob_stddev: f64,
}

fn default_blob_stddev() -> f64 {
    1.0
}

impl SyntheticSpec {
    fn centers(&self, seed: u64) -> Vec<f64> {
        let mut rng = RngStream::new(seed, 0, 0, Purpose::SyntheticCenters);
        (0..self.classes * self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    fn draw(&self, name: &str, seed: u64, samples: usize, purpose: Purpose) -> Result<Dataset> {
        if self.classes == 0 || self.dim == 0 || samples == 0 {
            return Err(Error::invalid("synthetic data needs classes, dim and samples >= 1"));
        }
        if !(self.blob_stddev >= 0.0) {
            return Err(Error::invalid("blob_stddev must be non-negative"));
        }
        let centers = self.centers(seed);
        let mut rng = RngStream::new(seed, 0, 0, purpose);
        let mut features = Vec::with_capacity(samples * self.dim);
        let mut labels = Vec::with_capacity(samples);
        for i in 0..samples {
            let c = i % self.classes;
            labels.push(c);
            for k in 0..self.dim {
                let z: f64 = StandardNormal.sample(&mut rng);
                features.push(centers[c * self.dim + k] + self.blob_stddev * z);
            }
        }
        Dataset::new(name, self.dim, self.classes, features, labels)
    }

    /// Training set with balanced labels (`label = i mod classes`).
    pub fn generate(&self, seed: u64) -> Result<Dataset> {
        self.draw("synthetic-train", seed, self.samples, Purpose::SyntheticTrain)
    }

    /// Held-out samples around the same class centres as [`generate`](Self::generate).
    pub fn generate_test(&self, seed: u64, samples: usize) -> Result<Dataset> {
        self.draw("synthetic-test", seed, samples, Purpose::SyntheticTest)
    }
}

/// On-disk dataset encodings.
#[derive(Clone, Debug, PartialEq)]
pub enum DataFormat {
    /// MNIST-family IDX pair; the main path is the image file.
    Idx { labels: PathBuf },
    /// `label,feat0,feat1,...` rows.
    Csv,
}

pub fn load_dataset(path: &Path, format: &DataFormat) -> Result<Dataset> {
    match format {
        DataFormat::Idx { labels } => load_idx_pair(path, labels),
        DataFormat::Csv => load_csv(path),
    }
}
