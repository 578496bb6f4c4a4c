//! Deterministic synthetic classification data.
//!
//! Each class is a mixture of isotropic Gaussian clusters whose centers lie
//! on a sphere of radius `separation`. Several clusters per class make the
//! task non-linearly separable; `noise_std` relative to `separation` sets
//! the overlap.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::child_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetSpec {
    pub classes: usize,
    pub dim: usize,
    pub clusters_per_class: usize,
    pub separation: f64,
    pub noise_std: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            classes: 4,
            dim: 16,
            clusters_per_class: 3,
            separation: 3.0,
            noise_std: 1.0,
            train_size: 5000,
            test_size: 4000,
            seed: 2025,
        }
    }
}

impl DatasetSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 || self.dim == 0 || self.clusters_per_class == 0 {
            return Err(Error::Config("dataset needs >= 2 classes, dim >= 1, >= 1 cluster".into()));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(Error::Config("dataset splits must be non-empty".into()));
        }
        if !(self.separation > 0.0 && self.noise_std >= 0.0)
            || !self.separation.is_finite()
            || !self.noise_std.is_finite()
        {
            return Err(Error::Config("separation must be > 0 and noise_std >= 0".into()));
        }
        Ok(())
    }

    /// Generate the (train, test) pair.
    pub fn generate(&self) -> Result<(Dataset, Dataset)> {
        self.validate()?;
        let mut rng = child_rng(self.seed, &[0]);
        let n_centers = self.classes * self.clusters_per_class;
        let centers: Vec<Vec<f64>> = (0..n_centers)
            .map(|_| {
                let v: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-12);
                v.into_iter().map(|x| x * self.separation / norm).collect()
            })
            .collect();
        let sample = |n: usize, label: u64| {
            let mut rng = child_rng(self.seed, &[label]);
            let mut x = Vec::with_capacity(n * self.dim);
            let mut y = Vec::with_capacity(n);
            for _ in 0..n {
                let center = rng.random_range(0..n_centers);
                let class = center % self.classes;
                for &c in &centers[center] {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    x.push(c + self.noise_std * z);
                }
                y.push(class);
            }
            Dataset {
                dim: self.dim,
                classes: self.classes,
                x,
                y,
            }
        };
        Ok((sample(self.train_size, 1), sample(self.test_size, 2)))
    }
}

/// Row-major features with integer labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub dim: usize,
    pub classes: usize,
    pub x: Vec<f64>,
    pub y: Vec<usize>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    /// The first `n` samples.
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            dim: self.dim,
            classes: self.classes,
            x: self.x[..n * self.dim].to_vec(),
            y: self.y[..n].to_vec(),
        }
    }
}
