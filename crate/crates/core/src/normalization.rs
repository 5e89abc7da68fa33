//! Per-dimension z-score statistics over the stacked trip vector `[s; a; q]`.
//!
//! Dimensions are treated as uncorrelated, so only the diagonal of the
//! sample covariance (divisor `N - 1`) is kept. Columns whose variance falls
//! below [`VARIANCE_TOLERANCE`] keep their slot and get a unit scale.

use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fsio;
use crate::trip_data::Dataset;

pub const VARIANCE_TOLERANCE: f64 = 1e-12;

/// Where the env, behavior and performance blocks sit inside the stacked vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Layout {
    pub env: usize,
    pub behavior: usize,
    pub performance: usize,
}

impl Layout {
    pub fn total(&self) -> usize {
        self.env + self.behavior + self.performance
    }

    pub fn env_range(&self) -> Range<usize> {
        0..self.env
    }

    pub fn behavior_range(&self) -> Range<usize> {
        self.env..self.env + self.behavior
    }

    pub fn performance_range(&self) -> Range<usize> {
        self.env + self.behavior..self.total()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    mean: Vec<f64>,
    std: Vec<f64>,
    degenerate_dims: Vec<usize>,
    layout: Layout,
}

impl NormalizationStats {
    pub fn fit(ds: &Dataset) -> Result<Self> {
        let s = ds.schema();
        let layout = Layout {
            env: s.env_dim(),
            behavior: s.behavior_dim(),
            performance: s.performance_dim(),
        };
        let rows: Vec<Vec<f64>> = ds.records().iter().map(|r| r.stacked()).collect();
        Self::fit_rows(&rows, layout)
    }

    /// Fits on pre-stacked rows of length `layout.total()`.
    pub fn fit_rows(rows: &[Vec<f64>], layout: Layout) -> Result<Self> {
        let n = rows.len();
        if n < 2 {
            return Err(Error::TooFewSamples(n));
        }
        let d = layout.total();
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::dims(d, bad.len()));
        }
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);

        let mut var = vec![0.0; d];
        for r in rows {
            for ((acc, v), m) in var.iter_mut().zip(r).zip(&mean) {
                let c = v - m;
                *acc += c * c;
            }
        }
        let mut degenerate_dims = Vec::new();
        let std = var
            .iter()
            .enumerate()
            .map(|(i, &ss)| {
                let v = ss / (n - 1) as f64;
                if v < VARIANCE_TOLERANCE {
                    degenerate_dims.push(i);
                    1.0
                } else {
                    v.sqrt()
                }
            })
            .collect();
        Ok(NormalizationStats {
            mean,
            std,
            degenerate_dims,
            layout,
        })
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn std(&self) -> &[f64] {
        &self.std
    }

    pub fn degenerate_dims(&self) -> &[usize] {
        &self.degenerate_dims
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn normalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.normalize_range(0..self.dim(), x)
    }

    pub fn denormalize(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.denormalize_range(0..self.dim(), x)
    }

    /// Normalizes `x` as the sub-block `range` of the stacked vector.
    pub fn normalize_range(&self, range: Range<usize>, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != range.len() {
            return Err(Error::dims(range.len(), x.len()));
        }
        Ok(x.iter()
            .zip(&self.mean[range.clone()])
            .zip(&self.std[range])
            .map(|((v, m), s)| (v - m) / s)
            .collect())
    }

    pub fn denormalize_range(&self, range: Range<usize>, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != range.len() {
            return Err(Error::dims(range.len(), x.len()));
        }
        Ok(x.iter()
            .zip(&self.mean[range.clone()])
            .zip(&self.std[range])
            .map(|((v, m), s)| v * s + m)
            .collect())
    }

    pub fn normalize_env(&self, s: &[f64]) -> Result<Vec<f64>> {
        self.normalize_range(self.layout.env_range(), s)
    }

    pub fn normalize_behavior(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.normalize_range(self.layout.behavior_range(), a)
    }

    pub fn normalize_performance(&self, q: &[f64]) -> Result<Vec<f64>> {
        self.normalize_range(self.layout.performance_range(), q)
    }

    pub fn denormalize_behavior(&self, a: &[f64]) -> Result<Vec<f64>> {
        self.denormalize_range(self.layout.behavior_range(), a)
    }

    /// Scale of performance dimension `index` (within the q block).
    pub fn performance_std(&self, index: usize) -> f64 {
        self.std[self.layout.performance_range().start + index]
    }

    /// Content digest; two models may only be combined when these agree.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for v in self.mean.iter().chain(&self.std) {
            hasher.update(v.to_bits().to_le_bytes());
        }
        for n in [self.layout.env, self.layout.behavior, self.layout.performance] {
            hasher.update((n as u64).to_le_bytes());
        }
        hex::encode(&hasher.finalize()[..8])
    }

    pub fn load(path: &Path) -> Result<Self> {
        let stats: Self = fsio::read_json(path)?;
        let d = stats.layout.total();
        if stats.mean.len() != d || stats.std.len() != d {
            return Err(Error::dims(d, stats.mean.len().max(stats.std.len())));
        }
        if stats.std.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "{}: std entries must be finite and positive",
                path.display()
            )));
        }
        Ok(stats)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fsio::write_json(path, self)
    }
}
