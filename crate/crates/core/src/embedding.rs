//! Per-sample latent representation: the matrix of distances from a sample
//! to every neuron, its moment summary, and the per-chunk Gaussian fit of
//! the monitoring statistic (the mean distance).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::topo_map::FeatureMap;

/// Variance below which a sequence is treated as constant.
pub const ZERO_VARIANCE: f64 = 1e-12;

/// Lower bound applied to a chunk's fitted variance.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Distances from one sample to every neuron, laid out like the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DistanceMatrix {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Row-major entries.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn moments(&self) -> MomentVector {
        moments_of(&self.values)
    }
}

pub fn distance_matrix(map: &FeatureMap, x: &[f64]) -> Result<DistanceMatrix> {
    map.check_dim(x)?;
    let values = map
        .neurons()
        .map(|w| {
            x.iter()
                .zip(w)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    Ok(DistanceMatrix {
        rows: map.grid().rows(),
        cols: map.grid().cols(),
        values,
    })
}

/// Mean, population variance, skewness and (non-excess) kurtosis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    pub m1: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

pub fn compute_moments(values: &[f64]) -> Result<MomentVector> {
    if values.is_empty() {
        return Err(Error::Empty("moment input"));
    }
    Ok(moments_of(values))
}

fn moments_of(values: &[f64]) -> MomentVector {
    let n = values.len() as f64;
    let m1 = values.iter().sum::<f64>() / n;
    let (mut c2, mut c3, mut c4) = (0.0, 0.0, 0.0);
    for v in values {
        let d = v - m1;
        let d2 = d * d;
        c2 += d2;
        c3 += d2 * d;
        c4 += d2 * d2;
    }
    let m2 = c2 / n;
    if m2 < ZERO_VARIANCE {
        return MomentVector {
            m1,
            m2,
            m3: 0.0,
            m4: 0.0,
        };
    }
    MomentVector {
        m1,
        m2,
        m3: (c3 / n) / m2.powf(1.5),
        m4: (c4 / n) / (m2 * m2),
    }
}

/// The monitoring statistic of one sample: mean distance to all neurons.
pub fn sample_statistic(map: &FeatureMap, x: &[f64]) -> Result<f64> {
    Ok(distance_matrix(map, x)?.mean())
}

/// Gaussian fit of a chunk's per-sample statistics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSummary {
    pub mu: f64,
    /// Unbiased variance, floored at [`VARIANCE_FLOOR`].
    pub var: f64,
    pub n: usize,
}

impl GaussianSummary {
    /// Fits sample mean and unbiased variance to `values` (at least two).
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::ChunkTooSmall {
                index: 0,
                len: values.len(),
            });
        }
        let n = values.len() as f64;
        let mu = values.iter().sum::<f64>() / n;
        let ss: f64 = values.iter().map(|v| (v - mu) * (v - mu)).sum();
        Ok(GaussianSummary {
            mu,
            var: (ss / (n - 1.0)).max(VARIANCE_FLOOR),
            n: values.len(),
        })
    }

    pub fn std(&self) -> f64 {
        self.var.sqrt()
    }
}

pub fn chunk_summary(map: &FeatureMap, samples: &[Vec<f64>]) -> Result<GaussianSummary> {
    if samples.len() < 2 {
        return Err(Error::ChunkTooSmall {
            index: 0,
            len: samples.len(),
        });
    }
    let stats = samples
        .iter()
        .map(|x| sample_statistic(map, x))
        .collect::<Result<Vec<_>>>()?;
    GaussianSummary::fit(&stats)
}

/// Moments of each sample's distance matrix, one vector per sample.
pub fn sample_moments(map: &FeatureMap, samples: &[Vec<f64>]) -> Result<Vec<MomentVector>> {
    samples
        .iter()
        .map(|x| Ok(distance_matrix(map, x)?.moments()))
        .collect()
}

/// Per-chunk average of the per-sample moment vectors.
pub fn chunk_moments(map: &FeatureMap, samples: &[Vec<f64>]) -> Result<MomentVector> {
    let per_sample = sample_moments(map, samples)?;
    if per_sample.is_empty() {
        return Err(Error::Empty("chunk"));
    }
    let n = per_sample.len() as f64;
    let sum = per_sample.iter().fold([0.0; 4], |acc, m| {
        [acc[0] + m.m1, acc[1] + m.m2, acc[2] + m.m3, acc[3] + m.m4]
    });
    Ok(MomentVector {
        m1: sum[0] / n,
        m2: sum[1] / n,
        m3: sum[2] / n,
        m4: sum[3] / n,
    })
}
