//! Comparison pipeline: linear PCA fitted on the training window, then the
//! cumulative-histogram distance and the two-sample Kolmogorov–Smirnov
//! statistic between consecutive chunks in the PCA latent space.

use std::cmp::Ordering;
use std::collections::VecDeque;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::detector::{decision_bounds, MonitorSignal, SignalPoint};
use crate::error::{Error, Result};
use crate::rng::{rng_for, Purpose};
use crate::stream::Chunk;
use crate::topo_map::common_dim;

/// Principal directions of a data window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaModel {
    pub mean_vector: Vec<f64>,
    /// Orthonormal directions, strongest first.
    pub components: Vec<Vec<f64>>,
    /// Variance along each component, descending.
    pub explained_variance: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = dot(v, v).sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    norm
}

impl PcaModel {
    /// Power iteration with deflation on the sample covariance of `data`.
    ///
    /// Each direction is iterated until it moves by less than `tol`
    /// (up to sign) or `max_iters` is reached.
    pub fn fit(data: &[Vec<f64>], k: usize, max_iters: usize, tol: f64, seed: u64) -> Result<Self> {
        let p = common_dim(data)?;
        if k == 0 {
            return Err(Error::invalid("k", "at least one component is required"));
        }
        if data.len() < k.max(2) {
            return Err(Error::invalid(
                "k",
                format!("{} rows cannot support {k} components", data.len()),
            ));
        }
        if k > p {
            return Err(Error::invalid("k", format!("{k} components exceed dimension {p}")));
        }
        if max_iters == 0 {
            return Err(Error::invalid("max-iters", "must be positive"));
        }

        let n = data.len() as f64;
        let mean_vector: Vec<f64> = (0..p)
            .map(|j| data.iter().map(|r| r[j]).sum::<f64>() / n)
            .collect();
        let mut cov = vec![0.0; p * p];
        for row in data {
            let centered: Vec<f64> = row.iter().zip(&mean_vector).map(|(x, m)| x - m).collect();
            for a in 0..p {
                for b in a..p {
                    cov[a * p + b] += centered[a] * centered[b];
                }
            }
        }
        for a in 0..p {
            for b in a..p {
                let v = cov[a * p + b] / (n - 1.0);
                cov[a * p + b] = v;
                cov[b * p + a] = v;
            }
        }
        let trace: f64 = (0..p).map(|a| cov[a * p + a]).sum();
        let rank_tol = 1e-10 * trace.max(f64::MIN_POSITIVE);

        let mut rng = rng_for(seed, Purpose::PcaInit, 0);
        let mut components: Vec<Vec<f64>> = Vec::with_capacity(k);
        let mut explained_variance = Vec::with_capacity(k);
        let matvec = |m: &[f64], v: &[f64]| -> Vec<f64> {
            (0..p).map(|a| dot(&m[a * p..(a + 1) * p], v)).collect()
        };
        for c in 0..k {
            let mut v: Vec<f64> = (0..p).map(|_| StandardNormal.sample(&mut rng)).collect();
            orthogonalize(&mut v, &components);
            normalize(&mut v);
            for _ in 0..max_iters {
                let mut next = matvec(&cov, &v);
                orthogonalize(&mut next, &components);
                if normalize(&mut next) <= rank_tol {
                    break;
                }
                let moved = next
                    .iter()
                    .zip(&v)
                    .map(|(a, b)| (a - b).abs().min((a + b).abs()))
                    .fold(0.0, f64::max);
                v = next;
                if moved < tol {
                    break;
                }
            }
            let lambda = dot(&v, &matvec(&cov, &v));
            if !(lambda > rank_tol) {
                return Err(Error::invalid(
                    "k",
                    format!("component {} has no variance left; data rank is below {k}", c + 1),
                ));
            }
            // deflate
            for a in 0..p {
                for b in 0..p {
                    cov[a * p + b] -= lambda * v[a] * v[b];
                }
            }
            components.push(v);
            explained_variance.push(lambda);
        }

        // power iteration finds eigenvalues in order up to convergence noise
        let mut order: Vec<usize> = (0..k).collect();
        order.sort_by(|&a, &b| {
            explained_variance[b]
                .partial_cmp(&explained_variance[a])
                .unwrap_or(Ordering::Equal)
        });
        Ok(PcaModel {
            mean_vector,
            components: order.iter().map(|&i| components[i].clone()).collect(),
            explained_variance: order.iter().map(|&i| explained_variance[i]).collect(),
        })
    }

    pub fn k(&self) -> usize {
        self.components.len()
    }

    pub fn project_one(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.mean_vector.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mean_vector.len(),
                actual: x.len(),
            });
        }
        let centered: Vec<f64> = x.iter().zip(&self.mean_vector).map(|(a, m)| a - m).collect();
        Ok(self.components.iter().map(|c| dot(c, &centered)).collect())
    }

    /// Latent coordinates of every sample (`n × k`).
    pub fn project(&self, samples: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        samples.iter().map(|x| self.project_one(x)).collect()
    }
}

/// Gram–Schmidt against already accepted directions.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) {
    for b in basis {
        let proj = dot(v, b);
        v.iter_mut().zip(b).for_each(|(x, y)| *x -= proj * y);
    }
}

fn column(latent: &[Vec<f64>], j: usize) -> Vec<f64> {
    latent.iter().map(|r| r[j]).collect()
}

fn latent_width(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<usize> {
    let ka = common_dim(a)?;
    let kb = common_dim(b)?;
    if ka != kb {
        return Err(Error::DimensionMismatch {
            expected: ka,
            actual: kb,
        });
    }
    Ok(ka)
}

/// Largest gap between the binned empirical CDFs of two latent chunks,
/// maximized over components. Bins span the pooled range of each component.
pub fn cumulative_hist_distance(latent_a: &[Vec<f64>], latent_b: &[Vec<f64>], n_bins: usize) -> Result<f64> {
    if n_bins == 0 {
        return Err(Error::invalid("hist-bins", "must be positive"));
    }
    let k = latent_width(latent_a, latent_b)?;
    let mut worst = 0.0f64;
    for j in 0..k {
        let a = column(latent_a, j);
        let b = column(latent_b, j);
        worst = worst.max(binned_cdf_gap(&a, &b, n_bins));
    }
    Ok(worst)
}

fn binned_cdf_gap(a: &[f64], b: &[f64], n_bins: usize) -> f64 {
    let (lo, hi) = a
        .iter()
        .chain(b)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if hi <= lo {
        return 0.0;
    }
    let width = (hi - lo) / n_bins as f64;
    let histogram = |values: &[f64]| {
        let mut counts = vec![0usize; n_bins];
        for &v in values {
            let bin = (((v - lo) / width) as usize).min(n_bins - 1);
            counts[bin] += 1;
        }
        counts
    };
    let (ha, hb) = (histogram(a), histogram(b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut ca, mut cb, mut gap) = (0usize, 0usize, 0.0f64);
    for (x, y) in ha.iter().zip(&hb) {
        ca += x;
        cb += y;
        gap = gap.max((ca as f64 / na - cb as f64 / nb).abs());
    }
    gap
}

/// Exact two-sample Kolmogorov–Smirnov statistic `sup |F_a − F_b|`.
pub fn ks_statistic(sample_a: &[f64], sample_b: &[f64]) -> Result<f64> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::Empty("KS sample"));
    }
    let sorted = |s: &[f64]| {
        let mut v = s.to_vec();
        v.sort_by(f64::total_cmp);
        v
    };
    let (a, b) = (sorted(sample_a), sorted(sample_b));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// KS statistic per latent component, maximized.
pub fn ks_latent(latent_a: &[Vec<f64>], latent_b: &[Vec<f64>]) -> Result<f64> {
    let k = latent_width(latent_a, latent_b)?;
    (0..k).try_fold(0.0f64, |worst, j| {
        Ok(worst.max(ks_statistic(&column(latent_a, j), &column(latent_b, j))?))
    })
}

/// Consecutive-chunk scores of the baseline.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BaselineSignals {
    pub hist: MonitorSignal,
    pub ks: MonitorSignal,
}

fn unflagged(chunk_index: usize, score: f64) -> SignalPoint {
    SignalPoint {
        chunk_index,
        score,
        lower: f64::NEG_INFINITY,
        upper: f64::INFINITY,
        shift: false,
    }
}

/// Scores every chunk against its predecessor in the latent space.
pub fn baseline_signals<'a, I>(model: &PcaModel, chunks: I, n_bins: usize) -> Result<BaselineSignals>
where
    I: IntoIterator<Item = &'a Chunk>,
{
    let mut out = BaselineSignals::default();
    let mut prev: Option<Vec<Vec<f64>>> = None;
    for chunk in chunks {
        let latent = model.project(&chunk.samples)?;
        if let Some(prev) = prev.as_deref() {
            out.hist
                .points
                .push(unflagged(chunk.index, cumulative_hist_distance(prev, &latent, n_bins)?));
            out.ks.points.push(unflagged(chunk.index, ks_latent(prev, &latent)?));
        }
        prev = Some(latent);
    }
    Ok(out)
}

/// Applies the sliding-window `alpha·std` rule to an existing signal.
///
/// Same warm-up as the monitor; there is no model to refresh, so the
/// window is never cleared.
pub fn flag_signal(signal: &mut MonitorSignal, alpha: f64, window: usize) -> Result<()> {
    if window == 0 {
        return Err(Error::invalid("window", "must be at least 1"));
    }
    let mut recent: VecDeque<f64> = VecDeque::with_capacity(window);
    for point in &mut signal.points {
        if recent.len() == window {
            let (lower, upper) = decision_bounds(recent.make_contiguous(), alpha)?;
            point.lower = lower;
            point.upper = upper;
            point.shift = point.score < lower || point.score > upper;
            recent.pop_front();
        }
        recent.push_back(point.score);
    }
    Ok(())
}
