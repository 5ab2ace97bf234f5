//! Kullback–Leibler divergence: the discrete sum over a shared support and
//! the closed form between two Gaussians. Natural logarithm throughout.

use crate::embedding::GaussianSummary;
use crate::error::{Error, Result};

/// Probability assigned to empty `q` bins before renormalizing.
pub const SMOOTHING_EPS: f64 = 1e-10;

const SUM_TOLERANCE: f64 = 1e-9;

/// A probability mass function over labelled support points.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePmf {
    support: Vec<i64>,
    probs: Vec<f64>,
}

impl DiscretePmf {
    pub fn new(support: Vec<i64>, probs: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::Empty("pmf support"));
        }
        if support.len() != probs.len() {
            return Err(Error::DimensionMismatch {
                expected: support.len(),
                actual: probs.len(),
            });
        }
        let mut sorted = support.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("support", "labels must be distinct"));
        }
        if probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("probs", "probabilities must be finite and nonnegative"));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > SUM_TOLERANCE {
            return Err(Error::invalid("probs", format!("probabilities sum to {total}")));
        }
        Ok(DiscretePmf { support, probs })
    }

    /// Normalized histogram of `counts` over labels `0..counts.len()`.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::Empty("histogram"));
        }
        let probs = counts.iter().map(|&c| c as f64 / total as f64).collect();
        DiscretePmf::new((0..counts.len() as i64).collect(), probs)
    }

    pub fn support(&self) -> &[i64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn prob_of(&self, label: i64) -> Option<f64> {
        self.support
            .iter()
            .position(|&s| s == label)
            .map(|i| self.probs[i])
    }
}

/// `Σ p(s)·ln(p(s)/q(s))` over the shared support.
///
/// Supports may list their labels in any order but must contain the same
/// labels. Zero-probability bins of `q` are lifted to [`SMOOTHING_EPS`] and
/// `q` is renormalized; terms with `p(s) = 0` contribute nothing.
pub fn kl_discrete(p: &DiscretePmf, q: &DiscretePmf) -> Result<f64> {
    if p.support.len() != q.support.len() {
        return Err(Error::SupportMismatch);
    }
    let aligned = p
        .support
        .iter()
        .map(|&s| q.prob_of(s).ok_or(Error::SupportMismatch))
        .collect::<Result<Vec<f64>>>()?;

    let smoothed: Vec<f64> = aligned.iter().map(|&v| if v > 0.0 { v } else { SMOOTHING_EPS }).collect();
    let norm: f64 = smoothed.iter().sum();
    let kl = p
        .probs
        .iter()
        .zip(&smoothed)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / (qi / norm)).ln())
        .sum::<f64>();
    Ok(kl.max(0.0))
}

/// Closed-form `KL(p ‖ q)` between two Gaussians:
/// `ln(σ_q/σ_p) + (σ_p² + (μ_p − μ_q)²)/(2σ_q²) − 1/2`.
pub fn kl_gaussian(p: &GaussianSummary, q: &GaussianSummary) -> Result<f64> {
    kl_gaussian_params(p.mu, p.var, q.mu, q.var)
}

/// [`kl_gaussian`] on raw `(mean, variance)` pairs.
pub fn kl_gaussian_params(mu_p: f64, var_p: f64, mu_q: f64, var_q: f64) -> Result<f64> {
    if !(var_p > 0.0 && var_q > 0.0) {
        return Err(Error::invalid(
            "variance",
            format!("Gaussian KL needs positive variances, got {var_p} and {var_q}"),
        ));
    }
    if var_p == var_q && mu_p == mu_q {
        return Ok(0.0);
    }
    let diff = mu_p - mu_q;
    let kl = 0.5 * (var_q / var_p).ln() + (var_p + diff * diff) / (2.0 * var_q) - 0.5;
    // rounding can leave tiny negatives when p ≈ q
    Ok(kl.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(mu: f64, var: f64) -> GaussianSummary {
        GaussianSummary { mu, var, n: 100 }
    }

    #[test]
    fn discrete_identity_is_zero() {
        let p = DiscretePmf::new(vec![0, 1, 2], vec![0.2, 0.5, 0.3]).unwrap();
        assert_eq!(kl_discrete(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn discrete_single_surviving_term() {
        let p = DiscretePmf::new(vec![0, 1], vec![1.0, 0.0]).unwrap();
        let q = DiscretePmf::new(vec![0, 1], vec![0.5, 0.5]).unwrap();
        assert!((kl_discrete(&p, &q).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn discrete_aligns_label_order() {
        let p = DiscretePmf::new(vec![0, 1], vec![0.25, 0.75]).unwrap();
        let q = DiscretePmf::new(vec![1, 0], vec![0.5, 0.5]).unwrap();
        let expected = 0.25 * (0.25f64 / 0.5).ln() + 0.75 * (0.75f64 / 0.5).ln();
        assert!((kl_discrete(&p, &q).unwrap() - expected).abs() < 1e-15);
    }

    #[test]
    fn discrete_support_mismatch() {
        let p = DiscretePmf::new(vec![0, 1], vec![0.5, 0.5]).unwrap();
        let q = DiscretePmf::new(vec![0, 2], vec![0.5, 0.5]).unwrap();
        let r = DiscretePmf::new(vec![0], vec![1.0]).unwrap();
        assert!(matches!(kl_discrete(&p, &q), Err(Error::SupportMismatch)));
        assert!(matches!(kl_discrete(&p, &r), Err(Error::SupportMismatch)));
    }

    #[test]
    fn discrete_empty_q_bin_is_smoothed() {
        let p = DiscretePmf::new(vec![0, 1], vec![0.5, 0.5]).unwrap();
        let q = DiscretePmf::new(vec![0, 1], vec![1.0, 0.0]).unwrap();
        let kl = kl_discrete(&p, &q).unwrap();
        assert!(kl.is_finite() && kl > 10.0);
    }

    #[test]
    fn pmf_validation() {
        assert!(DiscretePmf::new(vec![0, 1], vec![0.5, 0.6]).is_err());
        assert!(DiscretePmf::new(vec![0, 0], vec![0.5, 0.5]).is_err());
        assert!(DiscretePmf::new(vec![0, 1], vec![1.5, -0.5]).is_err());
        assert!(DiscretePmf::from_counts(&[0, 0]).is_err());
        assert_eq!(DiscretePmf::from_counts(&[1, 3]).unwrap().probs(), &[0.25, 0.75]);
    }

    #[test]
    fn gaussian_spot_values() {
        assert_eq!(kl_gaussian(&g(1.0, 2.0), &g(1.0, 2.0)).unwrap(), 0.0);
        assert!((kl_gaussian(&g(0.0, 1.0), &g(1.0, 1.0)).unwrap() - 0.5).abs() < 1e-12);
        let expected = 2f64.ln() + 0.125 - 0.5;
        assert!((kl_gaussian(&g(0.0, 1.0), &g(0.0, 4.0)).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn gaussian_is_asymmetric() {
        let a = kl_gaussian(&g(0.0, 1.0), &g(0.0, 4.0)).unwrap();
        let b = kl_gaussian(&g(0.0, 4.0), &g(0.0, 1.0)).unwrap();
        assert!((a - b).abs() > 0.1);
    }

    #[test]
    fn gaussian_rejects_nonpositive_variance() {
        assert!(kl_gaussian(&g(0.0, 0.0), &g(0.0, 1.0)).is_err());
        assert!(kl_gaussian(&g(0.0, 1.0), &g(0.0, -1.0)).is_err());
    }
}
