//! Comparators for IMP: the alignment heuristic, hard thresholding of the
//! least-squares estimate, and iterative hard thresholding (IHT).

use nalgebra::DVector;

use crate::error::{ImpError, Result};
use crate::features::FeatureSet;

const DIVERGENCE_NORM: f64 = 1e12;

/// Indices sorted by `|phi_j^T y|` ascending, ties to the lowest index.
pub fn alignment_order(features: &FeatureSet) -> Vec<usize> {
    order_by_magnitude(&features.projections())
}

/// Stable ascending argsort of `|v_i|`.
pub fn order_by_magnitude(v: &DVector<f64>) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(a.cmp(&b)));
    order
}

/// `H_tau(z) = z` if `|z| > tau`, else 0.
pub fn hard_threshold(v: &DVector<f64>, tau: f64) -> DVector<f64> {
    v.map(|z| if z.abs() > tau { z } else { 0.0 })
}

/// `(1/n) Sigma^+ Phi^T y`, the minimum-norm least-squares estimate.
pub fn least_squares(features: &FeatureSet) -> DVector<f64> {
    let c = features.projections() / features.n() as f64;
    features.eig().pinv_apply(&c)
}

/// Hard thresholding of the least-squares estimate.
pub fn ht_estimator(features: &FeatureSet, tau: f64) -> DVector<f64> {
    hard_threshold(&least_squares(features), tau)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdConfig {
    pub tau: f64,
    /// Step size on the raw residual `Phi^T (y - Phi s)`. `1/n` makes the
    /// inner step one unit of gradient flow time on the `1/(2n)`-scaled loss.
    pub eta: f64,
    pub max_iters: usize,
    pub init: DVector<f64>,
    pub convergence_tol: f64,
}

impl ThresholdConfig {
    pub fn new(p: usize, tau: f64, eta: f64) -> Self {
        Self {
            tau,
            eta,
            max_iters: 10_000,
            init: DVector::zeros(p),
            convergence_tol: 1e-10,
        }
    }

    fn validate(&self, p: usize) -> Result<()> {
        if !(self.tau >= 0.0) {
            return Err(ImpError::InvalidArgument(format!("tau must be nonnegative, got {}", self.tau)));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(ImpError::InvalidArgument(format!("eta must be positive, got {}", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(ImpError::InvalidArgument("max_iters must be positive".into()));
        }
        if self.init.len() != p {
            return Err(ImpError::DimensionMismatch(format!(
                "IHT init has length {} for p = {p}",
                self.init.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IhtResult {
    pub estimate: DVector<f64>,
    pub iters_used: usize,
    pub converged: bool,
}

/// `s <- H_tau(s + eta Phi^T (y - Phi s))` until the sup-norm change is at
/// most `convergence_tol` or `max_iters` updates have been applied.
pub fn iht(features: &FeatureSet, config: &ThresholdConfig) -> Result<IhtResult> {
    config.validate(features.p())?;
    let phi = features.phi();
    let y = features.targets();
    let mut current = config.init.clone();
    for iter in 1..=config.max_iters {
        let residual = y - phi * &current;
        let next = hard_threshold(&(&current + phi.tr_mul(&residual) * config.eta), config.tau);
        let norm = next.amax();
        if !norm.is_finite() || norm > DIVERGENCE_NORM {
            return Err(ImpError::Diverged { iters: iter, norm });
        }
        let change = (&next - &current).amax();
        current = next;
        if change <= config.convergence_tol {
            return Ok(IhtResult {
                estimate: current,
                iters_used: iter,
                converged: true,
            });
        }
    }
    Ok(IhtResult {
        estimate: current,
        iters_used: config.max_iters,
        converged: false,
    })
}

/// Indices of the non-zero entries.
pub fn support_of(v: &[f64]) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter_map(|(i, &x)| (x != 0.0).then_some(i))
        .collect()
}
