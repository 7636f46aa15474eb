//! Checkable forms of the recovery guarantee: the orthogonal nullspace
//! property, per-round recoverability, sample-size bounds and a Monte Carlo
//! check of the sub-Gaussian concentration bound.
//!
//! Logarithms are natural.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::designs::{sample_noise, NoiseSpec};
use crate::error::{ImpError, Result};
use crate::features::FeatureSet;
use crate::linalg::{pseudo_inverse, sym_eig, CovMatrix, SymEig};
use crate::stats::McSummary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnpReport {
    pub holds: bool,
    pub null_dim: usize,
    /// Largest `|<u, g>|` over null basis vectors `u` and cone generators `g`.
    pub max_violation: f64,
    pub generators_checked: usize,
    /// Set when `S` is empty: there are no generators and the check passes
    /// without testing anything.
    pub vacuous: bool,
}

/// Orthogonal nullspace property: `null(A)` is orthogonal to the cone
/// `C(S) = {x : ||x_{S^c}||_1 <= ||x_S||_1}`.
///
/// Orthogonality to a cone is orthogonality to its span, which is generated
/// by `e_i` (`i` in `S`) and `e_i +- e_j` (`i` in `S`, `j` outside).
pub fn check_onp(cov: &CovMatrix, support: &[usize], tol: f64) -> Result<OnpReport> {
    check_onp_with_eig(&sym_eig(cov)?, support, tol)
}

pub fn check_onp_with_eig(eig: &SymEig, support: &[usize], tol: f64) -> Result<OnpReport> {
    let p = eig.dim();
    let mut in_support = vec![false; p];
    for &i in support {
        if i >= p {
            return Err(ImpError::InvalidArgument(format!("support index {i} out of range for p = {p}")));
        }
        in_support[i] = true;
    }
    let outside: Vec<usize> = (0..p).filter(|&j| !in_support[j]).collect();
    let null = eig.null_basis();
    let null_dim = null.ncols();
    let s_size = in_support.iter().filter(|&&b| b).count();
    let generators_checked = s_size + 2 * s_size * outside.len();

    let mut max_violation = 0.0_f64;
    for u in null.column_iter() {
        for i in (0..p).filter(|&i| in_support[i]) {
            max_violation = max_violation.max(u[i].abs());
            for &j in &outside {
                max_violation = max_violation.max((u[i] + u[j]).abs()).max((u[i] - u[j]).abs());
            }
        }
    }
    Ok(OnpReport {
        holds: max_violation <= tol,
        null_dim,
        max_violation,
        generators_checked,
        vacuous: s_size == 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Recoverability {
    pub recoverable: bool,
    /// `||Y^+ Y s - s||_inf`: the part of `s` lying in the null space.
    pub residual: f64,
}

pub fn check_recoverable(cov_active: &CovMatrix, s_active: &DVector<f64>, tol: f64) -> Result<Recoverability> {
    check_recoverable_with_eig(&sym_eig(cov_active)?, s_active, tol)
}

pub fn check_recoverable_with_eig(eig: &SymEig, s_active: &DVector<f64>, tol: f64) -> Result<Recoverability> {
    if s_active.len() != eig.dim() {
        return Err(ImpError::DimensionMismatch(format!(
            "signal of length {} for a {}x{} covariance",
            s_active.len(),
            eig.dim(),
            eig.dim()
        )));
    }
    let residual = (eig.project_range(s_active) - s_active).amax();
    Ok(Recoverability {
        recoverable: residual <= tol,
        residual,
    })
}

/// Inputs of the sample-size bounds. `scale` is the magnitude floor `gamma`
/// for the recovery bound and the deviation `epsilon` for the concentration
/// bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub sigma: f64,
    pub scale: f64,
    pub lambda_min_nz: f64,
    pub p: usize,
    pub delta: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ImpError::InvalidArgument(format!("{name} must be positive and finite, got {v}")))
            }
        };
        positive("sigma", self.sigma)?;
        positive("scale", self.scale)?;
        positive("lambda_min_nz", self.lambda_min_nz)?;
        if self.p == 0 {
            return Err(ImpError::InvalidArgument("p must be positive".into()));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(ImpError::InvalidArgument(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        Ok(())
    }

    fn raw(&self, constant: f64) -> Result<f64> {
        self.validate()?;
        let sigma_sq = self.sigma * self.sigma;
        let denom = self.scale * self.scale * self.lambda_min_nz;
        Ok(constant * sigma_sq / denom * (2.0 * self.p as f64 / self.delta).ln())
    }
}

/// `8 sigma^2 / (gamma^2 lambda) * ln(2p / delta)` before rounding up.
pub fn sample_bound_thm1_raw(b: &BoundInputs) -> Result<f64> {
    b.raw(8.0)
}

/// Samples sufficient for no false exclusion above `gamma`.
pub fn sample_bound_thm1(b: &BoundInputs) -> Result<usize> {
    sample_bound_thm1_raw(b).map(ceil_to_count)
}

/// `2 sigma^2 / (epsilon^2 lambda) * ln(2p / delta)` before rounding up.
pub fn sample_bound_lemma1_raw(b: &BoundInputs) -> Result<f64> {
    b.raw(2.0)
}

/// Samples sufficient for `max_j |alpha_j| < epsilon` with probability `1 - delta`.
pub fn sample_bound_lemma1(b: &BoundInputs) -> Result<usize> {
    sample_bound_lemma1_raw(b).map(ceil_to_count)
}

fn ceil_to_count(raw: f64) -> usize {
    (raw.ceil() as usize).max(1)
}

/// `alpha = (1/n) Sigma^+ Phi^T xi`.
pub fn noise_functional(features: &FeatureSet, xi: &DVector<f64>) -> Result<DVector<f64>> {
    if xi.len() != features.n() {
        return Err(ImpError::DimensionMismatch(format!(
            "noise of length {} for n = {}",
            xi.len(),
            features.n()
        )));
    }
    let c = features.phi().tr_mul(xi) / features.n() as f64;
    Ok(features.eig().pinv_apply(&c))
}

/// The fixed linear map `xi -> (1/n) Sigma^+ Phi^T xi`, formed once for
/// repeated noise draws on the same design.
#[derive(Debug, Clone)]
pub struct NoiseOperator {
    matrix: DMatrix<f64>,
}

impl NoiseOperator {
    pub fn new(features: &FeatureSet) -> Self {
        let pinv = pseudo_inverse(features.eig());
        let matrix = pinv * features.phi().transpose() / features.n() as f64;
        Self { matrix }
    }

    pub fn apply(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.matrix * xi
    }

    pub fn n(&self) -> usize {
        self.matrix.ncols()
    }

    /// `max_j |alpha_j|` for the noise drawn from `seed`.
    pub fn max_deviation(&self, noise: &NoiseSpec, seed: u64) -> Result<f64> {
        let xi = sample_noise(noise.kind, noise.sigma, self.n(), seed)?;
        Ok(self.apply(&xi).amax())
    }
}

/// Fraction of trials with `max_j |alpha_j| > epsilon`. Trial `t` draws its
/// noise from seed `seed + t`.
pub fn lemma1_mc(
    features: &FeatureSet,
    noise: &NoiseSpec,
    epsilon: f64,
    trials: usize,
    seed: u64,
    delta: f64,
) -> Result<McSummary> {
    if trials == 0 {
        return Err(ImpError::InvalidArgument("trials must be at least 1".into()));
    }
    let op = NoiseOperator::new(features);
    let outcomes = (0..trials)
        .map(|t| Ok(vec![op.max_deviation(noise, seed.wrapping_add(t as u64))? > epsilon]))
        .collect::<Result<Vec<_>>>()?;
    Ok(McSummary::from_outcomes(&["exceedance"], &outcomes, delta))
}
