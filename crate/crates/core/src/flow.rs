//! Gradient flow on `L(w) = (1/2n) ||Phi_A w - y||^2` restricted to the
//! active columns `Phi_A`.
//!
//! The closed form diagonalises `Y = (1/n) Phi_A^T Phi_A`. With data
//! coefficients `c = V^T (1/n) Phi_A^T y` each eigen-coordinate evolves as
//! `c/l + exp(-l t) (w0 - c/l)` when `l > rank_tol`, and stays at `w0`
//! otherwise (the gradient has no component in the null space).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ImpError, Result};
use crate::linalg::{operator_norm, sym_eig_with_tol, CovMatrix, SymEig};

/// Training time: finite `T > 0` or the `t -> infinity` limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Finite(f64),
    Infinite,
}

impl Horizon {
    pub fn finite(t: f64) -> Result<Self> {
        if t > 0.0 && t.is_finite() {
            Ok(Horizon::Finite(t))
        } else {
            Err(ImpError::InvalidArgument(format!("horizon must be positive and finite, got {t}")))
        }
    }

    pub fn validate(self) -> Result<Self> {
        match self {
            Horizon::Finite(t) => Horizon::finite(t),
            Horizon::Infinite => Ok(self),
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowProblem {
    pub features_active: DMatrix<f64>,
    pub targets: DVector<f64>,
    pub w0_active: DVector<f64>,
    pub horizon: Horizon,
    /// Zero threshold for the eigenvalues of `Y`; `None` uses the default.
    pub rank_tol: Option<f64>,
}

impl FlowProblem {
    pub fn new(
        features_active: DMatrix<f64>,
        targets: DVector<f64>,
        w0_active: DVector<f64>,
        horizon: Horizon,
    ) -> Result<Self> {
        let problem = Self {
            features_active,
            targets,
            w0_active,
            horizon,
            rank_tol: None,
        };
        problem.validate()?;
        Ok(problem)
    }

    pub fn validate(&self) -> Result<()> {
        let (n, m) = self.features_active.shape();
        if m == 0 || n == 0 {
            return Err(ImpError::DimensionMismatch(format!("features must be non-empty, got {n}x{m}")));
        }
        if self.targets.len() != n {
            return Err(ImpError::DimensionMismatch(format!(
                "{n} feature rows but {} targets",
                self.targets.len()
            )));
        }
        if self.w0_active.len() != m {
            return Err(ImpError::DimensionMismatch(format!(
                "{m} active columns but initial weights of length {}",
                self.w0_active.len()
            )));
        }
        self.horizon.validate()?;
        Ok(())
    }

    fn n(&self) -> f64 {
        self.features_active.nrows() as f64
    }

    /// `(1/n) Phi_A^T y`.
    pub fn data_coefficients(&self) -> DVector<f64> {
        self.features_active.tr_mul(&self.targets) / self.n()
    }

    /// `(1/n) Phi_A^T (Phi_A w - y)`.
    pub fn gradient(&self, w: &DVector<f64>) -> DVector<f64> {
        let residual = &self.features_active * w - &self.targets;
        self.features_active.tr_mul(&residual) / self.n()
    }

    pub fn loss(&self, w: &DVector<f64>) -> f64 {
        let residual = &self.features_active * w - &self.targets;
        residual.norm_squared() / (2.0 * self.n())
    }

    pub fn covariance(&self) -> Result<CovMatrix> {
        CovMatrix::from_design(&self.features_active)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowSolution {
    pub weights_active: DVector<f64>,
    pub stationary: bool,
    pub residual_norm: f64,
}

/// Exact solution of the masked flow.
pub fn flow_closed_form(problem: &FlowProblem) -> Result<FlowSolution> {
    problem.validate()?;
    let eig = sym_eig_with_tol(&problem.covariance()?, problem.rank_tol)?;
    flow_closed_form_with_eig(problem, &eig)
}

/// Closed form reusing a precomputed decomposition of `(1/n) Phi_A^T Phi_A`.
pub fn flow_closed_form_with_eig(problem: &FlowProblem, eig: &SymEig) -> Result<FlowSolution> {
    problem.validate()?;
    let m = problem.features_active.ncols();
    if eig.dim() != m {
        return Err(ImpError::DimensionMismatch(format!(
            "decomposition of size {} for {m} active columns",
            eig.dim()
        )));
    }
    let v = &eig.eigenvectors;
    let c = v.tr_mul(&problem.data_coefficients());
    let w0 = v.tr_mul(&problem.w0_active);

    let coords = DVector::from_fn(m, |i, _| {
        let l = eig.eigenvalues[i];
        if l <= eig.rank_tol {
            return w0[i];
        }
        let limit = c[i] / l;
        match problem.horizon {
            Horizon::Infinite => limit,
            Horizon::Finite(t) => limit + (-l * t).exp() * (w0[i] - limit),
        }
    });
    let weights_active = v * coords;
    let residual_norm = (&problem.features_active * &weights_active - &problem.targets).norm();
    Ok(FlowSolution {
        weights_active,
        stationary: matches!(problem.horizon, Horizon::Infinite),
        residual_norm,
    })
}

/// Raised when the RK4 step exceeds `2 / lambda_max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityWarning {
    pub step: f64,
    pub limit: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rk4Output {
    pub solution: FlowSolution,
    pub warning: Option<StabilityWarning>,
}

/// Classical fourth-order Runge-Kutta on `w' = -(1/n) Phi_A^T (Phi_A w - y)`.
///
/// The right-hand side is evaluated through `Phi_A` directly, never through
/// the eigendecomposition used by [`flow_closed_form`].
pub fn flow_rk4(problem: &FlowProblem, step_count: usize) -> Result<Rk4Output> {
    problem.validate()?;
    let horizon = match problem.horizon {
        Horizon::Infinite => return Err(ImpError::InfiniteHorizon),
        Horizon::Finite(t) => t,
    };
    if step_count == 0 {
        return Err(ImpError::InvalidArgument("step_count must be at least 1".into()));
    }
    let h = horizon / step_count as f64;

    let lambda_max = operator_norm(&sym_eig_with_tol(&problem.covariance()?, Some(0.0))?);
    let warning = (lambda_max > 0.0 && h > 2.0 / lambda_max).then(|| StabilityWarning {
        step: h,
        limit: 2.0 / lambda_max,
    });

    let phi = &problem.features_active;
    let y = problem.targets.as_slice();
    let (n, m) = phi.shape();
    let inv_n = 1.0 / n as f64;
    // Column-major storage: column j is phi_col[j*n..(j+1)*n].
    let phi_col = phi.as_slice();
    let mut residual = vec![0.0; n];
    let rhs = |w: &[f64], out: &mut [f64], residual: &mut [f64]| {
        residual.copy_from_slice(y);
        for r in residual.iter_mut() {
            *r = -*r;
        }
        for (j, &wj) in w.iter().enumerate() {
            let col = &phi_col[j * n..(j + 1) * n];
            for (r, &x) in residual.iter_mut().zip(col) {
                *r += x * wj;
            }
        }
        for (j, o) in out.iter_mut().enumerate() {
            let col = &phi_col[j * n..(j + 1) * n];
            let dot: f64 = col.iter().zip(residual.iter()).map(|(a, b)| a * b).sum();
            *o = -dot * inv_n;
        }
    };

    let mut w: Vec<f64> = problem.w0_active.iter().copied().collect();
    let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; m], vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    let mut tmp = vec![0.0; m];
    for _ in 0..step_count {
        rhs(&w, &mut k1, &mut residual);
        for j in 0..m {
            tmp[j] = w[j] + 0.5 * h * k1[j];
        }
        rhs(&tmp, &mut k2, &mut residual);
        for j in 0..m {
            tmp[j] = w[j] + 0.5 * h * k2[j];
        }
        rhs(&tmp, &mut k3, &mut residual);
        for j in 0..m {
            tmp[j] = w[j] + h * k3[j];
        }
        rhs(&tmp, &mut k4, &mut residual);
        for j in 0..m {
            w[j] += h / 6.0 * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j]);
        }
    }

    let weights_active = DVector::from_vec(w);
    let residual_norm = (phi * &weights_active - &problem.targets).norm();
    Ok(Rk4Output {
        solution: FlowSolution {
            weights_active,
            stationary: false,
            residual_norm,
        },
        warning,
    })
}
