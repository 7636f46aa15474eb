use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ImpError, Result};
use crate::linalg::{sym_eig, CovMatrix, SymEig};

const NORMALIZED_TOL: f64 = 1e-8;

/// Design matrix `phi` (`n x p`, one row per example), targets `y`, and the
/// cached covariance `(1/n) phi^T phi` with its eigendecomposition.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    phi: DMatrix<f64>,
    targets: DVector<f64>,
    covariance: CovMatrix,
    eig: SymEig,
    normalized: bool,
}

impl FeatureSet {
    pub fn new(phi: DMatrix<f64>, targets: DVector<f64>) -> Result<Self> {
        let (n, p) = phi.shape();
        if n == 0 || p == 0 {
            return Err(ImpError::InvalidArgument(format!("design must be non-empty, got {n}x{p}")));
        }
        if targets.len() != n {
            return Err(ImpError::DimensionMismatch(format!("{n} rows but {} targets", targets.len())));
        }
        if targets.iter().any(|x| !x.is_finite()) {
            return Err(ImpError::NonFinite);
        }
        let covariance = CovMatrix::from_design(&phi)?;
        let eig = sym_eig(&covariance)?;
        let normalized = covariance
            .entries()
            .diagonal()
            .iter()
            .all(|d| (d - 1.0).abs() <= NORMALIZED_TOL);
        Ok(Self {
            phi,
            targets,
            covariance,
            eig,
            normalized,
        })
    }

    /// A design with all-zero targets.
    pub fn without_targets(phi: DMatrix<f64>) -> Result<Self> {
        let n = phi.nrows();
        Self::new(phi, DVector::zeros(n))
    }

    /// Same design, new targets. The cached decomposition is reused.
    pub fn with_targets(&self, targets: DVector<f64>) -> Result<Self> {
        if targets.len() != self.n() {
            return Err(ImpError::DimensionMismatch(format!(
                "{} rows but {} targets",
                self.n(),
                targets.len()
            )));
        }
        if targets.iter().any(|x| !x.is_finite()) {
            return Err(ImpError::NonFinite);
        }
        Ok(Self {
            targets,
            ..self.clone()
        })
    }

    pub fn n(&self) -> usize {
        self.phi.nrows()
    }

    pub fn p(&self) -> usize {
        self.phi.ncols()
    }

    pub fn phi(&self) -> &DMatrix<f64> {
        &self.phi
    }

    pub fn targets(&self) -> &DVector<f64> {
        &self.targets
    }

    pub fn covariance(&self) -> &CovMatrix {
        &self.covariance
    }

    pub fn eig(&self) -> &SymEig {
        &self.eig
    }

    /// True when every diagonal entry of the covariance is 1 to `1e-8`.
    pub fn normalized(&self) -> bool {
        self.normalized
    }

    /// Columns of `phi` in the order given.
    pub fn columns(&self, indices: &[usize]) -> DMatrix<f64> {
        self.phi.select_columns(indices)
    }

    /// `phi^T y`: the raw alignment of each feature with the targets.
    pub fn projections(&self) -> DVector<f64> {
        self.phi.tr_mul(&self.targets)
    }

    /// Pairwise incoherence `max_ij |Sigma_ij - 1{i = j}|`.
    pub fn pairwise_incoherence(&self) -> f64 {
        pairwise_incoherence(&self.covariance)
    }

    /// Row-major fixture representation.
    pub fn to_fixture(&self) -> FeatureFixture {
        FeatureFixture {
            n: self.n(),
            p: self.p(),
            phi: self.phi.row_iter().map(|r| r.iter().copied().collect()).collect(),
            targets: self.targets.iter().copied().collect(),
        }
    }

    pub fn from_fixture(fixture: &FeatureFixture) -> Result<Self> {
        if fixture.phi.len() != fixture.n || fixture.phi.iter().any(|r| r.len() != fixture.p) {
            return Err(ImpError::DimensionMismatch(format!(
                "fixture declares {}x{} but rows do not match",
                fixture.n, fixture.p
            )));
        }
        let flat: Vec<f64> = fixture.phi.iter().flatten().copied().collect();
        let phi = DMatrix::from_row_slice(fixture.n, fixture.p, &flat);
        Self::new(phi, DVector::from_vec(fixture.targets.clone()))
    }
}

pub fn pairwise_incoherence(cov: &CovMatrix) -> f64 {
    let s = cov.entries();
    let mut worst = 0.0_f64;
    for r in 0..s.nrows() {
        for c in 0..s.ncols() {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((s[(r, c)] - target).abs());
        }
    }
    worst
}

/// JSON form of a [`FeatureSet`]: `phi` is row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureFixture {
    pub n: usize,
    pub p: usize,
    pub phi: Vec<Vec<f64>>,
    pub targets: Vec<f64>,
}
