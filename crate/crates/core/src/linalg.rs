//! Dense symmetric linear algebra.
//!
//! Everything here works in the eigenbasis of a symmetric positive
//! semidefinite matrix: the pseudo-inverse inverts the eigenvalues above the
//! rank tolerance and zeroes the rest, recomposed in the same basis.

use nalgebra::{DMatrix, DVector};

use crate::error::{ImpError, Result};

const SYMMETRY_TOL: f64 = 1e-12;
const RANK_TOL_FACTOR: f64 = 1e-10;

/// Largest absolute entry.
pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

/// A symmetric matrix together with the number of samples behind it.
///
/// For a design `phi` with `n` rows this is `(1/n) phi^T phi`; principal
/// submatrices of it keep the same `source_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovMatrix {
    entries: DMatrix<f64>,
    source_n: usize,
}

impl CovMatrix {
    /// Validates symmetry (relative to the largest entry) and finiteness,
    /// then stores the exactly symmetrised matrix.
    pub fn new(entries: DMatrix<f64>, source_n: usize) -> Result<Self> {
        if !entries.is_square() {
            return Err(ImpError::DimensionMismatch(format!(
                "covariance must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if source_n == 0 {
            return Err(ImpError::InvalidArgument("source_n must be positive".into()));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(ImpError::NonFinite);
        }
        let asymmetry = max_abs(&(&entries - entries.transpose()));
        let tolerance = SYMMETRY_TOL * max_abs(&entries).max(1.0);
        if asymmetry > tolerance {
            return Err(ImpError::NotSymmetric { asymmetry, tolerance });
        }
        let entries = (&entries + entries.transpose()) * 0.5;
        Ok(Self { entries, source_n })
    }

    /// `(1/n) phi^T phi` for an `n x p` design.
    pub fn from_design(phi: &DMatrix<f64>) -> Result<Self> {
        let n = phi.nrows();
        if n == 0 {
            return Err(ImpError::InvalidArgument("design has no rows".into()));
        }
        if phi.iter().any(|x| !x.is_finite()) {
            return Err(ImpError::NonFinite);
        }
        let gram = phi.tr_mul(phi) / n as f64;
        let entries = (&gram + gram.transpose()) * 0.5;
        Ok(Self { entries, source_n: n })
    }

    pub fn entries(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn source_n(&self) -> usize {
        self.source_n
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    /// Principal submatrix on `indices` (in the given order).
    pub fn restrict(&self, indices: &[usize]) -> CovMatrix {
        let m = indices.len();
        let entries = DMatrix::from_fn(m, m, |r, c| self.entries[(indices[r], indices[c])]);
        CovMatrix {
            entries,
            source_n: self.source_n,
        }
    }
}

/// Eigendecomposition of a symmetric matrix, eigenvalues ascending.
///
/// Column `i` of `eigenvectors` pairs with `eigenvalues[i]`. The first entry
/// of each eigenvector whose magnitude exceeds `1e-12` is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct SymEig {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
    pub rank_tol: f64,
}

/// Default zero threshold: `1e-10 * max(p, n) * lambda_max`.
pub fn default_rank_tol(p: usize, source_n: usize, lambda_max: f64) -> f64 {
    RANK_TOL_FACTOR * p.max(source_n) as f64 * lambda_max
}

/// Eigendecomposition with the default rank tolerance.
pub fn sym_eig(a: &CovMatrix) -> Result<SymEig> {
    sym_eig_with_tol(a, None)
}

pub fn sym_eig_with_tol(a: &CovMatrix, rank_tol: Option<f64>) -> Result<SymEig> {
    let p = a.dim();
    if let Some(t) = rank_tol {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(ImpError::InvalidArgument(format!("rank_tol must be finite and nonnegative, got {t}")));
        }
    }
    if p == 0 {
        return Ok(SymEig {
            eigenvalues: DVector::zeros(0),
            eigenvectors: DMatrix::zeros(0, 0),
            rank_tol: rank_tol.unwrap_or(0.0),
        });
    }
    let decomposition = a.entries.clone().symmetric_eigen();

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| {
        decomposition.eigenvalues[i]
            .total_cmp(&decomposition.eigenvalues[j])
            .then(i.cmp(&j))
    });

    let eigenvalues = DVector::from_iterator(p, order.iter().map(|&i| decomposition.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(p, p);
    for (col, &src) in order.iter().enumerate() {
        let v = decomposition.eigenvectors.column(src);
        let sign = v
            .iter()
            .find(|x| x.abs() > 1e-12)
            .map_or(1.0, |x| x.signum());
        eigenvectors.set_column(col, &(v * sign));
    }

    let lambda_max = eigenvalues.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()));
    let rank_tol = rank_tol.unwrap_or_else(|| default_rank_tol(p, a.source_n, lambda_max));
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
        rank_tol,
    })
}

impl SymEig {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Number of eigenvalues above the rank tolerance.
    pub fn rank(&self) -> usize {
        self.eigenvalues.iter().filter(|&&l| l > self.rank_tol).count()
    }

    /// Eigenvalues of the pseudo-inverse, in the same order.
    pub fn inverse_spectrum(&self) -> DVector<f64> {
        self.eigenvalues
            .map(|l| if l > self.rank_tol { 1.0 / l } else { 0.0 })
    }

    /// Orthonormal basis of the null space (eigenvectors at or below the
    /// rank tolerance), one vector per column.
    pub fn null_basis(&self) -> DMatrix<f64> {
        let cols: Vec<usize> = (0..self.dim())
            .filter(|&i| self.eigenvalues[i] <= self.rank_tol)
            .collect();
        DMatrix::from_fn(self.dim(), cols.len(), |r, c| self.eigenvectors[(r, cols[c])])
    }

    /// `V diag(f(lambda)) V^T`.
    pub fn recompose(&self, spectrum: &DVector<f64>) -> DMatrix<f64> {
        let scaled = DMatrix::from_fn(self.dim(), self.dim(), |r, c| {
            self.eigenvectors[(r, c)] * spectrum[c]
        });
        let m = scaled * self.eigenvectors.transpose();
        (&m + m.transpose()) * 0.5
    }

    /// `A^+ v` without forming `A^+`.
    pub fn pinv_apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let coords = self.eigenvectors.tr_mul(v);
        let scaled = coords.component_mul(&self.inverse_spectrum());
        &self.eigenvectors * scaled
    }

    /// Orthogonal projection of `v` onto the range.
    pub fn project_range(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut coords = self.eigenvectors.tr_mul(v);
        for (c, &l) in coords.iter_mut().zip(self.eigenvalues.iter()) {
            if l <= self.rank_tol {
                *c = 0.0;
            }
        }
        &self.eigenvectors * coords
    }
}

/// Moore-Penrose pseudo-inverse: eigenvalues above `rank_tol` are inverted,
/// the rest set to zero.
pub fn pseudo_inverse(e: &SymEig) -> DMatrix<f64> {
    e.recompose(&e.inverse_spectrum())
}

/// Smallest eigenvalue strictly above the rank tolerance.
pub fn min_nonzero_eig(e: &SymEig) -> Result<f64> {
    e.eigenvalues
        .iter()
        .copied()
        .find(|&l| l > e.rank_tol)
        .ok_or(ImpError::NoNonzeroEigenvalue { rank_tol: e.rank_tol })
}

/// `max |lambda|`, the spectral norm of a symmetric matrix.
pub fn operator_norm(e: &SymEig) -> f64 {
    e.eigenvalues.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}
