//! Turning a [`DesignConfig`] into concrete designs, including sample sizes
//! derived from a bound that itself depends on the generated design.

use imp_core::designs::{gen_incoherent_design, gen_orthonormal_design, gen_uniform_corr_design};
use imp_core::linalg::min_nonzero_eig;
use imp_core::FeatureSet;

use crate::config::{DesignConfig, DesignKind};
use crate::error::{HarnessError, Result};

const MAX_SIZING_STEPS: usize = 64;

pub fn generate(design: &DesignConfig, n: usize, p: usize, seed: u64) -> Result<FeatureSet> {
    let f = match design.kind {
        DesignKind::Orthonormal => gen_orthonormal_design(n, p, seed)?,
        DesignKind::UniformCorr => {
            let alpha = design
                .alpha
                .ok_or_else(|| HarnessError::Config("uniform_corr design needs alpha".into()))?;
            gen_uniform_corr_design(n, p, alpha, seed)?
        }
        DesignKind::Incoherent => gen_incoherent_design(n, p, seed)?.0,
    };
    Ok(f)
}

/// A design whose sample count satisfies `n >= bound(lambda_min_nz(Sigma_n))`.
///
/// Starts from the bound at `lambda = 1` (never below `p` for the designs
/// that need `n >= p`) and grows `n` until the bound evaluated on the
/// generated design no longer exceeds it. Returns the design and the
/// `lambda_min_nz` it was sized with.
pub fn sized_design(
    design: &DesignConfig,
    p: usize,
    seed: u64,
    bound: impl Fn(f64) -> Result<usize>,
) -> Result<(FeatureSet, f64)> {
    let floor = match design.kind {
        DesignKind::Orthonormal | DesignKind::UniformCorr => p,
        DesignKind::Incoherent => 1,
    };
    let mut n = bound(1.0)?.max(floor);
    for _ in 0..MAX_SIZING_STEPS {
        let f = generate(design, n, p, seed)?;
        let lambda = min_nonzero_eig(f.eig())?;
        let needed = bound(lambda)?;
        if needed <= n {
            return Ok((f, lambda));
        }
        n = needed;
    }
    Err(HarnessError::Aborted(format!(
        "sample size did not settle after {MAX_SIZING_STEPS} steps (last n = {n})"
    )))
}
