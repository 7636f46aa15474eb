//! Seeded generators for designs, sparse signals and noise.
//!
//! All randomness comes from ChaCha8 (`rand_chacha::ChaCha8Rng`) seeded with
//! `seed_from_u64(seed)`. Each generator draws from its own stream
//! (`set_stream`), so a single seed can drive the design, signal and noise of
//! one problem without the draws overlapping.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{ImpError, Result};
use crate::features::{FeatureFixture, FeatureSet};
use crate::linalg::{sym_eig, CovMatrix};

pub const STREAM_DESIGN: u64 = 1;
pub const STREAM_SIGNAL: u64 = 2;
pub const STREAM_NOISE: u64 = 3;
pub const STREAM_TARGETS: u64 = 4;

pub fn seeded_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    // Filled column by column so the draw order is independent of storage.
    let mut m = DMatrix::zeros(n, p);
    for c in 0..p {
        for r in 0..n {
            m[(r, c)] = rng.sample(StandardNormal);
        }
    }
    m
}

/// `sqrt(n) Q` with `Q` an orthonormal basis for a Gaussian `n x p` matrix.
fn orthonormal_columns(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
    let q = gaussian_matrix(rng, n, p).qr().q();
    q * (n as f64).sqrt()
}

/// Design with `Sigma = I` exactly (to rounding).
pub fn gen_orthonormal_design(n: usize, p: usize, seed: u64) -> Result<FeatureSet> {
    if p == 0 {
        return Err(ImpError::InvalidArgument("p must be positive".into()));
    }
    if n < p {
        return Err(ImpError::InvalidArgument(format!(
            "orthonormal design needs n >= p, got n = {n}, p = {p}"
        )));
    }
    let mut rng = seeded_rng(seed, STREAM_DESIGN);
    FeatureSet::without_targets(orthonormal_columns(&mut rng, n, p))
}

/// The target covariance `I + alpha (1 1^T - I)`.
pub fn uniform_corr_covariance(p: usize, alpha: f64) -> DMatrix<f64> {
    DMatrix::from_fn(p, p, |r, c| if r == c { 1.0 } else { alpha })
}

/// Design whose covariance is `I + alpha (1 1^T - I)`: `sqrt(n) Q Sigma^{1/2}`.
pub fn gen_uniform_corr_design(n: usize, p: usize, alpha: f64, seed: u64) -> Result<FeatureSet> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(ImpError::InvalidArgument(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if p == 0 || n < p {
        return Err(ImpError::InvalidArgument(format!(
            "uniform-correlation design needs 1 <= p <= n, got n = {n}, p = {p}"
        )));
    }
    let target = CovMatrix::new(uniform_corr_covariance(p, alpha), n)?;
    let eig = sym_eig(&target)?;
    let root = eig.recompose(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    let mut rng = seeded_rng(seed, STREAM_DESIGN);
    FeatureSet::without_targets(orthonormal_columns(&mut rng, n, p) * root)
}

/// Gaussian design with each column rescaled so that `Sigma_ii = 1`.
/// Returns the design and its measured pairwise incoherence.
pub fn gen_incoherent_design(n: usize, p: usize, seed: u64) -> Result<(FeatureSet, f64)> {
    if n == 0 || p == 0 {
        return Err(ImpError::InvalidArgument(format!("design must be non-empty, got {n}x{p}")));
    }
    let mut rng = seeded_rng(seed, STREAM_DESIGN);
    let mut phi = DMatrix::zeros(n, p);
    let scale = (n as f64).sqrt();
    for c in 0..p {
        loop {
            let col = DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
            let norm = col.norm();
            if norm > 0.0 {
                phi.set_column(c, &(col * (scale / norm)));
                break;
            }
        }
    }
    let features = FeatureSet::without_targets(phi)?;
    let delta = features.pairwise_incoherence();
    Ok((features, delta))
}

/// Magnitude law for the non-zero entries of a sparse signal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AmplitudeLaw {
    /// `+gamma` on every support coordinate.
    Constant,
    /// Magnitude uniform on `[gamma, 2 gamma]` with a fair random sign.
    Uniform,
    /// `+-gamma` with a fair random sign.
    Rademacher,
}

/// A `k`-sparse signal with `|s_i| >= gamma` on a uniformly random support.
/// The support is returned sorted.
pub fn gen_sparse_signal(
    p: usize,
    k: usize,
    gamma: f64,
    law: AmplitudeLaw,
    seed: u64,
) -> Result<(DVector<f64>, Vec<usize>)> {
    if k == 0 || k > p {
        return Err(ImpError::InvalidArgument(format!("need 1 <= k <= p, got k = {k}, p = {p}")));
    }
    if !(gamma > 0.0 && gamma.is_finite()) {
        return Err(ImpError::InvalidArgument(format!("gamma must be positive, got {gamma}")));
    }
    let mut rng = seeded_rng(seed, STREAM_SIGNAL);
    let mut support = index::sample(&mut rng, p, k).into_vec();
    support.sort_unstable();
    let mut signal = DVector::zeros(p);
    for &i in &support {
        signal[i] = match law {
            AmplitudeLaw::Constant => gamma,
            AmplitudeLaw::Rademacher => {
                if rng.gen::<bool>() {
                    gamma
                } else {
                    -gamma
                }
            }
            AmplitudeLaw::Uniform => {
                let magnitude = rng.gen_range(gamma..=2.0 * gamma);
                if rng.gen::<bool>() {
                    magnitude
                } else {
                    -magnitude
                }
            }
        };
    }
    Ok((signal, support))
}

/// Zero-mean noise with variance proxy at most `sigma^2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// `N(0, sigma^2)`.
    Gaussian,
    /// `sigma * (+-1)`.
    Rademacher,
    /// `Uniform[-sigma, sigma]`.
    Uniform,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Gaussian, NoiseKind::Rademacher, NoiseKind::Uniform];

    pub fn name(self) -> &'static str {
        match self {
            NoiseKind::Gaussian => "gaussian",
            NoiseKind::Rademacher => "rademacher",
            NoiseKind::Uniform => "uniform",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseKind {
    type Err = ImpError;

    fn from_str(s: &str) -> Result<Self> {
        NoiseKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ImpError::InvalidArgument(format!("unknown noise kind '{s}'")))
    }
}

pub fn sample_noise(kind: NoiseKind, sigma: f64, n: usize, seed: u64) -> Result<DVector<f64>> {
    let mut rng = seeded_rng(seed, STREAM_NOISE);
    sample_noise_with(&mut rng, kind, sigma, n)
}

/// As [`sample_noise`], drawing from a caller-owned generator.
pub fn sample_noise_with<R: Rng>(rng: &mut R, kind: NoiseKind, sigma: f64, n: usize) -> Result<DVector<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(ImpError::InvalidArgument(format!("sigma must be finite and nonnegative, got {sigma}")));
    }
    let draw = |rng: &mut R| -> f64 {
        match kind {
            NoiseKind::Gaussian => sigma * rng.sample::<f64, _>(StandardNormal),
            NoiseKind::Rademacher => {
                if rng.gen::<bool>() {
                    sigma
                } else {
                    -sigma
                }
            }
            NoiseKind::Uniform => sigma * rng.gen_range(-1.0..=1.0),
        }
    };
    Ok(DVector::from_iterator(n, (0..n).map(|_| draw(rng))))
}

/// One of the covariance regimes, with every size fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DesignSpec {
    Orthonormal { n: usize, p: usize },
    UniformCorr { n: usize, p: usize, alpha: f64 },
    Incoherent { n: usize, p: usize },
}

impl DesignSpec {
    pub fn p(&self) -> usize {
        match *self {
            DesignSpec::Orthonormal { p, .. } | DesignSpec::UniformCorr { p, .. } | DesignSpec::Incoherent { p, .. } => p,
        }
    }

    pub fn n(&self) -> usize {
        match *self {
            DesignSpec::Orthonormal { n, .. } | DesignSpec::UniformCorr { n, .. } | DesignSpec::Incoherent { n, .. } => n,
        }
    }

    pub fn generate(&self, seed: u64) -> Result<FeatureSet> {
        match *self {
            DesignSpec::Orthonormal { n, p } => gen_orthonormal_design(n, p, seed),
            DesignSpec::UniformCorr { n, p, alpha } => gen_uniform_corr_design(n, p, alpha, seed),
            DesignSpec::Incoherent { n, p } => gen_incoherent_design(n, p, seed).map(|(f, _)| f),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalSpec {
    pub k: usize,
    pub gamma: f64,
    pub amplitude: AmplitudeLaw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
}

/// Ground truth and observations `y = phi s + xi` for one trial.
#[derive(Debug, Clone)]
pub struct SparseProblem {
    pub features: FeatureSet,
    pub signal: DVector<f64>,
    pub support: Vec<usize>,
    pub noise_kind: NoiseKind,
    pub sigma: f64,
    pub gamma: f64,
    pub seed: u64,
    /// The realised `xi`.
    pub noise: DVector<f64>,
}

impl SparseProblem {
    pub fn k(&self) -> usize {
        self.support.len()
    }

    pub fn to_fixture(&self) -> ProblemFixture {
        ProblemFixture {
            features: self.features.to_fixture(),
            signal: self.signal.iter().copied().collect(),
            support: self.support.clone(),
            noise_kind: self.noise_kind,
            sigma: self.sigma,
            gamma: self.gamma,
            seed: self.seed,
            noise: self.noise.iter().copied().collect(),
        }
    }
}

/// JSON form of a [`SparseProblem`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemFixture {
    pub features: FeatureFixture,
    pub signal: Vec<f64>,
    pub support: Vec<usize>,
    pub noise_kind: NoiseKind,
    pub sigma: f64,
    pub gamma: f64,
    pub seed: u64,
    pub noise: Vec<f64>,
}

/// Builds design, signal and noise from one seed and sets `y = phi s + xi`.
pub fn assemble_problem(design: &DesignSpec, signal: &SignalSpec, noise: &NoiseSpec, seed: u64) -> Result<SparseProblem> {
    let features = design.generate(seed)?;
    assemble_on(features, signal, noise, seed)
}

/// As [`assemble_problem`] on an already generated design.
pub fn assemble_on(features: FeatureSet, signal: &SignalSpec, noise: &NoiseSpec, seed: u64) -> Result<SparseProblem> {
    let (s, support) = gen_sparse_signal(features.p(), signal.k, signal.gamma, signal.amplitude, seed)?;
    let xi = sample_noise(noise.kind, noise.sigma, features.n(), seed)?;
    let y = features.phi() * &s + &xi;
    Ok(SparseProblem {
        features: features.with_targets(y)?,
        signal: s,
        support,
        noise_kind: noise.kind,
        sigma: noise.sigma,
        gamma: signal.gamma,
        seed,
        noise: xi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use approx::assert_abs_diff_eq;

    #[test]
    fn orthonormal_design_is_exact() {
        let f = gen_orthonormal_design(1, 1, 3).unwrap();
        assert_abs_diff_eq!(f.phi()[(0, 0)].abs(), 1.0, epsilon = 1e-15);

        let f = gen_orthonormal_design(8, 4, 11).unwrap();
        assert!(max_abs(&(f.covariance().entries() - DMatrix::identity(4, 4))) <= 1e-10);
        assert!(f.normalized());
        assert!(f.pairwise_incoherence() <= 1e-10);

        let again = gen_orthonormal_design(8, 4, 11).unwrap();
        assert_eq!(f.phi(), again.phi());
        assert!(gen_orthonormal_design(3, 4, 0).is_err());
    }

    #[test]
    fn uniform_corr_design_matches_target() {
        let f = gen_uniform_corr_design(5, 2, 0.5, 1).unwrap();
        let target = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert!(max_abs(&(f.covariance().entries() - target)) <= 1e-8);

        let f = gen_uniform_corr_design(12, 3, 0.5, 2).unwrap();
        let ev = &f.eig().eigenvalues;
        assert_abs_diff_eq!(ev[0], 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(ev[1], 0.5, epsilon = 1e-8);
        assert_abs_diff_eq!(ev[2], 2.0, epsilon = 1e-8);

        let inv = f.covariance().entries().clone().try_inverse().unwrap();
        let prod = f.covariance().entries() * inv;
        assert!(max_abs(&(prod - DMatrix::identity(3, 3))) <= 1e-8);

        assert!(gen_uniform_corr_design(5, 2, 0.0, 1).is_err());
        assert!(gen_uniform_corr_design(5, 2, 1.0, 1).is_err());
    }

    #[test]
    fn incoherent_design_is_normalized() {
        let (f, delta) = gen_incoherent_design(2000, 20, 9).unwrap();
        assert!(f.normalized());
        assert_eq!(delta, f.pairwise_incoherence());
        assert!(delta > 0.0 && delta < 1.0);
    }

    #[test]
    fn sparse_signal_laws() {
        let (s, support) = gen_sparse_signal(6, 6, 1.0, AmplitudeLaw::Rademacher, 4).unwrap();
        assert_eq!(support, (0..6).collect::<Vec<_>>());
        assert!(s.iter().all(|&x| x == 1.0 || x == -1.0));

        let (s, support) = gen_sparse_signal(10, 3, 1.0, AmplitudeLaw::Constant, 4).unwrap();
        assert_eq!(support.len(), 3);
        for i in 0..10 {
            assert_eq!(s[i] != 0.0, support.contains(&i));
        }
        assert!(support.iter().all(|&i| s[i] == 1.0));

        let (s, support) = gen_sparse_signal(10, 4, 0.5, AmplitudeLaw::Uniform, 5).unwrap();
        assert!(support.iter().all(|&i| (0.5..=1.0).contains(&s[i].abs())));

        assert!(gen_sparse_signal(3, 0, 1.0, AmplitudeLaw::Constant, 0).is_err());
        assert!(gen_sparse_signal(3, 4, 1.0, AmplitudeLaw::Constant, 0).is_err());
        assert!(gen_sparse_signal(3, 1, 0.0, AmplitudeLaw::Constant, 0).is_err());
    }

    #[test]
    fn noise_kinds() {
        assert_eq!(sample_noise(NoiseKind::Gaussian, 0.0, 5, 1).unwrap(), DVector::zeros(5));
        let r = sample_noise(NoiseKind::Rademacher, 2.0, 100, 1).unwrap();
        assert!(r.iter().all(|&x| x == 2.0 || x == -2.0));
        let u = sample_noise(NoiseKind::Uniform, 0.3, 100, 1).unwrap();
        assert!(u.iter().all(|&x| x.abs() <= 0.3));
        assert!(sample_noise(NoiseKind::Gaussian, -1.0, 5, 1).is_err());
        assert_eq!("rademacher".parse::<NoiseKind>().unwrap(), NoiseKind::Rademacher);
        assert!("cauchy".parse::<NoiseKind>().is_err());
    }

    #[test]
    fn gaussian_noise_mean_within_clt_bound() {
        let sigma = 1.5;
        let xi = sample_noise(NoiseKind::Gaussian, sigma, 1_000_000, 77).unwrap();
        let mean = xi.sum() / xi.len() as f64;
        // 5 standard errors of the mean.
        assert!(mean.abs() <= 5.0 * sigma / 1e3, "mean {mean}");
    }

    #[test]
    fn assembled_problem_invariants() {
        let design = DesignSpec::Orthonormal { n: 20, p: 8 };
        let signal = SignalSpec {
            k: 3,
            gamma: 0.5,
            amplitude: AmplitudeLaw::Rademacher,
        };
        let quiet = NoiseSpec {
            kind: NoiseKind::Gaussian,
            sigma: 0.0,
        };
        let pr = assemble_problem(&design, &signal, &quiet, 42).unwrap();
        assert_eq!(pr.features.targets(), &(pr.features.phi() * &pr.signal));

        let noisy = NoiseSpec { sigma: 1.0, ..quiet };
        let a = assemble_problem(&design, &signal, &noisy, 42).unwrap();
        let b = assemble_problem(&design, &signal, &noisy, 42).unwrap();
        assert_eq!(a.features.targets(), b.features.targets());
        assert_eq!(a.features.phi(), b.features.phi());
        assert_eq!(a.features.targets(), &(a.features.phi() * &a.signal + &a.noise));

        let empty = SignalSpec { k: 0, ..signal };
        assert!(assemble_problem(&design, &empty, &noisy, 42).is_err());
    }

    #[test]
    fn design_spec_json_shape() {
        let d: DesignSpec = serde_json::from_str(r#"{"kind":"uniform_corr","n":10,"p":4,"alpha":0.1}"#).unwrap();
        assert_eq!(d, DesignSpec::UniformCorr { n: 10, p: 4, alpha: 0.1 });
        assert!(serde_json::from_str::<DesignSpec>(r#"{"kind":"orthonormal","n":1,"p":1,"q":2}"#).is_err());
    }
}
