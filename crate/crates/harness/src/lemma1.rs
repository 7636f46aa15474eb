//! Monte Carlo check of the noise deviation bound: with `n` at the bound's
//! sample size, `max_j |alpha_j| > epsilon` should happen in at most a
//! `delta` fraction of noise draws, for every noise family.

use imp_core::designs::{NoiseKind, NoiseSpec};
use imp_core::stats::McSummary;
use imp_core::theory::{sample_bound_lemma1, sample_bound_lemma1_raw, sample_bound_thm1_raw, BoundInputs, NoiseOperator};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentSpec;
use crate::design::{generate, sized_design};
use crate::error::{HarnessError, Result};

pub const LEMMA1_HEADER: [&str; 6] = ["noise", "trial", "seed", "n", "max_deviation", "exceeded"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationRow {
    pub noise: NoiseKind,
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub max_deviation: f64,
    pub exceeded: bool,
}

impl DeviationRow {
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.noise.name().to_string(),
            self.trial.to_string(),
            self.seed.to_string(),
            self.n.to_string(),
            self.max_deviation.to_string(),
            self.exceeded.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct KindReport {
    pub noise: NoiseKind,
    /// Bound at the design's `lambda_min_nz`, before the multiplier.
    pub bound_n: usize,
    pub n: usize,
    pub lambda_min_nz: f64,
    pub epsilon: f64,
    pub mean_max_deviation: f64,
    pub summary: McSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct Lemma1Report {
    pub kinds: Vec<KindReport>,
    /// The unrounded recovery bound at `gamma` equals the unrounded
    /// deviation bound at `epsilon = gamma / 2`, compared exactly.
    pub bound_identity: bool,
    pub pass: bool,
    #[serde(skip)]
    pub rows: Vec<DeviationRow>,
}

fn inputs(spec: &ExperimentSpec, scale: f64, lambda: f64) -> BoundInputs {
    BoundInputs {
        sigma: spec.noise.sigma,
        scale,
        lambda_min_nz: lambda,
        p: spec.design.p,
        delta: spec.delta,
    }
}

pub fn bound_identity(spec: &ExperimentSpec, lambda: f64) -> Result<bool> {
    let gamma = spec.signal.gamma;
    let thm1 = sample_bound_thm1_raw(&inputs(spec, gamma, lambda))?;
    let lemma1 = sample_bound_lemma1_raw(&inputs(spec, gamma / 2.0, lambda))?;
    Ok(thm1 == lemma1)
}

pub fn run_lemma1_check(spec: &ExperimentSpec) -> Result<Lemma1Report> {
    let epsilon = spec.epsilon();
    let p = spec.design.p;
    let design_seed = spec.base_seed;
    let bound = |lambda: f64| Ok(sample_bound_lemma1(&inputs(spec, epsilon, lambda))?);
    let (base, lambda) = match spec.design.n {
        Some(n) => {
            let f = generate(&spec.design, n, p, design_seed)?;
            let l = imp_core::linalg::min_nonzero_eig(f.eig())?;
            (f, l)
        }
        None => sized_design(&spec.design, p, design_seed, bound)?,
    };
    let bound_n = bound(lambda)?;
    let features = match spec.lemma1.n_multiplier {
        1 => base,
        m => generate(&spec.design, base.n() * m, p, design_seed)?,
    };
    let n = features.n();
    let op = NoiseOperator::new(&features);

    let mut kinds = Vec::new();
    let mut rows = Vec::new();
    for &kind in &spec.lemma1.noise_kinds {
        let noise = NoiseSpec {
            kind,
            sigma: spec.noise.sigma,
        };
        let kind_rows = (0..spec.trials)
            .into_par_iter()
            .map(|t| {
                let seed = spec.trial_seed(t);
                let max_deviation = op.max_deviation(&noise, seed)?;
                Ok(DeviationRow {
                    noise: kind,
                    trial: t,
                    seed,
                    n,
                    max_deviation,
                    exceeded: max_deviation > epsilon,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let outcomes: Vec<Vec<bool>> = kind_rows.iter().map(|r| vec![r.exceeded]).collect();
        let mean = kind_rows.iter().map(|r| r.max_deviation).sum::<f64>() / kind_rows.len() as f64;
        kinds.push(KindReport {
            noise: kind,
            bound_n,
            n,
            lambda_min_nz: lambda,
            epsilon,
            mean_max_deviation: mean,
            summary: McSummary::from_outcomes(&["exceedance"], &outcomes, spec.delta),
        });
        rows.extend(kind_rows);
    }
    if kinds.is_empty() {
        return Err(HarnessError::Config("no noise kinds to check".into()));
    }
    let identity = bound_identity(spec, lambda)?;
    Ok(Lemma1Report {
        pass: identity && kinds.iter().all(|k| k.summary.pass),
        kinds,
        bound_identity: identity,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentKind;

    fn spec(trials: usize) -> ExperimentSpec {
        let mut s = ExperimentSpec {
            trials,
            ..Default::default()
        };
        s.design.p = 20;
        s.signal.k = 2;
        s.validate_for(ExperimentKind::Lemma1Check).unwrap();
        s
    }

    #[test]
    fn all_kinds_pass_at_bound() {
        let report = run_lemma1_check(&spec(300)).unwrap();
        assert!(report.pass);
        assert!(report.bound_identity);
        assert_eq!(report.kinds.len(), 3);
        assert_eq!(report.rows.len(), 900);
        assert!(report.kinds.iter().all(|k| k.n == k.bound_n));
    }

    #[test]
    fn larger_n_shrinks_deviation() {
        // About 1% of draws exceed at the bound, so enough trials to see some.
        let mut s = spec(4000);
        s.lemma1.noise_kinds = vec![NoiseKind::Gaussian];
        let at_bound = run_lemma1_check(&s).unwrap();
        s.lemma1.n_multiplier = 10;
        let scaled = run_lemma1_check(&s).unwrap();
        assert_eq!(scaled.kinds[0].n, 10 * at_bound.kinds[0].n);
        assert!(at_bound.kinds[0].summary.failures > 0);
        assert!(scaled.kinds[0].summary.failure_rate < at_bound.kinds[0].summary.failure_rate);
        assert!(scaled.kinds[0].mean_max_deviation < at_bound.kinds[0].mean_max_deviation);
    }
}
