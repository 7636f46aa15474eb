//! Support recovery: Monte Carlo check that IMP run to convergence from zero
//! keeps every coordinate with `|s_i| >= gamma` once `n` meets the sample
//! bound.

use std::time::Instant;

use imp_core::baselines::{ht_estimator, iht, support_of, ThresholdConfig};
use imp_core::designs::assemble_on;
use imp_core::imp::{run_imp_observed, ImpConfig, ImpTrace, RoundView};
use imp_core::stats::McSummary;
use imp_core::theory::{check_onp_with_eig, check_recoverable_with_eig, sample_bound_thm1, BoundInputs};
use nalgebra::DVector;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentSpec;
use crate::design::sized_design;
use crate::error::{HarnessError, Result};

pub const TRIALS_HEADER: [&str; 14] = [
    "trial",
    "seed",
    "n",
    "p",
    "k",
    "gamma",
    "sigma",
    "delta",
    "q",
    "sparsity_ok",
    "no_false_exclusion",
    "min_nz_eig",
    "max_recov_residual",
    "wall_ms",
];

const ONP_TOL: f64 = 1e-8;
const RECOVERABLE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub k: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub delta: f64,
    pub q: usize,
    pub sparsity_ok: bool,
    pub no_false_exclusion: bool,
    /// `lambda_min_nz` of the full covariance, used to size `n`.
    pub min_nz_eig: f64,
    pub max_recov_residual: Option<f64>,
    pub wall_ms: u128,
    pub round_min_nz_eigs: Vec<Option<f64>>,
    pub recov_residuals: Vec<f64>,
    pub signal: Vec<f64>,
    pub support: Vec<usize>,
    pub imp_support: Vec<usize>,
    pub ht_support: Vec<usize>,
    /// `None` when IHT diverged.
    pub iht_support: Option<Vec<usize>>,
}

impl TrialRecord {
    /// The fields of one `trials.csv` row.
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.trial.to_string(),
            self.seed.to_string(),
            self.n.to_string(),
            self.p.to_string(),
            self.k.to_string(),
            self.gamma.to_string(),
            self.sigma.to_string(),
            self.delta.to_string(),
            self.q.to_string(),
            self.sparsity_ok.to_string(),
            self.no_false_exclusion.to_string(),
            self.min_nz_eig.to_string(),
            self.max_recov_residual.map(|r| r.to_string()).unwrap_or_default(),
            self.wall_ms.to_string(),
        ]
    }

    pub fn failed(&self) -> bool {
        !(self.sparsity_ok && self.no_false_exclusion)
    }
}

/// Outcome of one trial: a record, or a rejection because the drawn support
/// violates the orthogonal nullspace property.
#[derive(Debug, Clone)]
pub enum TrialOutcome {
    Completed { record: Box<TrialRecord>, trace: ImpTrace },
    OnpRejected { trial: usize, seed: u64, max_violation: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    pub summary: McSummary,
    pub onp_rejections: usize,
    pub sparsity_violations: usize,
    pub n_range: (usize, usize),
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
    #[serde(skip)]
    pub traces: Vec<(usize, ImpTrace)>,
}

/// Runs a single trial; the result depends only on `(spec, trial)`.
pub fn run_recovery_trial(spec: &ExperimentSpec, trial: usize) -> Result<TrialOutcome> {
    let started = Instant::now();
    let seed = spec.trial_seed(trial);
    let p = spec.design.p;
    let bound = |lambda: f64| -> Result<usize> {
        if spec.noise.sigma == 0.0 {
            // The bound is vacuous without noise; keep the minimal design.
            return Ok(1);
        }
        Ok(sample_bound_thm1(&BoundInputs {
            sigma: spec.noise.sigma,
            scale: spec.signal.gamma,
            lambda_min_nz: lambda,
            p,
            delta: spec.delta,
        })?)
    };
    let (features, min_nz_eig) = match spec.design.n {
        Some(n) => {
            let f = crate::design::generate(&spec.design, n, p, seed)?;
            let lambda = imp_core::linalg::min_nonzero_eig(f.eig())?;
            (f, lambda)
        }
        None => sized_design(&spec.design, p, seed, bound)?,
    };
    let problem = assemble_on(features, &spec.signal, &spec.noise, seed)?;

    let onp = check_onp_with_eig(problem.features.eig(), &problem.support, ONP_TOL)?;
    if !onp.holds {
        return Ok(TrialOutcome::OnpRejected {
            trial,
            seed,
            max_violation: onp.max_violation,
        });
    }

    let q = spec.prune_rounds();
    let config = ImpConfig {
        horizon: spec.imp.horizon,
        prune_rounds: q,
        w_init: DVector::zeros(p),
        per_round: spec.imp.per_round,
        rank_tol: spec.imp.rank_tol,
        tie_break: spec.imp.tie_break,
    };
    let mut residuals = Vec::new();
    let mut residual_error = None;
    {
        let signal = &problem.signal;
        let verified = spec.verified_mode;
        let mut observer = |view: &RoundView<'_>| {
            if !verified {
                return;
            }
            let s_active = DVector::from_iterator(view.active.len(), view.active.iter().map(|&i| signal[i]));
            match check_recoverable_with_eig(view.eig_active, &s_active, RECOVERABLE_TOL) {
                Ok(r) => residuals.push(r.residual),
                Err(e) => residual_error = Some(e),
            }
        };
        let trace = run_imp_observed(&problem.features, &config, &mut observer)?;
        if let Some(e) = residual_error {
            return Err(e.into());
        }
        let v = &trace.final_weights;
        let zeros = trace.final_zero_count();
        let sparsity_ok = zeros >= q * spec.imp.per_round;
        let no_false_exclusion = (0..p).all(|i| problem.signal[i].abs() < spec.signal.gamma || v[i] != 0.0);

        let tau = spec.tau();
        let ht_support = support_of(ht_estimator(&problem.features, tau).as_slice());
        let iht_cfg = ThresholdConfig {
            max_iters: spec.baselines.max_iters,
            convergence_tol: spec.baselines.convergence_tol,
            ..ThresholdConfig::new(p, tau, spec.baselines.iht_eta / problem.features.n() as f64)
        };
        let iht_support = iht(&problem.features, &iht_cfg)
            .ok()
            .map(|r| support_of(r.estimate.as_slice()));

        let max_recov_residual = spec
            .verified_mode
            .then(|| residuals.iter().cloned().fold(0.0, f64::max));
        let record = TrialRecord {
            trial,
            seed,
            n: problem.features.n(),
            p,
            k: problem.k(),
            gamma: spec.signal.gamma,
            sigma: spec.noise.sigma,
            delta: spec.delta,
            q,
            sparsity_ok,
            no_false_exclusion,
            min_nz_eig,
            max_recov_residual,
            wall_ms: started.elapsed().as_millis(),
            round_min_nz_eigs: trace.rounds.iter().map(|r| r.min_nonzero_eig).collect(),
            recov_residuals: residuals.clone(),
            signal: problem.signal.as_slice().to_vec(),
            support: problem.support.clone(),
            imp_support: support_of(v),
            ht_support,
            iht_support,
        };
        Ok(TrialOutcome::Completed {
            record: Box::new(record),
            trace,
        })
    }
}

pub fn run_support_recovery(spec: &ExperimentSpec) -> Result<RecoveryReport> {
    let outcomes = (0..spec.trials)
        .into_par_iter()
        .map(|t| run_recovery_trial(spec, t))
        .collect::<Result<Vec<_>>>()?;

    let mut records = Vec::new();
    let mut traces = Vec::new();
    let mut onp_rejections = 0;
    for outcome in outcomes {
        match outcome {
            TrialOutcome::Completed { record, trace } => {
                if spec.verified_mode {
                    traces.push((record.trial, trace));
                }
                records.push(*record);
            }
            TrialOutcome::OnpRejected { .. } => onp_rejections += 1,
        }
    }
    if onp_rejections * 2 > spec.trials {
        return Err(HarnessError::Aborted(format!(
            "{onp_rejections} of {} trials violate the orthogonal nullspace property; \
             the design is inconsistent with the recovery hypotheses",
            spec.trials
        )));
    }
    if records.is_empty() {
        return Err(HarnessError::Aborted("no trial completed".into()));
    }

    let outcomes: Vec<Vec<bool>> = records
        .iter()
        .map(|r| vec![!r.sparsity_ok, !r.no_false_exclusion])
        .collect();
    let summary = McSummary::from_outcomes(&["sparsity", "no_false_exclusion"], &outcomes, spec.delta);
    let sparsity_violations = records.iter().filter(|r| !r.sparsity_ok).count();
    let n_range = records
        .iter()
        .fold((usize::MAX, 0), |(lo, hi), r| (lo.min(r.n), hi.max(r.n)));
    Ok(RecoveryReport {
        summary,
        onp_rejections,
        sparsity_violations,
        n_range,
        records,
        traces,
    })
}
