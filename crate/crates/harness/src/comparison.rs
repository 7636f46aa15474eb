//! Support recovery of IMP against hard thresholding and IHT over a sweep of
//! noise levels. Each sweep point reuses the recovery trials with only the
//! noise scale changed, so designs and signals are shared across methods.

use rayon::prelude::*;
use serde::Serialize;

use crate::config::ExperimentSpec;
use crate::error::{HarnessError, Result};
use crate::recovery::{run_recovery_trial, TrialOutcome, TrialRecord};

pub const BASELINES_HEADER: [&str; 8] = [
    "sigma",
    "method",
    "trials",
    "exact",
    "exact_rate",
    "mean_f1",
    "mean_support_size",
    "diverged",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Imp,
    Ht,
    Iht,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Imp, Method::Ht, Method::Iht];

    pub fn name(self) -> &'static str {
        match self {
            Method::Imp => "imp",
            Method::Ht => "ht",
            Method::Iht => "iht",
        }
    }

    fn support(self, r: &TrialRecord) -> Option<&[usize]> {
        match self {
            Method::Imp => Some(&r.imp_support),
            Method::Ht => Some(&r.ht_support),
            Method::Iht => r.iht_support.as_deref(),
        }
    }
}

/// F1 score of an estimated support against the true one; both are sorted.
pub fn support_f1(estimate: &[usize], truth: &[usize]) -> f64 {
    if estimate.is_empty() && truth.is_empty() {
        return 1.0;
    }
    let hits = estimate.iter().filter(|i| truth.binary_search(i).is_ok()).count();
    2.0 * hits as f64 / (estimate.len() + truth.len()) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub sigma: f64,
    pub method: Method,
    pub trials: usize,
    pub exact: usize,
    pub exact_rate: f64,
    /// A diverged IHT run scores zero.
    pub mean_f1: f64,
    pub mean_support_size: f64,
    pub diverged: usize,
}

impl ComparisonRow {
    pub fn csv_fields(&self) -> Vec<String> {
        vec![
            self.sigma.to_string(),
            self.method.name().to_string(),
            self.trials.to_string(),
            self.exact.to_string(),
            self.exact_rate.to_string(),
            self.mean_f1.to_string(),
            self.mean_support_size.to_string(),
            self.diverged.to_string(),
        ]
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub rows: Vec<ComparisonRow>,
    pub onp_rejections: usize,
    pub sparsity_violations: usize,
    /// IMP runs whose support exceeded `p - q * per_round`.
    pub oversized_imp_supports: usize,
    /// Every method is exact on every noiseless trial.
    pub noiseless_exact: Option<bool>,
    pub pass: bool,
    #[serde(skip)]
    pub records: Vec<TrialRecord>,
}

fn tally(sigma: f64, method: Method, records: &[TrialRecord]) -> ComparisonRow {
    let trials = records.len();
    let mut exact = 0;
    let mut f1 = 0.0;
    let mut size = 0usize;
    let mut diverged = 0;
    for r in records {
        match method.support(r) {
            Some(s) => {
                exact += usize::from(s == r.support.as_slice());
                f1 += support_f1(s, &r.support);
                size += s.len();
            }
            None => diverged += 1,
        }
    }
    let t = trials.max(1) as f64;
    ComparisonRow {
        sigma,
        method,
        trials,
        exact,
        exact_rate: exact as f64 / t,
        mean_f1: f1 / t,
        mean_support_size: size as f64 / (trials - diverged).max(1) as f64,
        diverged,
    }
}

pub fn run_baseline_comparison(spec: &ExperimentSpec) -> Result<ComparisonReport> {
    let mut rows = Vec::new();
    let mut all_records = Vec::new();
    let mut onp_rejections = 0;
    let mut noiseless_exact: Option<bool> = None;
    let max_support = spec.design.p - spec.prune_rounds() * spec.imp.per_round;

    for &sigma in &spec.baselines.sigmas {
        let mut point = spec.clone();
        point.noise.sigma = sigma;
        let outcomes = (0..spec.trials)
            .into_par_iter()
            .map(|t| run_recovery_trial(&point, t))
            .collect::<Result<Vec<_>>>()?;
        let mut records = Vec::with_capacity(outcomes.len());
        for o in outcomes {
            match o {
                TrialOutcome::Completed { record, .. } => records.push(*record),
                TrialOutcome::OnpRejected { .. } => onp_rejections += 1,
            }
        }
        if records.is_empty() {
            return Err(HarnessError::Aborted(format!("no trial completed at sigma = {sigma}")));
        }
        for m in Method::ALL {
            let row = tally(sigma, m, &records);
            if sigma == 0.0 {
                let exact = row.exact == row.trials;
                noiseless_exact = Some(noiseless_exact.unwrap_or(true) && exact);
            }
            rows.push(row);
        }
        all_records.extend(records);
    }

    let sparsity_violations = all_records.iter().filter(|r| !r.sparsity_ok).count();
    let oversized_imp_supports = all_records
        .iter()
        .filter(|r| r.imp_support.len() > max_support)
        .count();
    Ok(ComparisonReport {
        pass: noiseless_exact != Some(false) && sparsity_violations == 0 && oversized_imp_supports == 0,
        rows,
        onp_rejections,
        sparsity_violations,
        oversized_imp_supports,
        noiseless_exact,
        records: all_records,
    })
}
