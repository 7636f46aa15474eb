use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

/// Exact (Clopper-Pearson) two-sided confidence interval for a binomial
/// proportion with `failures` successes out of `trials`.
pub fn clopper_pearson(failures: usize, trials: usize, confidence: f64) -> (f64, f64) {
    assert!(trials > 0 && failures <= trials, "invalid binomial counts {failures}/{trials}");
    let tail = (1.0 - confidence) / 2.0;
    let x = failures as f64;
    let n = trials as f64;
    let lower = if failures == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0).expect("positive shape").inverse_cdf(tail)
    };
    let upper = if failures == trials {
        1.0
    } else {
        Beta::new(x + 1.0, n - x).expect("positive shape").inverse_cdf(1.0 - tail)
    };
    (lower, upper)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionTally {
    pub name: String,
    pub failures: usize,
    pub rate: f64,
    pub ci95: (f64, f64),
}

/// Aggregate of a Monte Carlo run judged against a failure budget `delta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub trials: usize,
    pub criteria: Vec<CriterionTally>,
    /// Trials failing at least one criterion.
    pub failures: usize,
    pub failure_rate: f64,
    pub ci95: (f64, f64),
    pub delta: f64,
    /// `failure_rate <= delta`.
    pub pass: bool,
    /// Whether the upper end of the interval is also within budget.
    pub upper_ci_within_delta: bool,
}

impl McSummary {
    /// `outcomes[t][c]` is true when trial `t` failed criterion `c`.
    /// The result does not depend on trial order.
    pub fn from_outcomes(names: &[&str], outcomes: &[Vec<bool>], delta: f64) -> Self {
        let trials = outcomes.len();
        assert!(trials > 0, "a summary needs at least one trial");
        let criteria = names
            .iter()
            .enumerate()
            .map(|(c, name)| {
                let failures = outcomes.iter().filter(|o| o[c]).count();
                CriterionTally {
                    name: (*name).to_string(),
                    failures,
                    rate: failures as f64 / trials as f64,
                    ci95: clopper_pearson(failures, trials, 0.95),
                }
            })
            .collect();
        let failures = outcomes.iter().filter(|o| o.iter().any(|&f| f)).count();
        let failure_rate = failures as f64 / trials as f64;
        let ci95 = clopper_pearson(failures, trials, 0.95);
        Self {
            trials,
            criteria,
            failures,
            failure_rate,
            ci95,
            delta,
            pass: failure_rate <= delta,
            upper_ci_within_delta: ci95.1 <= delta,
        }
    }
}
