//! Experiment configuration: one JSON document, unknown keys rejected.
//!
//! Every block has defaults, so `{}` is a valid configuration. The defaults
//! are the support-recovery setting: orthonormal design with `p = 50`,
//! `k = 5` Rademacher amplitudes at `gamma = 0.5`, Gaussian noise with
//! `sigma = 1`, `delta = 0.1`, `1000` trials.

use std::path::{Path, PathBuf};

use imp_core::designs::{AmplitudeLaw, NoiseKind, NoiseSpec, SignalSpec};
use imp_core::flow::Horizon;
use imp_core::imp::TieBreak;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SupportRecovery,
    HeuristicEquivalence,
    BaselineComparison,
    Lemma1Check,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::SupportRecovery => "support_recovery",
            ExperimentKind::HeuristicEquivalence => "heuristic_equivalence",
            ExperimentKind::BaselineComparison => "baseline_comparison",
            ExperimentKind::Lemma1Check => "lemma1_check",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignKind {
    Orthonormal,
    UniformCorr,
    Incoherent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DesignConfig {
    pub kind: DesignKind,
    pub p: usize,
    /// Sample count. When absent the experiment derives it from its bound.
    pub n: Option<usize>,
    /// Off-diagonal correlation for `uniform_corr`.
    pub alpha: Option<f64>,
    /// Heuristic sweeps cycle `p` through `p_min..=p` when set.
    pub p_min: Option<usize>,
}

impl Default for DesignConfig {
    fn default() -> Self {
        Self {
            kind: DesignKind::Orthonormal,
            p: 50,
            n: None,
            alpha: None,
            p_min: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ImpSettings {
    pub horizon: Horizon,
    /// Defaults to `p - k`.
    pub prune_rounds: Option<usize>,
    pub per_round: usize,
    pub rank_tol: Option<f64>,
    pub tie_break: TieBreak,
}

impl Default for ImpSettings {
    fn default() -> Self {
        Self {
            horizon: Horizon::Infinite,
            prune_rounds: None,
            per_round: 1,
            rank_tol: None,
            tie_break: TieBreak::LowestIndex,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineSettings {
    /// Threshold; defaults to `gamma / 2`.
    pub tau: Option<f64>,
    /// IHT step on the normalised design `phi / sqrt(n)`; the raw step on
    /// `phi` is `iht_eta / n`.
    pub iht_eta: f64,
    pub max_iters: usize,
    pub convergence_tol: f64,
    /// Noise levels swept by the comparison.
    pub sigmas: Vec<f64>,
}

impl Default for BaselineSettings {
    fn default() -> Self {
        Self {
            tau: None,
            iht_eta: 1.0,
            max_iters: 10_000,
            convergence_tol: 1e-10,
            sigmas: vec![0.0, 0.5, 1.0, 2.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeuristicSettings {
    /// Alignment scores `|phi_j^T y| / n` closer than this mark a trial degenerate.
    pub tie_tol: f64,
    /// Incoherent designs: required score gap in units of `p delta_pw max_j |phi_j^T y| / n`.
    pub gap_factor: f64,
    /// Incoherent designs: redraws allowed to meet the gap condition.
    pub max_redraws: usize,
}

impl Default for HeuristicSettings {
    fn default() -> Self {
        Self {
            tie_tol: 1e-9,
            gap_factor: 10.0,
            max_redraws: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Lemma1Settings {
    /// Deviation threshold; defaults to `gamma / 2`.
    pub epsilon: Option<f64>,
    pub noise_kinds: Vec<NoiseKind>,
    /// Sample count as a multiple of the bound.
    pub n_multiplier: usize,
}

impl Default for Lemma1Settings {
    fn default() -> Self {
        Self {
            epsilon: None,
            noise_kinds: NoiseKind::ALL.to_vec(),
            n_multiplier: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSpec {
    pub kind: Option<ExperimentKind>,
    pub design: DesignConfig,
    pub signal: SignalSpec,
    pub noise: NoiseSpec,
    pub delta: f64,
    pub imp: ImpSettings,
    pub baselines: BaselineSettings,
    pub heuristic: HeuristicSettings,
    pub lemma1: Lemma1Settings,
    pub trials: usize,
    pub base_seed: u64,
    pub out_dir: PathBuf,
    pub threads: Option<usize>,
    pub verified_mode: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            kind: None,
            design: DesignConfig::default(),
            signal: SignalSpec {
                k: 5,
                gamma: 0.5,
                amplitude: AmplitudeLaw::Rademacher,
            },
            noise: NoiseSpec {
                kind: NoiseKind::Gaussian,
                sigma: 1.0,
            },
            delta: 0.1,
            imp: ImpSettings::default(),
            baselines: BaselineSettings::default(),
            heuristic: HeuristicSettings::default(),
            lemma1: Lemma1Settings::default(),
            trials: 1000,
            base_seed: 0,
            out_dir: PathBuf::from("out"),
            threads: None,
            verified_mode: false,
        }
    }
}

impl ExperimentSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serialises")
    }

    /// Seed of trial `t`.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.base_seed.wrapping_add(trial as u64)
    }

    /// Checks cross-field constraints and fixes the experiment kind.
    pub fn validate_for(&mut self, kind: ExperimentKind) -> Result<()> {
        match self.kind {
            Some(k) if k != kind => {
                return Err(HarnessError::Config(format!(
                    "config declares kind '{}' but the command runs '{}'",
                    k.name(),
                    kind.name()
                )))
            }
            _ => self.kind = Some(kind),
        }
        let bad = |msg: String| Err(HarnessError::Config(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.design.p == 0 {
            return bad("design.p must be positive".into());
        }
        if let Some(pm) = self.design.p_min {
            if pm == 0 || pm > self.design.p {
                return bad(format!("design.p_min must lie in 1..=p, got {pm}"));
            }
        }
        if self.design.kind == DesignKind::UniformCorr {
            match self.design.alpha {
                Some(a) if a > 0.0 && a < 1.0 => {}
                other => return bad(format!("uniform_corr design needs alpha in (0, 1), got {other:?}")),
            }
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return bad(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.noise.sigma >= 0.0) {
            return bad(format!("noise.sigma must be nonnegative, got {}", self.noise.sigma));
        }
        if !(self.signal.gamma > 0.0) {
            return bad(format!("signal.gamma must be positive, got {}", self.signal.gamma));
        }
        if let Horizon::Finite(t) = self.imp.horizon {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("imp.horizon must be positive, got {t}"));
            }
        }
        if self.imp.per_round == 0 {
            return bad("imp.per_round must be positive".into());
        }
        match kind {
            ExperimentKind::SupportRecovery | ExperimentKind::BaselineComparison => {
                if self.signal.k == 0 || self.signal.k > self.design.p {
                    return bad(format!("signal.k must lie in 1..=p, got {}", self.signal.k));
                }
                let q = self.prune_rounds();
                if self.imp.per_round * (q + 1) > self.design.p {
                    return bad(format!(
                        "{} rounds of {} prunes exceed p = {}",
                        q + 1,
                        self.imp.per_round,
                        self.design.p
                    ));
                }
            }
            ExperimentKind::HeuristicEquivalence => {
                if self.heuristic.tie_tol < 0.0 || self.heuristic.gap_factor < 0.0 {
                    return bad("heuristic tolerances must be nonnegative".into());
                }
            }
            ExperimentKind::Lemma1Check => {
                if self.lemma1.noise_kinds.is_empty() {
                    return bad("lemma1.noise_kinds must not be empty".into());
                }
                if self.lemma1.n_multiplier == 0 {
                    return bad("lemma1.n_multiplier must be positive".into());
                }
                if matches!(self.lemma1.epsilon, Some(e) if !(e > 0.0)) {
                    return bad("lemma1.epsilon must be positive".into());
                }
                if !(self.noise.sigma > 0.0) {
                    return bad("lemma1 check needs noise.sigma > 0 to size n".into());
                }
            }
        }
        if kind == ExperimentKind::BaselineComparison {
            let b = &self.baselines;
            if b.sigmas.is_empty() || b.sigmas.iter().any(|s| !(*s >= 0.0)) {
                return bad("baselines.sigmas must be a non-empty list of nonnegative values".into());
            }
            if !(b.iht_eta > 0.0) || b.max_iters == 0 {
                return bad("baselines.iht_eta and max_iters must be positive".into());
            }
            if matches!(b.tau, Some(t) if !(t >= 0.0)) {
                return bad("baselines.tau must be nonnegative".into());
            }
        }
        Ok(())
    }

    /// IMP rounds `q`: configured, or `p - k`.
    pub fn prune_rounds(&self) -> usize {
        self.imp
            .prune_rounds
            .unwrap_or(self.design.p.saturating_sub(self.signal.k))
    }

    pub fn tau(&self) -> f64 {
        self.baselines.tau.unwrap_or(self.signal.gamma / 2.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.lemma1.epsilon.unwrap_or(self.signal.gamma / 2.0)
    }
}
