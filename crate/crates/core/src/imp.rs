//! Iterative magnitude pruning.
//!
//! Each round starts the surviving weights from `w_init`, runs gradient flow
//! to the horizon on the surviving columns, records the trained vector and
//! then prunes the `per_round` smallest surviving magnitudes. Rounds run for
//! `k = 0..=prune_rounds`, so there are `prune_rounds + 1` prune events and
//! the returned weights are those trained in the last round, before its
//! prune.

use std::cmp::Ordering;

use nalgebra::DVector;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::designs::seeded_rng;
use crate::error::{ImpError, Result};
use crate::features::FeatureSet;
use crate::flow::{flow_closed_form_with_eig, FlowProblem, Horizon};
use crate::linalg::{min_nonzero_eig, sym_eig_with_tol, CovMatrix, SymEig};

/// The diagonal mask `M` as an active set plus the order of removal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneMask {
    active: Vec<bool>,
    prune_order: Vec<usize>,
}

impl PruneMask {
    pub fn full(p: usize) -> Self {
        Self {
            active: vec![true; p],
            prune_order: Vec::new(),
        }
    }

    pub fn p(&self) -> usize {
        self.active.len()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.active[i]
    }

    pub fn active(&self) -> &[bool] {
        &self.active
    }

    /// Active indices in increasing order.
    pub fn active_indices(&self) -> Vec<usize> {
        (0..self.p()).filter(|&i| self.active[i]).collect()
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn prune_order(&self) -> &[usize] {
        &self.prune_order
    }

    pub fn prune(&mut self, i: usize) -> Result<()> {
        if i >= self.p() || !self.active[i] {
            return Err(ImpError::InvalidArgument(format!("index {i} is not an active coordinate")));
        }
        self.active[i] = false;
        self.prune_order.push(i);
        Ok(())
    }
}

/// How equal magnitudes are ordered when choosing what to prune.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    #[default]
    LowestIndex,
    /// Ties ordered by a fixed random permutation of `0..p` drawn from the seed.
    Seeded(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImpConfig {
    pub horizon: Horizon,
    pub prune_rounds: usize,
    pub w_init: DVector<f64>,
    pub per_round: usize,
    /// Zero threshold for each round's covariance; `None` uses the default.
    pub rank_tol: Option<f64>,
    pub tie_break: TieBreak,
}

impl ImpConfig {
    /// Zero initialisation, one weight per round.
    pub fn new(p: usize, horizon: Horizon, prune_rounds: usize) -> Self {
        Self {
            horizon,
            prune_rounds,
            w_init: DVector::zeros(p),
            per_round: 1,
            rank_tol: None,
            tie_break: TieBreak::LowestIndex,
        }
    }

    pub fn validate(&self, p: usize) -> Result<()> {
        if self.w_init.len() != p {
            return Err(ImpError::DimensionMismatch(format!(
                "w_init has length {} but the design has {p} features",
                self.w_init.len()
            )));
        }
        if self.per_round == 0 {
            return Err(ImpError::InvalidArgument("per_round must be positive".into()));
        }
        if self.per_round * (self.prune_rounds + 1) > p {
            return Err(ImpError::InvalidArgument(format!(
                "{} rounds of {} prunes exceed p = {p}",
                self.prune_rounds + 1,
                self.per_round
            )));
        }
        if let Some(t) = self.rank_tol {
            if !(t >= 0.0) {
                return Err(ImpError::InvalidArgument(format!("rank_tol must be nonnegative, got {t}")));
            }
        }
        self.horizon.validate()?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    /// Mask in force while this round trained.
    pub mask: PruneMask,
    /// Full-length trained weights, exactly zero off the mask.
    pub weights: Vec<f64>,
    pub pruned: Vec<usize>,
    pub pruned_magnitudes: Vec<f64>,
    /// Smallest non-zero eigenvalue of the round's restricted covariance.
    pub min_nonzero_eig: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpTrace {
    pub rounds: Vec<RoundRecord>,
    pub final_weights: Vec<f64>,
}

impl ImpTrace {
    /// Every pruned index, chronologically.
    pub fn prune_order(&self) -> Vec<usize> {
        self.rounds.iter().flat_map(|r| r.pruned.iter().copied()).collect()
    }

    pub fn final_zero_count(&self) -> usize {
        self.final_weights.iter().filter(|&&w| w == 0.0).count()
    }
}

/// What the engine knows at the end of a training run, before pruning.
pub struct RoundView<'a> {
    pub round: usize,
    pub active: &'a [usize],
    pub init_active: &'a DVector<f64>,
    pub cov_active: &'a CovMatrix,
    pub eig_active: &'a SymEig,
    pub weights_active: &'a DVector<f64>,
}

/// Hook invoked once per round after training.
pub trait RoundObserver {
    fn on_round(&mut self, view: &RoundView<'_>);
}

impl RoundObserver for () {
    fn on_round(&mut self, _view: &RoundView<'_>) {}
}

impl<F: FnMut(&RoundView<'_>)> RoundObserver for F {
    fn on_round(&mut self, view: &RoundView<'_>) {
        self(view)
    }
}

pub fn run_imp(features: &FeatureSet, config: &ImpConfig) -> Result<ImpTrace> {
    run_imp_observed(features, config, &mut ())
}

pub fn run_imp_observed(features: &FeatureSet, config: &ImpConfig, observer: &mut dyn RoundObserver) -> Result<ImpTrace> {
    let p = features.p();
    config.validate(p)?;

    let priority: Vec<usize> = match config.tie_break {
        TieBreak::LowestIndex => (0..p).collect(),
        TieBreak::Seeded(seed) => {
            let mut perm: Vec<usize> = (0..p).collect();
            perm.shuffle(&mut seeded_rng(seed, 0));
            let mut rank = vec![0; p];
            for (r, &i) in perm.iter().enumerate() {
                rank[i] = r;
            }
            rank
        }
    };

    let mut mask = PruneMask::full(p);
    let mut rounds = Vec::with_capacity(config.prune_rounds + 1);
    for round in 0..=config.prune_rounds {
        let active = mask.active_indices();
        let init_active = DVector::from_iterator(active.len(), active.iter().map(|&i| config.w_init[i]));
        let cov_active = features.covariance().restrict(&active);
        let eig_active = sym_eig_with_tol(&cov_active, config.rank_tol)?;
        let problem = FlowProblem {
            features_active: features.columns(&active),
            targets: features.targets().clone(),
            w0_active: init_active.clone(),
            horizon: config.horizon,
            rank_tol: config.rank_tol,
        };
        let solution = flow_closed_form_with_eig(&problem, &eig_active)?;
        observer.on_round(&RoundView {
            round,
            active: &active,
            init_active: &init_active,
            cov_active: &cov_active,
            eig_active: &eig_active,
            weights_active: &solution.weights_active,
        });

        let mut weights = vec![0.0; p];
        for (slot, &i) in active.iter().enumerate() {
            weights[i] = solution.weights_active[slot];
        }

        let mut candidates: Vec<usize> = active.clone();
        candidates.sort_by(|&a, &b| {
            weights[a]
                .abs()
                .partial_cmp(&weights[b].abs())
                .unwrap_or(Ordering::Equal)
                .then(priority[a].cmp(&priority[b]))
        });
        let pruned: Vec<usize> = candidates[..config.per_round].to_vec();
        let pruned_magnitudes = pruned.iter().map(|&i| weights[i].abs()).collect();

        let snapshot = mask.clone();
        for &i in &pruned {
            mask.prune(i)?;
        }
        rounds.push(RoundRecord {
            round,
            mask: snapshot,
            weights,
            pruned,
            pruned_magnitudes,
            min_nonzero_eig: min_nonzero_eig(&eig_active).ok(),
        });
    }

    let final_weights = rounds.last().map(|r| r.weights.clone()).unwrap_or_default();
    Ok(ImpTrace { rounds, final_weights })
}

/// Full pruning ranking: runs until every coordinate has been pruned.
pub fn imp_prune_order(features: &FeatureSet, config: &ImpConfig) -> Result<Vec<usize>> {
    let p = features.p();
    let per_round = config.per_round.max(1);
    if !p.is_multiple_of(per_round) {
        return Err(ImpError::InvalidArgument(format!(
            "a full ranking needs per_round ({per_round}) to divide p ({p})"
        )));
    }
    let full = ImpConfig {
        prune_rounds: p / per_round - 1,
        ..config.clone()
    };
    Ok(run_imp(features, &full)?.prune_order())
}
