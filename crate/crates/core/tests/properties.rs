use imp_core::baselines::{alignment_order, hard_threshold, ht_estimator, iht, support_of, ThresholdConfig};
use imp_core::designs::{
    gen_incoherent_design, gen_orthonormal_design, gen_sparse_signal, gen_uniform_corr_design, seeded_rng,
    AmplitudeLaw,
};
use imp_core::flow::{flow_closed_form, flow_rk4, FlowProblem, Horizon};
use imp_core::imp::{imp_prune_order, run_imp, ImpConfig};
use imp_core::linalg::{max_abs, min_nonzero_eig, pseudo_inverse, sym_eig, CovMatrix};
use imp_core::theory::{sample_bound_lemma1_raw, sample_bound_thm1_raw, BoundInputs};
use imp_core::FeatureSet;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = seeded_rng(seed, 99);
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn gaussian_vec(len: usize, seed: u64) -> DVector<f64> {
    let mut rng = seeded_rng(seed, 98);
    DVector::from_fn(len, |_, _| rng.sample(StandardNormal))
}

/// PSD matrix of the requested rank: `B B^T / cols` with `B` Gaussian `p x rank`.
fn psd_of_rank(p: usize, rank: usize, seed: u64) -> CovMatrix {
    let b = gaussian(p, rank, seed);
    CovMatrix::new(&b * b.transpose() / rank.max(1) as f64, rank.max(1)).unwrap()
}

/// Naive IMP: normal equations solved by LU on the active columns.
fn brute_force_imp_order(phi: &DMatrix<f64>, y: &DVector<f64>) -> Vec<usize> {
    let p = phi.ncols();
    let mut active: Vec<usize> = (0..p).collect();
    let mut order = Vec::new();
    while !active.is_empty() {
        let a = phi.select_columns(&active);
        let w = (a.transpose() * &a).lu().solve(&(a.transpose() * y)).expect("full rank");
        let (slot, _) = w
            .iter()
            .enumerate()
            .min_by(|x, y| x.1.abs().total_cmp(&y.1.abs()).then(x.0.cmp(&y.0)))
            .unwrap();
        order.push(active.remove(slot));
    }
    order
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eig_reconstructs_and_is_orthonormal(p in 1usize..10, seed in any::<u64>()) {
        let a = psd_of_rank(p, p, seed);
        let e = sym_eig(&a).unwrap();
        let v = &e.eigenvectors;
        let rebuilt = v * DMatrix::from_diagonal(&e.eigenvalues) * v.transpose();
        let eps = 1e-9 * max_abs(a.entries()).max(1.0);
        prop_assert!(max_abs(&(rebuilt - a.entries())) <= eps);
        prop_assert!(max_abs(&(v.transpose() * v - DMatrix::identity(p, p))) <= 1e-9);
        prop_assert!(e.eigenvalues.as_slice().windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(sym_eig(&a).unwrap(), e);
    }

    #[test]
    fn penrose_identities(p in 2usize..12, seed in any::<u64>(), half in any::<bool>()) {
        let rank = if half { p / 2 } else { p };
        let a = psd_of_rank(p, rank, seed);
        let pinv = pseudo_inverse(&sym_eig(&a).unwrap());
        let m = a.entries();
        prop_assert!(max_abs(&(&pinv * m * &pinv - &pinv)) <= 1e-8 * max_abs(&pinv).max(1.0));
        prop_assert!(max_abs(&(m * &pinv * m - m)) <= 1e-8 * max_abs(m).max(1.0));
        prop_assert!(max_abs(&(&pinv - pinv.transpose())) <= 1e-12 * max_abs(&pinv).max(1.0));
    }

    #[test]
    fn pinv_matches_direct_inverse(p in 1usize..8, seed in any::<u64>()) {
        let b = gaussian(p + 3, p, seed);
        let a = CovMatrix::from_design(&b).unwrap();
        let pinv = pseudo_inverse(&sym_eig(&a).unwrap());
        let direct = a.entries().clone().lu().solve(&DMatrix::identity(p, p)).unwrap();
        prop_assert!(max_abs(&(pinv - &direct)) <= 1e-8 * max_abs(&direct).max(1.0));
    }

    #[test]
    fn interlacing_full_rank(p in 2usize..9, seed in any::<u64>(), drop_mask in any::<u16>()) {
        let b = gaussian(p + 4, p, seed);
        let a = CovMatrix::from_design(&b).unwrap();
        let keep: Vec<usize> = (0..p).filter(|&i| drop_mask >> i & 1 == 0).collect();
        prop_assume!(!keep.is_empty());
        let full = min_nonzero_eig(&sym_eig(&a).unwrap()).unwrap();
        let sub = min_nonzero_eig(&sym_eig(&a.restrict(&keep)).unwrap()).unwrap();
        prop_assert!(sub >= full * (1.0 - 1e-12));
    }

    #[test]
    fn flow_loss_is_monotone(n in 1usize..15, m in 1usize..8, seed in any::<u64>(), t1 in 0.01f64..5.0, dt in 0.01f64..5.0) {
        let phi = gaussian(n, m, seed);
        let y = gaussian_vec(n, seed);
        let w0 = gaussian_vec(m, seed ^ 1);
        let at = |t: f64| {
            let pr = FlowProblem::new(phi.clone(), y.clone(), w0.clone(), Horizon::Finite(t)).unwrap();
            pr.loss(&flow_closed_form(&pr).unwrap().weights_active)
        };
        prop_assert!(at(t1 + dt) <= at(t1) + 1e-12);
    }

    #[test]
    fn flow_converges_at_spectral_rate(n in 8usize..20, m in 1usize..6, seed in any::<u64>(), t in 0.05f64..10.0) {
        let phi = gaussian(n, m, seed);
        let y = gaussian_vec(n, seed);
        let w0 = gaussian_vec(m, seed ^ 2);
        let limit = flow_closed_form(&FlowProblem::new(phi.clone(), y.clone(), w0.clone(), Horizon::Infinite).unwrap()).unwrap();
        let pr = FlowProblem::new(phi, y, w0.clone(), Horizon::Finite(t)).unwrap();
        let lambda = min_nonzero_eig(&sym_eig(&pr.covariance().unwrap()).unwrap()).unwrap();
        let wt = flow_closed_form(&pr).unwrap().weights_active;
        let lhs = (&wt - &limit.weights_active).norm();
        let rhs = (-lambda * t).exp() * (&w0 - &limit.weights_active).norm() + 1e-9;
        prop_assert!(lhs <= rhs, "{lhs} > {rhs}");
        // Stationarity of the limit.
        prop_assert!(pr.gradient(&limit.weights_active).norm() <= 1e-8);
    }

    #[test]
    fn flow_freezes_null_space(n in 1usize..5, extra in 1usize..5, seed in any::<u64>(), t in 0.1f64..20.0) {
        // More columns than rows: non-trivial null space.
        let m = n + extra;
        let phi = gaussian(n, m, seed);
        let y = gaussian_vec(n, seed);
        let w0 = gaussian_vec(m, seed ^ 3);
        let pr = FlowProblem::new(phi, y, w0.clone(), Horizon::Finite(t)).unwrap();
        let eig = sym_eig(&pr.covariance().unwrap()).unwrap();
        let null = eig.null_basis();
        prop_assert!(null.ncols() >= extra);
        let w = flow_closed_form(&pr).unwrap().weights_active;
        let drift = null.tr_mul(&(w - w0)).amax();
        prop_assert!(drift <= 1e-10, "null-space drift {drift}");
    }

    #[test]
    fn imp_invariants(n in 3usize..20, p in 1usize..10, q_frac in 0.0f64..1.0, seed in any::<u64>(), finite in any::<bool>()) {
        let phi = gaussian(n, p, seed);
        let f = FeatureSet::new(phi, gaussian_vec(n, seed)).unwrap();
        let q = ((p - 1) as f64 * q_frac) as usize;
        let horizon = if finite { Horizon::Finite(2.0) } else { Horizon::Infinite };
        let cfg = ImpConfig { w_init: gaussian_vec(p, seed ^ 5), ..ImpConfig::new(p, horizon, q) };
        let trace = run_imp(&f, &cfg).unwrap();
        prop_assert_eq!(trace.rounds.len(), q + 1);
        prop_assert!(trace.final_zero_count() >= q);
        for (k, round) in trace.rounds.iter().enumerate() {
            prop_assert_eq!(round.mask.prune_order().len(), k);
            prop_assert_eq!(round.mask.active_count() + k, p);
            for i in 0..p {
                if !round.mask.is_active(i) {
                    prop_assert_eq!(round.weights[i], 0.0);
                }
            }
            let cut = round.pruned_magnitudes.iter().cloned().fold(0.0, f64::max);
            for i in round.mask.active_indices() {
                if !round.pruned.contains(&i) {
                    prop_assert!(cut <= round.weights[i].abs());
                }
            }
        }
        let order = trace.prune_order();
        let mut distinct = order.clone();
        distinct.sort_unstable();
        distinct.dedup();
        prop_assert_eq!(distinct.len(), order.len());
        prop_assert_eq!(run_imp(&f, &cfg).unwrap(), trace);
    }

    #[test]
    fn imp_matches_brute_force_on_full_rank(n in 12usize..25, p in 1usize..8, seed in any::<u64>()) {
        let phi = gaussian(n, p, seed);
        let y = gaussian_vec(n, seed);
        let f = FeatureSet::new(phi.clone(), y.clone()).unwrap();
        let ours = imp_prune_order(&f, &ImpConfig::new(p, Horizon::Infinite, 0)).unwrap();
        let oracle = brute_force_imp_order(&phi, &y);
        prop_assert_eq!(ours, oracle);

        // Round-0 weights equal the direct solve (1/n) Y^{-1} P^T y.
        let trace = run_imp(&f, &ImpConfig::new(p, Horizon::Infinite, 0)).unwrap();
        let direct = (phi.transpose() * &phi).lu().solve(&(phi.transpose() * &y)).unwrap();
        let got = DVector::from_vec(trace.final_weights.clone());
        prop_assert!((got - &direct).amax() <= 1e-8 * direct.amax().max(1.0));
    }

    #[test]
    fn orthonormal_imp_equals_alignment(p in 1usize..12, extra in 0usize..10, seed in any::<u64>()) {
        let n = p + extra;
        let f = gen_orthonormal_design(n, p, seed).unwrap();
        let f = f.with_targets(gaussian_vec(n, seed)).unwrap();
        let ours = imp_prune_order(&f, &ImpConfig::new(p, Horizon::Infinite, 0)).unwrap();
        prop_assert_eq!(ours, alignment_order(&f));
    }

    #[test]
    fn alignment_order_is_scale_invariant(p in 1usize..10, seed in any::<u64>(), scale in 1e-3f64..1e3) {
        let f = FeatureSet::new(gaussian(p + 2, p, seed), gaussian_vec(p + 2, seed)).unwrap();
        let scaled = f.with_targets(f.targets() * scale).unwrap();
        prop_assert_eq!(alignment_order(&f), alignment_order(&scaled));
    }

    #[test]
    fn hard_threshold_shrinks_support(v in proptest::collection::vec(-5.0f64..5.0, 0..20), tau in 0.0f64..3.0) {
        let v = DVector::from_vec(v);
        let once = hard_threshold(&v, tau);
        let in_support = support_of(v.as_slice());
        prop_assert!(support_of(once.as_slice()).iter().all(|i| in_support.contains(i)));
        prop_assert!(once.iter().all(|&x| x == 0.0 || x.abs() > tau));
        prop_assert_eq!(hard_threshold(&once, tau), once);
    }

    #[test]
    fn bounds_are_monotone(sigma in 0.1f64..5.0, scale in 0.05f64..2.0, lambda in 0.1f64..3.0, p in 1usize..200, delta in 0.01f64..0.9) {
        let b = BoundInputs { sigma, scale, lambda_min_nz: lambda, p, delta };
        let base = sample_bound_thm1_raw(&b).unwrap();
        let louder = sample_bound_thm1_raw(&BoundInputs { sigma: sigma * 1.5, ..b }).unwrap();
        let wider = sample_bound_thm1_raw(&BoundInputs { scale: scale * 1.5, ..b }).unwrap();
        let bigger = sample_bound_thm1_raw(&BoundInputs { p: p + 1, ..b }).unwrap();
        let stricter = sample_bound_thm1_raw(&BoundInputs { delta: delta * 0.5, ..b }).unwrap();
        prop_assert!(louder > base);
        prop_assert!(wider < base);
        prop_assert!(bigger > base);
        prop_assert!(stricter > base);
        let lemma = sample_bound_lemma1_raw(&BoundInputs { scale: scale / 2.0, ..b }).unwrap();
        prop_assert_eq!(lemma, base);
    }

    #[test]
    fn generated_covariances_are_normalized(p in 1usize..8, extra in 0usize..6, alpha in 0.01f64..0.95, seed in any::<u64>()) {
        let n = p + extra;
        let ortho = gen_orthonormal_design(n, p, seed).unwrap();
        prop_assert!(ortho.normalized());
        let uni = gen_uniform_corr_design(n, p, alpha, seed).unwrap();
        prop_assert!(uni.normalized());
        let ev = &uni.eig().eigenvalues;
        for i in 0..p - 1 {
            prop_assert!((ev[i] - (1.0 - alpha)).abs() <= 1e-8);
        }
        prop_assert!((ev[p - 1] - (1.0 + (p - 1) as f64 * alpha)).abs() <= 1e-8);
        let (inc, _) = gen_incoherent_design(n, p, seed).unwrap();
        prop_assert!(inc.normalized());
        prop_assert!(inc.eig().eigenvalues[0] >= -inc.eig().rank_tol);
    }
}

#[test]
fn uniform_corr_small_alpha_follows_alignment_on_same_sign_scores() {
    // With every projection positive the shift introduced by the uniform
    // correlation is common to all coordinates and cannot reorder them.
    for seed in 0..100u64 {
        let f = gen_uniform_corr_design(40, 10, 0.01, seed).unwrap();
        let mut rng = seeded_rng(seed, 7);
        let theta = DVector::from_fn(10, |_, _| rng.gen_range(0.5..2.0));
        let f = f.with_targets(f.phi() * theta).unwrap();
        let ours = imp_prune_order(&f, &ImpConfig::new(10, Horizon::Infinite, 0)).unwrap();
        assert_eq!(ours, alignment_order(&f), "seed {seed}");
    }
}

#[test]
fn incoherent_first_prune_follows_alignment_under_gap_condition() {
    let p = 4;
    let mut checked = 0;
    for seed in 0..400u64 {
        let (f, delta) = gen_incoherent_design(20_000, p, seed).unwrap();
        if delta > 1.0 / (10.0 * p as f64) {
            continue;
        }
        let f = f.with_targets(gaussian_vec(20_000, seed)).unwrap();
        let scores = f.projections().map(|c| c.abs() / f.n() as f64);
        let order = alignment_order(&f);
        let gap = scores[order[1]] - scores[order[0]];
        if gap <= 10.0 * p as f64 * delta * scores.amax() {
            continue;
        }
        checked += 1;
        let ours = imp_prune_order(&f, &ImpConfig::new(p, Horizon::Infinite, 0)).unwrap();
        assert_eq!(ours[0], order[0], "seed {seed}");
    }
    assert!(checked >= 10, "only {checked} instances met the gap condition");
}

#[test]
fn rk4_oracle_agrees_on_random_problem() {
    let phi = gaussian(10, 6, 2024);
    let y = gaussian_vec(10, 2024);
    let pr = FlowProblem::new(phi, y, DVector::zeros(6), Horizon::Finite(5.0)).unwrap();
    let exact = flow_closed_form(&pr).unwrap().weights_active;
    let rk = flow_rk4(&pr, 10_000).unwrap();
    assert!(rk.warning.is_none());
    let err = (&rk.solution.weights_active - &exact).amax();
    assert!(err <= 1e-6 * exact.amax().max(1.0), "rk4 error {err}");
}

#[test]
fn support_is_uniform_over_seeds() {
    let (p, k, draws) = (10usize, 3usize, 10_000u64);
    let mut counts = vec![0usize; p];
    for seed in 0..draws {
        let (_, support) = gen_sparse_signal(p, k, 1.0, AmplitudeLaw::Rademacher, seed).unwrap();
        for i in support {
            counts[i] += 1;
        }
    }
    let expected = (draws as usize * k) as f64 / p as f64;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99th percentile of chi-squared with 9 degrees of freedom.
    assert!(chi2 < 21.666, "chi2 = {chi2}, counts {counts:?}");
}

#[test]
fn thresholding_methods_agree_with_imp_on_noiseless_orthonormal() {
    for seed in 0..40u64 {
        let p = 2 + (seed as usize % 11);
        let k = 1 + (seed as usize % p);
        let n = p + 5;
        let gamma = 0.5;
        let f = gen_orthonormal_design(n, p, seed).unwrap();
        let (s, support) = gen_sparse_signal(p, k, gamma, AmplitudeLaw::Uniform, seed).unwrap();
        let f = f.with_targets(f.phi() * &s).unwrap();

        let ht = ht_estimator(&f, gamma / 2.0);
        let cfg = ThresholdConfig::new(p, gamma / 2.0, 1.0 / n as f64);
        let it = iht(&f, &cfg).unwrap();
        assert!(it.converged);
        let trace = run_imp(&f, &ImpConfig::new(p, Horizon::Infinite, p - k)).unwrap();

        assert_eq!(support_of(ht.as_slice()), support, "seed {seed}");
        assert_eq!(support_of(it.estimate.as_slice()), support, "seed {seed}");
        assert_eq!(trace.rounds[p - k].mask.active_indices(), support, "seed {seed}");
        assert_eq!(support_of(&trace.final_weights), support, "seed {seed}");
    }
}
