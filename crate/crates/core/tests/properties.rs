use hidim_ustat::experiments::{
    build_limits, simulate, tail_curve_from, FnSource, GridRule, LimitKind, Theory,
};
use hidim_ustat::kernels::Kernel;
use hidim_ustat::limits::{
    chisq_matched_limit, gamma_matched_limit, kolmogorov_distance, limit_cdf, limit_moments, nondegenerate_limit,
    LimitSpec,
};
use hidim_ustat::model::{CovSpec, MeanShiftModel, RngStream};
use hidim_ustat::moments::{closed_form_ksd_moments, closed_form_mmd_rbf_moments, MomentSet};
use hidim_ustat::ustat::{ksd_summand_identity, mmd_summand, u_statistic, PairedSample, SummandSpec};
use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn vec_of(d: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-4.0f64..4.0, d)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn summands_are_symmetric(
        (x, y, xp, yp) in (1usize..8).prop_flat_map(|d| (vec_of(d), vec_of(d), vec_of(d), vec_of(d))),
        gamma in 0.1f64..50.0,
    ) {
        let k = Kernel::Rbf { gamma };
        let a = mmd_summand(&k, &x, &y, &xp, &yp);
        let b = mmd_summand(&k, &xp, &yp, &x, &y);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        let a = ksd_summand_identity(gamma, &x, &xp);
        let b = ksd_summand_identity(gamma, &xp, &x);
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        let lin = Kernel::Linear;
        prop_assert!((mmd_summand(&lin, &x, &y, &xp, &yp) - mmd_summand(&lin, &xp, &yp, &x, &y)).abs() <= 1e-12);
    }

    #[test]
    fn u_statistic_is_permutation_invariant(n in 2usize..12, d in 1usize..5, seed in 0u64..1000, gamma in 0.5f64..10.0) {
        let model = MeanShiftModel::first_coordinate(d, 1.0, CovSpec::Identity).unwrap();
        let data = PairedSample::draw_from(&model, n, RngStream::new(seed, 0, 0), true).unwrap();
        let spec = SummandSpec::Mmd { kernel: Kernel::Rbf { gamma } };
        let perm: Vec<usize> = (0..n).rev().collect();
        let a = u_statistic(&spec, &data).unwrap();
        let b = u_statistic(&spec, &data.permuted(&perm)).unwrap();
        prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn closed_forms_have_rho_at_least_one(d in 1usize..=10_000, lg in -1.0f64..4.5, m2 in 0.001f64..30.0) {
        let g = 10f64.powf(lg);
        for ms in [closed_form_ksd_moments(d, g, m2).unwrap(), closed_form_mmd_rbf_moments(d, g, m2).unwrap()] {
            prop_assert!(ms.mean.is_finite() && ms.sigma_cond.is_finite() && ms.sigma_full.is_finite());
            if ms.sigma_cond > 0.0 {
                prop_assert!(ms.rho_d() >= 1.0 - 1e-12, "rho {} at d={d} g={g} m={m2}", ms.rho_d());
            }
        }
    }

    #[test]
    fn null_has_zero_conditional_variance(d in 1usize..=10_000, lg in -1.0f64..4.5) {
        let g = 10f64.powf(lg);
        prop_assert_eq!(closed_form_ksd_moments(d, g, 0.0).unwrap().sigma_cond, 0.0);
        prop_assert_eq!(closed_form_mmd_rbf_moments(d, g, 0.0).unwrap().sigma_cond, 0.0);
    }

    #[test]
    fn matched_limits_reproduce_moments(mean in 0.01f64..100.0, s2c in 0.0f64..10.0, s2f in 0.01f64..1e4, n in 2usize..2000) {
        let ms = MomentSet::closed(mean, s2c, s2f);
        let v = 2.0 * s2f / (n * (n - 1)) as f64;
        for spec in [gamma_matched_limit(&ms, n).unwrap(), chisq_matched_limit(&ms, n).unwrap()] {
            let lm = limit_moments(&spec).unwrap();
            prop_assert!((lm.mean - mean).abs() <= 1e-12 * mean);
            prop_assert!((lm.variance - v).abs() <= 1e-12 * v);
        }
        let lm = limit_moments(&nondegenerate_limit(&ms, n).unwrap()).unwrap();
        prop_assert!((lm.variance - 4.0 * s2c / n as f64).abs() <= 1e-12 * lm.variance.max(1e-300));
    }

    #[test]
    fn cdfs_are_monotone(mean in 0.1f64..10.0, s2f in 0.1f64..100.0, n in 2usize..100, a in -5.0f64..5.0, b in -5.0f64..5.0) {
        let ms = MomentSet::closed(mean, 1.0, s2f);
        let (lo, hi) = (a.min(b), a.max(b));
        for spec in [gamma_matched_limit(&ms, n).unwrap(), chisq_matched_limit(&ms, n).unwrap(), nondegenerate_limit(&ms, n).unwrap()] {
            let (fa, fb) = (limit_cdf(&spec, mean + lo).unwrap(), limit_cdf(&spec, mean + hi).unwrap());
            prop_assert!((0.0..=1.0).contains(&fa) && (0.0..=1.0).contains(&fb));
            prop_assert!(fa <= fb);
        }
    }

    #[test]
    fn kolmogorov_distance_is_a_probability(mut samples in prop::collection::vec(-10.0f64..10.0, 1..200), mean in -3.0f64..3.0, var in 0.01f64..10.0) {
        samples.sort_by(f64::total_cmp);
        let ks = kolmogorov_distance(&samples, &LimitSpec::Gaussian { mean, var }).unwrap();
        prop_assert!((0.0..=1.0).contains(&ks));
    }

    #[test]
    fn harness_curves_are_monotone_and_replayable(seed in 0u64..500, shift in -2.0f64..2.0, scale in 0.1f64..3.0) {
        let src = FnSource(move |s: RngStream| shift + scale * s.rng().sample::<f64, _>(StandardNormal));
        let sim = simulate(&src, 3, 40, seed).unwrap();
        let again = simulate(&src, 3, 40, seed).unwrap();
        prop_assert_eq!(&sim, &again);
        let ms = MomentSet::closed(shift, 8.0 * scale * scale, 49.0 * scale * scale);
        let limits = build_limits(&ms, 8, &[LimitKind::Gauss, LimitKind::Gamma, LimitKind::ChiSq1], None, 0, RngStream::new(0, 0, 0)).unwrap();
        let theory = Theory { moments: ms, gamma: None, limits };
        let tc = tail_curve_from(&sim, &theory, &GridRule::Auto { points: 101 }, 8).unwrap();
        prop_assert!(tc.emp_mean.windows(2).all(|w| w[0] >= w[1]));
        for (_, curve) in &tc.theory {
            let c = curve.as_ref().unwrap();
            prop_assert!(c.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(c.windows(2).all(|w| w[0] >= w[1]));
        }
        let (lo, hi) = (tc.thresholds[0], *tc.thresholds.last().unwrap());
        let inside = tc.pooled.iter().filter(|v| **v >= lo && **v <= hi).count();
        prop_assert!(inside as f64 >= 0.99 * tc.pooled.len() as f64);
    }
}

#[test]
fn u_statistic_matches_explicit_matrix_mean() {
    let mut rng = RngStream::new(3, 0, 0).rng();
    for n in [2usize, 3, 4, 7] {
        let x = Array2::from_shape_fn((n, 3), |_| rng.sample::<f64, _>(StandardNormal));
        let spec = SummandSpec::ksd(1.7, MeanShiftModel::new(vec![0.0; 3], CovSpec::Identity).unwrap()).unwrap();
        let data = PairedSample::single(x.clone());
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += ksd_summand_identity(1.7, x.row(i).as_slice().unwrap(), x.row(j).as_slice().unwrap());
                }
            }
        }
        let brute = s / (n * (n - 1)) as f64;
        assert!((u_statistic(&spec, &data).unwrap() - brute).abs() < 1e-12);
    }
}
