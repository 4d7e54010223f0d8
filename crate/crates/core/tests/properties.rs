use obsopt::bounds::{bound_thm2, bound_thm3, bound_thm4, random_step_instance, Confounding, LinearDemandInstance};
use obsopt::kernels::{BandwidthRule, KernelFamily, KernelSpec};
use obsopt::regression::{design_matrix, nw_predict, ols_fit, NWRegression};
use obsopt::simulation::quantile;
use obsopt::simulation::discrete::{discrete_expectations, DiscreteInstance};
use obsopt::RewardSpec;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn monotone_bound_dominates(g in 0.0f64..=1.0) {
        let (b2, b4) = (bound_thm2(g).unwrap(), bound_thm4(g).unwrap());
        prop_assert!(b4 >= b2);
        if g > 0.0 {
            prop_assert!(b4 > b2);
        }
        prop_assert!(b2 <= 1.0 && b4 <= 1.0 && bound_thm3(g).unwrap() <= 1.0);
    }

    #[test]
    fn random_step_confounding_respects_bounds(seed in any::<u64>(), monotone in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (inst, gamma) = random_step_instance(&mut rng, monotone).unwrap();
        let ratio = inst.empirical_ratio(&inst.default_space(201).unwrap()).unwrap();
        let bound = if monotone { bound_thm4(gamma).unwrap() } else { bound_thm2(gamma).unwrap() };
        prop_assert!(ratio >= bound - 1e-9, "ratio {} bound {}", ratio, bound);
        prop_assert!(ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn unconfounded_ratio_is_one(d0 in 0.5f64..5.0, lambda in 0.2f64..3.0, c in 0.0f64..2.0) {
        let inst = LinearDemandInstance::new(d0, lambda, c, Confounding::Constant { value: 0.0 }).unwrap();
        let r = inst.empirical_ratio(&inst.default_space(21).unwrap()).unwrap();
        prop_assert!((r - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kernel_regression_stays_in_target_hull(
        pts in prop::collection::vec((-3.0f64..3.0, -5.0f64..5.0), 1..30),
        q in -4.0f64..4.0,
        h in 0.2f64..2.0,
        epan in any::<bool>(),
    ) {
        let family = if epan { KernelFamily::Epanechnikov } else { KernelFamily::Gaussian2 };
        let kernel = KernelSpec::new(family, 1, BandwidthRule::Fixed { h }).unwrap();
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        let (lo, hi) = y.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let model = NWRegression::new(x, y, &kernel, h).unwrap();
        if let Ok(v) = nw_predict(&model, &[q]) {
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }

    #[test]
    fn least_squares_recovers_exact_lines(a in -5.0f64..5.0, b in -5.0f64..5.0, n in 3usize..40) {
        let z: Vec<f64> = (0..n).map(|i| i as f64 / 3.0).collect();
        let y: Vec<f64> = z.iter().map(|v| a + b * v).collect();
        let fit = ols_fit(&design_matrix(n, 2, |i, row| { row[0] = 1.0; row[1] = z[i]; }), &y).unwrap();
        prop_assert!((fit.coefficients[0] - a).abs() < 1e-9 && (fit.coefficients[1] - b).abs() < 1e-9);
    }

    #[test]
    fn quantiles_are_ordered(mut v in prop::collection::vec(-100.0f64..100.0, 1..60)) {
        v.sort_by(f64::total_cmp);
        let (p10, p50, p90) = (quantile(&v, 0.1), quantile(&v, 0.5), quantile(&v, 0.9));
        prop_assert!(v[0] <= p10 && p10 <= p50 && p50 <= p90 && p90 <= v[v.len() - 1]);
    }
}

#[test]
fn confounding_error_is_the_predictive_gap() {
    for inst in [DiscreteInstance::intro_table(), DiscreteInstance::alice(), DiscreteInstance::bob()] {
        for row in discrete_expectations(&inst, &RewardSpec::Unit).unwrap() {
            let z = row.z;
            let direct = inst.confounding_error(z).unwrap();
            assert_eq!(inst.predictive_response(z).unwrap() - inst.mean_response(z).unwrap(), direct);
        }
    }
}
