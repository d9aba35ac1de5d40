mod common;

use common::dist;
use manifold_lab::geometry::{
    binomial_upper_bound, build_net, coupon_collector_sim, coupon_expectation, greedy_cover, greedy_packing,
    CoverReport, DEFAULT_MAX_SAMPLES,
};
use manifold_lab::learner::fit_interpolator;
use manifold_lab::manifold::HypersphereSpec;
use manifold_lab::nn::{BiasPlacement, ReluNetwork};
use manifold_lab::rng::seeded;
use manifold_lab::sampler::{PlanarCircle, PointSampler, UnitCube};
use proptest::prelude::*;

fn cloud() -> impl Strategy<Value = (Vec<Vec<f64>>, f64)> {
    (1usize..4, 2usize..120, 0.02f64..0.6, any::<u64>()).prop_map(|(dim, n, eps, seed)| {
        (UnitCube { dim }.sample_many(n, &mut seeded(seed)), eps)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn packing_cover_duality((points, eps) in cloud()) {
        let r = CoverReport::measure(&points, eps);
        prop_assert!(r.duality_holds(), "{:?}", r);
    }

    #[test]
    fn greedy_outputs_satisfy_definitions((points, eps) in cloud()) {
        let cover = greedy_cover(&points, eps);
        for p in &points {
            prop_assert!(cover.iter().any(|&c| dist(&points[c], p) <= eps));
        }
        let packing = greedy_packing(&points, eps);
        for (i, &a) in packing.iter().enumerate() {
            for &b in &packing[i + 1..] {
                prop_assert!(dist(&points[a], &points[b]) > 2.0 * eps);
            }
        }
    }

    #[test]
    fn upper_bound_is_monotone(trials in 100usize..5000, misses in 0usize..50) {
        let misses = misses.min(trials - 1);
        let a = binomial_upper_bound(misses, trials, 0.95);
        let b = binomial_upper_bound(misses + 1, trials, 0.95);
        prop_assert!(a >= misses as f64 / trials as f64);
        prop_assert!(b >= a);
    }
}

#[test]
fn certified_net_holds_up_on_a_fresh_check() {
    let sphere = HypersphereSpec::random(3, 6, &mut seeded(1)).unwrap();
    for (seed, (eps, delta)) in [(0.3, 0.05), (0.2, 0.02), (0.5, 0.01)].into_iter().enumerate() {
        let net = build_net(&sphere, eps, delta, DEFAULT_MAX_SAMPLES, &mut seeded(seed as u64)).unwrap();
        assert!(net.is_certified(), "{:?}", net.certification());
        let trials = 10 * net.certification().trials;
        let misses = net.count_misses(&sphere, trials, &mut seeded(1000 + seed as u64));
        assert!(misses as f64 / trials as f64 <= 2.0 * delta, "{misses} / {trials}");
    }
}

#[test]
fn circle_net_size_matches_circumference() {
    for seed in 0..5 {
        let net = build_net(&PlanarCircle { radius: 1.0 }, 0.1, 0.05, DEFAULT_MAX_SAMPLES, &mut seeded(seed)).unwrap();
        assert!(net.is_certified());
        assert!((32..=80).contains(&net.len()), "seed {seed}: {} anchors", net.len());
    }
}

#[test]
fn coupon_mean_within_three_standard_errors() {
    for (i, bins) in [1usize, 2, 7, 50].into_iter().enumerate() {
        let r = coupon_collector_sim(bins, 4000, &mut seeded(i as u64)).unwrap();
        let expected = coupon_expectation(bins);
        assert!((r.mean_t - expected).abs() <= 3.0 * r.std_err.max(1e-12), "n={bins}: {} vs {expected}", r.mean_t);
    }
}

#[test]
fn halving_target_error_does_not_hurt() {
    let circle = PlanarCircle { radius: 1.0 };
    let (mut coarse, mut fine) = (0.0, 0.0);
    for seed in 0..5u64 {
        let target =
            ReluNetwork::random_gaussian(2, &[4], BiasPlacement::AfterActivation, &mut seeded(seed)).unwrap();
        let mse = |eps: f64| {
            let model = fit_interpolator(&target, &circle, eps, 0.01, 200_000, &mut seeded(seed + 10)).unwrap();
            model.evaluate(&target, &circle, 5000, &mut seeded(seed + 20)).unwrap().mse
        };
        coarse += mse(0.2);
        fine += mse(0.1);
    }
    assert!(fine <= coarse, "fine {fine} > coarse {coarse}");
}

#[test]
fn interpolator_error_decomposition_on_a_sphere() {
    let sphere = HypersphereSpec::random(3, 5, &mut seeded(3)).unwrap();
    let target = ReluNetwork::random_gaussian(5, &[4], BiasPlacement::AfterActivation, &mut seeded(4)).unwrap();
    let model = fit_interpolator(&target, &sphere, 0.3, 0.02, DEFAULT_MAX_SAMPLES, &mut seeded(5)).unwrap();
    assert!(model.is_certified());
    let eval = model.evaluate(&target, &sphere, 5000, &mut seeded(6)).unwrap();
    assert!(eval.within_budget(), "{eval:?}");
    assert_eq!(eval.lipschitz_violations, 0);
    // Covered queries are within the target error.
    let mut rng = seeded(7);
    for _ in 0..2000 {
        let x = sphere.sample(&mut rng);
        let p = model.predict(&x).unwrap();
        if p.covered {
            assert!((p.value - target.eval(&x)).abs() <= 0.3 + 1e-12);
        }
    }
}
