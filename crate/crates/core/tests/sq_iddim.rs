use manifold_lab::iddim::{
    estimate_manifold_dim, spectrum_stable_rank, stable_rank, DimMethod, EstimatorConfig, FullSpace, DEFAULT_SIGMA,
};
use manifold_lab::manifold::{HypersphereSpec, ManifoldSpec};
use manifold_lab::rng::seeded;
use manifold_lab::sq::{
    class_answers, correlation_query, pairwise_independence_exact, pairwise_independence_mc, parity_class_eta,
    variance_bound_check, ClippedLinearQuery, FunctionClass, Law, LiftedParityClass, ParityClass, SqOracle,
};
use nalgebra::DMatrix;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::StandardNormal;

fn gaussian_matrix(rows: usize, cols: usize, rng: &mut manifold_lab::LabRng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stable_rank_invariances(rows in 1usize..12, cols in 1usize..12, seed in any::<u64>(), c in 0.01f64..100.0) {
        let mut rng = seeded(seed);
        let m = gaussian_matrix(rows, cols, &mut rng);
        let q = gaussian_matrix(rows, rows, &mut rng).qr().q();
        let sr = stable_rank(&m).unwrap();
        prop_assert!((stable_rank(&(&q * &m)).unwrap() - sr).abs() <= 1e-10 * sr);
        prop_assert!((stable_rank(&(&m * c)).unwrap() - sr).abs() <= 1e-10 * sr);
    }

    #[test]
    fn stable_rank_is_bounded_by_rank(rows in 2usize..12, cols in 2usize..12, r in 1usize..6, seed in any::<u64>()) {
        let mut rng = seeded(seed);
        let r = r.min(rows).min(cols);
        let m = gaussian_matrix(rows, r, &mut rng) * gaussian_matrix(r, cols, &mut rng);
        let sr = stable_rank(&m).unwrap();
        prop_assert!(sr >= 1.0 - 1e-12);
        prop_assert!(sr <= r as f64 + 1e-9);
    }
}

#[test]
fn stable_rank_of_known_spectra() {
    assert_eq!(spectrum_stable_rank(&[2.0, 2.0, 2.0]).unwrap(), 3.0);
    assert_eq!(spectrum_stable_rank(&[2.0, 0.0]).unwrap(), 1.0);
    assert!(spectrum_stable_rank(&[0.0, 0.0]).is_err());
}

#[test]
fn honest_answers_agree_with_a_larger_budget() {
    let spec = ManifoldSpec::new(0.5, 1, 6).unwrap();
    let class = LiftedParityClass::with_default_truncation(spec.clone()).unwrap();
    let tau = 0.1;
    let mut rng = seeded(1);
    for target in [0, 3, 7] {
        let mut oracle = SqOracle::honest(&class, target, tau, &spec, seeded(10 + target as u64)).unwrap();
        // Ten times the sample size of the oracle under test.
        let mut reference =
            SqOracle::honest(&class, target, tau / 10f64.sqrt(), &spec, seeded(20 + target as u64)).unwrap();
        assert!(reference.honest_budget() >= 10 * oracle.honest_budget());
        for _ in 0..5 {
            let q = ClippedLinearQuery::random(class.input_dim(), &mut rng);
            let a = oracle.query(|x, y| q.eval(x, y)).unwrap();
            let b = reference.query(|x, y| q.eval(x, y)).unwrap();
            assert!((a - b).abs() <= tau, "target {target}: {a} vs {b}");
        }
        assert_eq!(oracle.query_count(), 5);
    }
}

#[test]
fn adversarial_answers_stay_within_tolerance() {
    let spec = ManifoldSpec::new(0.5, 1, 8).unwrap();
    let class = LiftedParityClass::with_default_truncation(spec.clone()).unwrap();
    let law = Law::manifold_segments(&spec, class.prefix_len(), 8).unwrap();
    let mut rng = seeded(2);
    for tau in [0.02, 0.1, 0.3] {
        for target in [0, 5, 15] {
            let mut oracle = SqOracle::adversarial(&class, target, tau, &law).unwrap();
            for _ in 0..5 {
                let q = ClippedLinearQuery::random(class.input_dim(), &mut rng);
                let truth = class_answers(&class, &law, |x: &[f64], y| q.eval(x, y)).unwrap()[target];
                let a = oracle.query(|x, y| q.eval(x, y)).unwrap();
                assert!((a - truth).abs() <= tau + 1e-12);
            }
            let truth = class_answers(&class, &law, correlation_query(&class, target)).unwrap()[target];
            let a = oracle.query(correlation_query(&class, target)).unwrap();
            assert!((a - truth).abs() <= tau + 1e-12);
        }
    }
}

#[test]
fn out_of_range_queries_are_rejected() {
    let class = ParityClass::new(3).unwrap();
    let law = Law::uniform_boolean(3).unwrap();
    let mut oracle = SqOracle::adversarial(&class, 1, 0.1, &law).unwrap();
    assert!(oracle.query(|_, _| 1.5).is_err());
    assert!(oracle.query(|_, _| f64::NAN).is_err());
    assert_eq!(oracle.query_count(), 0);
}

#[test]
fn parity_eta_matches_closed_form() {
    for d in 1..=8 {
        let class = ParityClass::new(d).unwrap();
        let exact = pairwise_independence_exact(&class, &Law::uniform_boolean(d).unwrap()).unwrap();
        assert!((exact.eta - parity_class_eta(d)).abs() < 1e-12, "d={d}");
    }
}

#[test]
fn lifted_eta_monte_carlo_agrees_with_enumeration() {
    for n_b in [4u32, 6, 8] {
        let spec = ManifoldSpec::new(0.5, 1, n_b).unwrap();
        let class = LiftedParityClass::with_default_truncation(spec.clone()).unwrap();
        let law = Law::manifold_segments(&spec, class.prefix_len(), 4).unwrap();
        let exact = pairwise_independence_exact(&class, &law).unwrap();
        let mc = pairwise_independence_mc(&class, &spec, 20_000, &mut seeded(n_b as u64)).unwrap();
        assert!((exact.eta - mc.eta).abs() <= 3.0 * mc.std_err.max(1e-3), "n_b={n_b}: {exact:?} vs {mc:?}");
    }
}

#[test]
fn variance_bound_on_parities() {
    for d in [4, 6, 8] {
        let class = ParityClass::new(d).unwrap();
        let law = Law::uniform_boolean(d).unwrap();
        let eta = pairwise_independence_exact(&class, &law).unwrap().eta;
        let mut rng = seeded(d as u64);
        let queries: Vec<ClippedLinearQuery> = (0..50).map(|_| ClippedLinearQuery::random(d, &mut rng)).collect();
        let gs: Vec<_> = queries.iter().map(|q| move |x: &[f64], y: f64| q.eval(x, y)).collect();
        let report = variance_bound_check(&class, &law, &gs, eta).unwrap();
        assert!(report.all_pass(), "d={d}: max {} vs 2 eta {}", report.max_variance(), 2.0 * eta);
    }
}

#[test]
fn variance_bound_with_sampled_law() {
    let spec = ManifoldSpec::new(0.5, 1, 8).unwrap();
    let class = LiftedParityClass::with_default_truncation(spec.clone()).unwrap();
    let eta = pairwise_independence_mc(&class, &spec, 20_000, &mut seeded(1)).unwrap().eta;
    let law = Law::sampled(&spec, 4000, &mut seeded(2)).unwrap();
    let mut rng = seeded(3);
    let queries: Vec<ClippedLinearQuery> =
        (0..20).map(|_| ClippedLinearQuery::random(class.input_dim(), &mut rng)).collect();
    let gs: Vec<_> = queries.iter().map(|q| move |x: &[f64], y: f64| q.eval(x, y)).collect();
    let report = variance_bound_check(&class, &law, &gs, eta).unwrap();
    assert!(report.all_pass(), "{report:?}");
    assert!(report.queries.iter().all(|q| q.sigma > 0.0));
}

fn sphere_dim(ambient: usize, intrinsic: usize, seed: u64) -> f64 {
    let sphere = HypersphereSpec::random(intrinsic + 1, ambient, &mut seeded(seed)).unwrap();
    estimate_manifold_dim(&sphere, 3, DEFAULT_SIGMA, 8 * ambient, &EstimatorConfig::default(), &mut seeded(seed + 1))
        .unwrap()
        .mean_dim
}

#[test]
fn estimates_increase_with_intrinsic_dimension() {
    let dims: Vec<f64> = [2, 10, 18].iter().map(|&d| sphere_dim(20, d, 5)).collect();
    assert!(dims[0] < dims[1] && dims[1] < dims[2], "{dims:?}");
    assert!((dims[0] - 2.0).abs() < 1.0, "{dims:?}");
}

#[test]
fn full_space_reads_as_full_dimensional() {
    // An isotropic cloud has near-equal singular values once the sample is
    // large, so the truncated stable rank approaches the ambient dimension.
    let cfg = EstimatorConfig { method: DimMethod::TruncatedStableRank, ..Default::default() };
    let r = estimate_manifold_dim(&FullSpace { dim: 20 }, 3, 1.0, 20_000, &cfg, &mut seeded(4)).unwrap();
    assert!(r.mean_dim >= 18.0, "{}", r.mean_dim);
    assert!(r.mean_by(DimMethod::SpectralGap) >= 1.0);
}
