use std::sync::Arc;

use elmpde::assembly::{
    assemble_operator_matrix, assemble_rhs, build_nonlinear_residual, BurgersFisher, FeatureCache, LinearForm,
    LinearOperatorSpec, NonlinearDiffusion, NonlinearForm, Residual,
};
use elmpde::features::{MultiIndex, RandomFeatureLayer};
use elmpde::geometry::Domain;
use elmpde::seed::rng_from_seed;
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::Rng;

fn random_beta(rng: &mut impl Rng, n: usize, scale: f64) -> Array1<f64> {
    Array1::from_shape_fn(n, |_| rng.random_range(-scale..scale))
}

fn jacobian_fd_error(form: Arc<dyn NonlinearForm>, dim: usize, seed: u64) -> f64 {
    let layer = RandomFeatureLayer::new(12, dim, 3.0, seed).unwrap();
    let mut rng = rng_from_seed(seed);
    let pts = Array2::from_shape_fn((15, dim), |_| rng.random_range(0.0..1.0));
    let spec = build_nonlinear_residual(&layer, pts.view(), form, &|_| 0.0).unwrap();
    let mut worst = 0.0f64;
    for _ in 0..10 {
        let beta = random_beta(&mut rng, 12, 1.0);
        let jac = spec.jacobian(&beta);
        let h = 1e-6;
        for j in 0..12 {
            let mut up = beta.clone();
            let mut down = beta.clone();
            up[j] += h;
            down[j] -= h;
            let col = (spec.residual(&up) - spec.residual(&down)) / (2.0 * h);
            for i in 0..col.len() {
                let e = (col[i] - jac[[i, j]]).abs() / jac[[i, j]].abs().max(1e-2);
                worst = worst.max(e);
            }
        }
    }
    worst
}

#[test]
fn burgers_fisher_jacobian_matches_finite_differences() {
    for seed in 0..3 {
        let e = jacobian_fd_error(Arc::new(BurgersFisher), 2, seed);
        assert!(e <= 1e-5, "seed {seed}: {e}");
    }
}

#[test]
fn nonlinear_diffusion_jacobian_matches_finite_differences() {
    for seed in 0..3 {
        let e = jacobian_fd_error(Arc::new(NonlinearDiffusion), 3, seed);
        assert!(e <= 1e-5, "seed {seed}: {e}");
    }
}

#[test]
fn linear_form_is_degenerate_nonlinear_form() {
    let layer = RandomFeatureLayer::new(10, 2, 3.0, 1).unwrap();
    let mut rng = rng_from_seed(1);
    let pts = Domain::unit_square().sample_interior(20, &mut rng).unwrap();
    let op = LinearOperatorSpec::laplacian(2);
    let f = |x: &[f64]| x[0] * x[1];
    let spec = build_nonlinear_residual(&layer, pts.view(), Arc::new(LinearForm::new(op.clone())), &f).unwrap();
    let a = assemble_operator_matrix(&layer, &op, pts.view()).unwrap();
    let rhs = assemble_rhs(&f, pts.view()).unwrap();
    let beta = random_beta(&mut rng, 10, 2.0);
    let diff = spec.residual(&beta) - (a.dot(&beta) - &rhs);
    assert!(diff.iter().all(|v| v.abs() <= 1e-13));
    assert_eq!(spec.jacobian(&beta), a);
}

#[test]
fn nonlinear_cache_evaluates_each_alpha_once() {
    let layer = RandomFeatureLayer::new(8, 3, 3.0, 2).unwrap();
    let pts = Array2::from_elem((5, 3), 0.5);
    let form: Arc<dyn NonlinearForm> = Arc::new(NonlinearDiffusion);
    let expected = form.alphas().len();
    let spec = build_nonlinear_residual(&layer, pts.view(), form, &|_| 0.0).unwrap();
    assert_eq!(spec.evaluations(), expected);
}

fn op_strategy() -> impl Strategy<Value = LinearOperatorSpec> {
    let alpha = prop_oneof![
        Just(MultiIndex::ZERO),
        Just(MultiIndex::d(0)),
        Just(MultiIndex::d(1)),
        Just(MultiIndex::dd(0, 0)),
        Just(MultiIndex::dd(0, 1)),
        Just(MultiIndex::dd(1, 1)),
    ];
    prop::collection::vec((alpha, -5.0f64..5.0), 1..4)
        .prop_map(|terms| LinearOperatorSpec::constant(&terms).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn assembly_is_additive(a in op_strategy(), b in op_strategy(), seed in any::<u64>()) {
        let layer = RandomFeatureLayer::new(9, 2, 3.0, seed).unwrap();
        let mut rng = rng_from_seed(seed);
        let pts = Domain::unit_square().sample_interior(7, &mut rng).unwrap();
        let mut cache = FeatureCache::new(&layer, pts.view()).unwrap();
        let ma = cache.operator_matrix(&a).unwrap();
        let mb = cache.operator_matrix(&b).unwrap();
        let mab = cache.operator_matrix(&a.sum(&b)).unwrap();
        prop_assert!(cache.evaluations() <= 6);
        let scale = mab.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (x, y) in mab.iter().zip((&ma + &mb).iter()) {
            prop_assert!((x - y).abs() <= 1e-14 * scale);
        }
    }
}
