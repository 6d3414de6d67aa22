mod common;

use std::sync::Arc;

use elmpde::assembly::LinearOperatorSpec;
use elmpde::features::{MultiIndex, OutputWeights, RandomFeatureLayer};
use elmpde::field::ScalarField;
use elmpde::geometry::Domain;
use elmpde::pipeline::TrainedModel;
use elmpde::problems::lookup;
use elmpde::seed::rng_from_seed;
use elmpde::xtfc::{xtfc_modified_feature_matrix, xtfc_solve, CoonsPatch, XtfcModel};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::Rng;

use common::fd::central;

fn model_on(rect: ([f64; 2], [f64; 2]), seed: u64) -> XtfcModel {
    let layer = RandomFeatureLayer::new(30, 2, 3.0, seed).unwrap();
    let mut rng = rng_from_seed(seed);
    let beta = OutputWeights(Array1::from_shape_fn(30, |_| rng.random_range(-50.0..50.0)));
    XtfcModel {
        layer,
        beta,
        patch: CoonsPatch::new(rect.0, rect.1).unwrap(),
        boundary_data: lookup("square-gauss").unwrap().exact.clone(),
    }
}

struct ModelField<'a>(&'a XtfcModel);

impl ScalarField for ModelField<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.derivative(x, MultiIndex::ZERO)
    }

    fn derivative(&self, x: &[f64], alpha: MultiIndex) -> f64 {
        let p = Array2::from_shape_vec((1, 2), x.to_vec()).unwrap();
        self.0.predict(p.view(), alpha).unwrap()[0]
    }
}

#[test]
fn model_derivatives_match_finite_differences() {
    let model = model_on(([0.0, 1.0], [0.0, 1.0]), 3);
    let field = ModelField(&model);
    let mut rng = rng_from_seed(4);
    for _ in 0..50 {
        let x = [rng.random_range(0.05..0.95), rng.random_range(0.05..0.95)];
        for k in 0..2 {
            let fd = central(&|y| field.value(y), &x, MultiIndex::d(k), 1e-5);
            let exact = field.derivative(&x, MultiIndex::d(k));
            assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0));
            for l in k..2 {
                let fd = central(&|y| field.derivative(y, MultiIndex::d(l)), &x, MultiIndex::d(k), 1e-5);
                let exact = field.derivative(&x, MultiIndex::dd(k, l));
                assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0));
            }
        }
    }
}

#[test]
fn modified_operator_matrix_is_operator_of_modified_features() {
    let layer = RandomFeatureLayer::new(6, 2, 3.0, 9).unwrap();
    let patch = CoonsPatch::new([-1.0, 1.0], [-1.0, 1.0]).unwrap();
    let op = LinearOperatorSpec::constant(&[(MultiIndex::dd(0, 0), -0.1), (MultiIndex::d(0), 2.0), (MultiIndex::d(1), 1.0)]).unwrap();
    let mut rng = rng_from_seed(10);
    let pts = Domain::rect([-1.0, 1.0], [-1.0, 1.0]).unwrap().sample_interior(8, &mut rng).unwrap();
    let m = xtfc_modified_feature_matrix(&layer, &patch, pts.view(), &op).unwrap();
    for j in 0..6 {
        let mut beta = Array1::<f64>::zeros(6);
        beta[j] = 1.0;
        let single = XtfcModel {
            layer: layer.clone(),
            beta: OutputWeights(beta),
            patch: patch.clone(),
            boundary_data: Arc::new(Zero),
        };
        let field = ModelField(&single);
        for (i, x) in pts.rows().into_iter().enumerate() {
            let v = op.apply(&field, x.as_slice().unwrap());
            assert!((v - m[[i, j]]).abs() <= 1e-12 * v.abs().max(1.0));
        }
    }
}

struct Zero;

impl ScalarField for Zero {
    fn dim(&self) -> usize {
        2
    }

    fn value(&self, _: &[f64]) -> f64 {
        0.0
    }

    fn derivative(&self, _: &[f64], _: MultiIndex) -> f64 {
        0.0
    }
}

#[test]
fn solve_on_square_gauss_is_exact_on_boundary_and_accurate_inside() {
    let p = lookup("square-gauss").unwrap();
    let layer = RandomFeatureLayer::new(400, 2, 3.0, 1).unwrap();
    let mut rng = rng_from_seed(2);
    let interior = p.domain.sample_interior(200, &mut rng).unwrap();
    let elmpde::problems::Operator::Linear(op) = &p.operator else { unreachable!() };
    let sol = xtfc_solve(&p.domain, &layer, op, &*p.source, p.exact.clone(), interior.view(), 1e-12).unwrap();
    let model = TrainedModel {
        layer: sol.model.layer.clone(),
        beta: sol.model.beta.clone(),
        xtfc: Some((sol.model.patch.clone(), p.exact.clone())),
    };
    let b = p.domain.sample_boundary(500, &mut rng).unwrap();
    let pred = model.predict(b.view()).unwrap();
    for (x, v) in b.rows().into_iter().zip(pred.iter()) {
        assert!((v - p.exact.value(x.as_slice().unwrap())).abs() <= 1e-12);
    }
    let test = p.domain.sample_interior(500, &mut rng).unwrap();
    let pred = model.predict(test.view()).unwrap();
    let worst = test.rows().into_iter().zip(pred.iter()).map(|(x, v)| (v - p.exact.value(x.as_slice().unwrap())).abs()).fold(0.0, f64::max);
    assert!(worst <= 1e-3, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn hard_imposition_holds_for_any_weights(
        x0 in -3.0f64..3.0, wx in 0.1f64..4.0, y0 in -3.0f64..3.0, wy in 0.1f64..4.0, seed in any::<u64>(),
    ) {
        let rect = ([x0, x0 + wx], [y0, y0 + wy]);
        let model = model_on(rect, seed);
        let d = Domain::rect(rect.0, rect.1).unwrap();
        let mut rng = rng_from_seed(seed);
        let b = d.sample_boundary(64, &mut rng).unwrap();
        let pred = model.predict(b.view(), MultiIndex::ZERO).unwrap();
        for (x, v) in b.rows().into_iter().zip(pred.iter()) {
            let g = model.boundary_data.value(x.as_slice().unwrap());
            prop_assert!((v - g).abs() <= 1e-12 * g.abs().max(1.0));
        }
    }
}
