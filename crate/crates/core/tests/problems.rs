mod common;

use elmpde::features::MultiIndex;
use elmpde::field::ScalarField;
use elmpde::problems::{catalog, manufactured_source, Operator};
use elmpde::seed::rng_from_seed;

use common::fd::central4;

/// A field whose derivatives come from fourth-order differences of the values.
struct Differenced<'a> {
    inner: &'a dyn ScalarField,
    h: f64,
}

impl ScalarField for Differenced<'_> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.inner.value(x)
    }

    fn derivative(&self, x: &[f64], alpha: MultiIndex) -> f64 {
        central4(&|y| self.inner.value(y), x, alpha, self.h)
    }
}

/// Smallest length scale of each exact solution, to size the stencil.
fn stencil_step(id: &str) -> f64 {
    match id {
        "blayer-0.01" => 2e-4,
        "peak-100" | "blayer-0.1" => 1e-3,
        _ => 2e-3,
    }
}

#[test]
fn sources_match_fourth_order_differences() {
    for p in catalog() {
        let h = stencil_step(p.id);
        let field = Differenced { inner: p.exact.as_ref(), h };
        let mut rng = rng_from_seed(77);
        let pts = p.domain.sample_interior(400, &mut rng).unwrap();
        let mut checked = 0;
        for x in pts.rows() {
            let x = x.as_slice().unwrap();
            if p.id.starts_with("corner") && x[0].hypot(x[1]) < 1e-3 {
                continue;
            }
            if p.domain.boundary_distance(x).unwrap() < 3.0 * h {
                continue;
            }
            let exact = (p.source)(x);
            let fd = match &p.operator {
                Operator::Linear(op) => op.apply(&field, x),
                Operator::Nonlinear(form) => form.apply_field(&field, x),
            };
            let rel = (fd - exact).abs() / exact.abs().max(1.0);
            assert!(rel <= 1e-6, "{} at {x:?}: fd {fd} vs {exact}", p.id);
            checked += 1;
            if checked == 100 {
                break;
            }
        }
        assert_eq!(checked, 100, "{}", p.id);
    }
}

#[test]
fn manufactured_source_agrees_with_catalog() {
    for p in catalog() {
        let f = manufactured_source(p.id).unwrap();
        let mut rng = rng_from_seed(5);
        let pts = p.domain.sample_interior(20, &mut rng).unwrap();
        for x in pts.rows() {
            let x = x.as_slice().unwrap();
            assert_eq!(f(x), (p.source)(x));
        }
    }
}

#[test]
fn boundary_data_equals_exact_solution_on_gamma() {
    for p in catalog() {
        let mut rng = rng_from_seed(6);
        let pts = p.constraint_domain().sample_boundary(1000, &mut rng).unwrap();
        for x in pts.rows() {
            let x = x.as_slice().unwrap();
            assert_eq!(p.boundary_data(x), p.exact.value(x));
        }
    }
}

#[test]
fn catalog_is_complete() {
    let all = catalog();
    assert!(all.len() >= 15);
    let nonlinear: Vec<_> = all.iter().filter(|p| !p.is_linear()).map(|p| p.id).collect();
    assert_eq!(nonlinear, ["burgers-fisher-1d", "nonlinear-diffusion-2d"]);
}
