//! Finite-difference oracles, independent of the closed-form derivatives.

use elmpde::features::MultiIndex;

/// Second-order central difference of `f` along `alpha` with step `h`.
#[allow(dead_code)]
pub fn central(f: &dyn Fn(&[f64]) -> f64, x: &[f64], alpha: MultiIndex, h: f64) -> f64 {
    let axes = alpha.axes();
    let shifted = |offsets: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(k, o) in offsets {
            y[k] += o;
        }
        f(&y)
    };
    match axes.as_slice() {
        [] => f(x),
        [k] => (shifted(&[(*k, h)]) - shifted(&[(*k, -h)])) / (2.0 * h),
        [k, l] if k == l => (shifted(&[(*k, h)]) - 2.0 * f(x) + shifted(&[(*k, -h)])) / (h * h),
        [k, l] => {
            (shifted(&[(*k, h), (*l, h)]) - shifted(&[(*k, h), (*l, -h)]) - shifted(&[(*k, -h), (*l, h)])
                + shifted(&[(*k, -h), (*l, -h)]))
                / (4.0 * h * h)
        }
        _ => f64::NAN,
    }
}

/// Fourth-order central difference.
#[allow(dead_code)]
pub fn central4(f: &dyn Fn(&[f64]) -> f64, x: &[f64], alpha: MultiIndex, h: f64) -> f64 {
    let axes = alpha.axes();
    let at = |offsets: &[(usize, f64)]| {
        let mut y = x.to_vec();
        for &(k, o) in offsets {
            y[k] += o;
        }
        f(&y)
    };
    let d1 = |g: &dyn Fn(f64) -> f64| (-g(2.0 * h) + 8.0 * g(h) - 8.0 * g(-h) + g(-2.0 * h)) / (12.0 * h);
    match axes.as_slice() {
        [] => f(x),
        [k] => d1(&|o| at(&[(*k, o)])),
        [k, l] if k == l => {
            (-at(&[(*k, 2.0 * h)]) + 16.0 * at(&[(*k, h)]) - 30.0 * f(x) + 16.0 * at(&[(*k, -h)])
                - at(&[(*k, -2.0 * h)]))
                / (12.0 * h * h)
        }
        [k, l] => {
            let inner = |ok: f64| d1(&|ol| at(&[(*k, ok), (*l, ol)]));
            (-inner(2.0 * h) + 8.0 * inner(h) - 8.0 * inner(-h) + inner(-2.0 * h)) / (12.0 * h)
        }
        _ => f64::NAN,
    }
}
