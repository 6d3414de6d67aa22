use crate::features::MultiIndex;

/// A smooth scalar function with closed-form partial derivatives up to
/// second order.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64]) -> f64;

    /// `∂^α u(x)` for `|α| ≤ 2`.
    fn derivative(&self, x: &[f64], alpha: MultiIndex) -> f64;
}

/// The single feature `σ_j` of a layer, viewed as a field.
pub struct FeatureField<'a> {
    pub layer: &'a crate::features::RandomFeatureLayer,
    pub neuron: usize,
}

impl ScalarField for FeatureField<'_> {
    fn dim(&self) -> usize {
        self.layer.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.derivative(x, MultiIndex::ZERO)
    }

    fn derivative(&self, x: &[f64], alpha: MultiIndex) -> f64 {
        let w = self.layer.weights();
        let w = w.row(self.neuron);
        let s: f64 = w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.layer.biases()[self.neuron];
        let t = s.tanh();
        let base = match alpha.order() {
            0 => t,
            1 => 1.0 - t * t,
            2 => -2.0 * t * (1.0 - t * t),
            _ => f64::NAN,
        };
        alpha.axes().iter().fold(base, |acc, &k| acc * w[k])
    }
}
