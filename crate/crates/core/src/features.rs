//! Frozen random single-hidden-layer features `σ_j(x) = tanh(w_j·x + b_j)`
//! and their closed-form partial derivatives up to second order.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default half-width of the uniform weight/bias distribution.
pub const DEFAULT_HALF_RANGE: f64 = 3.0;

/// Partial derivative multi-index `∂^α`, one entry per coordinate.
/// Unused trailing coordinates stay zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex([u8; 3]);

impl MultiIndex {
    pub const ZERO: MultiIndex = MultiIndex([0, 0, 0]);

    pub fn new(orders: &[u8]) -> Result<Self> {
        if orders.len() > 3 {
            return Err(Error::InvalidArgument(format!("multi-index has {} entries, at most 3", orders.len())));
        }
        let mut a = [0u8; 3];
        a[..orders.len()].copy_from_slice(orders);
        let m = MultiIndex(a);
        if m.order() > 2 {
            return Err(Error::UnsupportedOrder(m.order()));
        }
        Ok(m)
    }

    /// `∂/∂x_k`
    pub const fn d(k: usize) -> Self {
        let mut a = [0u8; 3];
        a[k] = 1;
        MultiIndex(a)
    }

    /// `∂²/∂x_k∂x_l`
    pub const fn dd(k: usize, l: usize) -> Self {
        let mut a = [0u8; 3];
        a[k] += 1;
        a[l] += 1;
        MultiIndex(a)
    }

    pub fn order(&self) -> usize {
        self.0.iter().map(|&o| o as usize).sum()
    }

    pub fn orders(&self) -> [u8; 3] {
        self.0
    }

    /// Highest coordinate touched, plus one.
    pub fn min_dim(&self) -> usize {
        self.0.iter().rposition(|&o| o > 0).map_or(0, |k| k + 1)
    }

    /// Coordinates differentiated, with repetition (`(2,0)` gives `[0, 0]`).
    pub fn axes(&self) -> Vec<usize> {
        self.0.iter().enumerate().flat_map(|(k, &o)| std::iter::repeat_n(k, o as usize)).collect()
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.0[0], self.0[1], self.0[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Tanh,
}

impl Activation {
    fn code(self) -> u8 {
        match self {
            Activation::Tanh => 0,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Activation::Tanh),
            _ => None,
        }
    }
}

/// Random inner weights `W` (L×d) and biases `b` (L), fixed at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomFeatureLayer {
    weights: Array2<f64>,
    biases: Array1<f64>,
    activation: Activation,
    half_range: f64,
    seed: u64,
}

impl RandomFeatureLayer {
    /// Draws `W` row-major then `b`, i.i.d. uniform on `[-M, M]`.
    pub fn new(neurons: usize, dim: usize, half_range: f64, seed: u64) -> Result<Self> {
        if neurons == 0 {
            return Err(Error::InvalidArgument("layer needs at least one neuron".into()));
        }
        if !(1..=3).contains(&dim) {
            return Err(Error::InvalidArgument(format!("input dimension {dim} not in 1..=3")));
        }
        if !(half_range.is_finite() && half_range > 0.0) {
            return Err(Error::InvalidArgument(format!("half range must be positive, got {half_range}")));
        }
        let mut rng = crate::seed::rng_from_seed(seed);
        let mut draw = || half_range * (2.0 * rng.random::<f64>() - 1.0);
        let weights = Array2::from_shape_simple_fn((neurons, dim), &mut draw);
        let biases = Array1::from_shape_simple_fn(neurons, &mut draw);
        Ok(Self { weights, biases, activation: Activation::Tanh, half_range, seed })
    }

    /// Layer from explicit parameters; entries must lie in `[-M, M]`.
    pub fn from_parts(weights: Array2<f64>, biases: Array1<f64>, half_range: f64, seed: u64) -> Result<Self> {
        let (l, d) = weights.dim();
        if l == 0 || !(1..=3).contains(&d) {
            return Err(Error::InvalidArgument(format!("weight shape {l}x{d} unsupported")));
        }
        if biases.len() != l {
            return Err(Error::DimensionMismatch { expected: l, got: biases.len() });
        }
        if !(half_range.is_finite() && half_range > 0.0) {
            return Err(Error::InvalidArgument(format!("half range must be positive, got {half_range}")));
        }
        if weights.iter().chain(biases.iter()).any(|v| !(v.abs() <= half_range)) {
            return Err(Error::InvalidArgument("layer parameter outside [-M, M]".into()));
        }
        Ok(Self { weights, biases, activation: Activation::Tanh, half_range, seed })
    }

    pub fn neurons(&self) -> usize {
        self.weights.nrows()
    }

    pub fn dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn weights(&self) -> ArrayView2<'_, f64> {
        self.weights.view()
    }

    pub fn biases(&self) -> ArrayView1<'_, f64> {
        self.biases.view()
    }

    pub fn half_range(&self) -> f64 {
        self.half_range
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn check_points(&self, points: &ArrayView2<f64>) -> Result<()> {
        if points.ncols() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: points.ncols() });
        }
        Ok(())
    }

    /// Pre-activations `s_ij = w_j·x_i + b_j`.
    fn preactivation(&self, points: &ArrayView2<f64>) -> Array2<f64> {
        let mut s = points.dot(&self.weights.t());
        s += &self.biases.view().insert_axis(Axis(0));
        s
    }

    /// Hidden-layer output matrix, `H_ij = σ_j(x_i)`.
    pub fn eval(&self, points: ArrayView2<f64>) -> Result<Array2<f64>> {
        self.eval_derivative(points, MultiIndex::ZERO)
    }

    /// `∂^α σ_j(x_i)` for `|α| ≤ 2`. With `t = tanh(s)`, the first derivative
    /// of the activation is `1 - t²` and the second `-2 t (1 - t²)`; the chain
    /// rule contributes one weight component per differentiated axis.
    pub fn eval_derivative(&self, points: ArrayView2<f64>, alpha: MultiIndex) -> Result<Array2<f64>> {
        self.check_points(&points)?;
        let order = alpha.order();
        if order > 2 {
            return Err(Error::UnsupportedOrder(order));
        }
        if alpha.min_dim() > self.dim() {
            return Err(Error::InvalidArgument(format!("multi-index {alpha} exceeds input dimension {}", self.dim())));
        }
        let mut m = self.preactivation(&points);
        match order {
            0 => m.mapv_inplace(f64::tanh),
            1 => m.mapv_inplace(|s| {
                let t = s.tanh();
                1.0 - t * t
            }),
            _ => m.mapv_inplace(|s| {
                let t = s.tanh();
                -2.0 * t * (1.0 - t * t)
            }),
        }
        if order > 0 {
            let mut scale = Array1::<f64>::ones(self.neurons());
            for k in alpha.axes() {
                scale *= &self.weights.column(k);
            }
            m *= &scale.view().insert_axis(Axis(0));
        }
        Ok(m)
    }

    /// `∂^α ũ(x_i)` for `ũ = Σ_j β_j σ_j`.
    pub fn predict(&self, beta: &OutputWeights, points: ArrayView2<f64>, alpha: MultiIndex) -> Result<Array1<f64>> {
        if beta.len() != self.neurons() {
            return Err(Error::DimensionMismatch { expected: self.neurons(), got: beta.len() });
        }
        Ok(self.eval_derivative(points, alpha)?.dot(&beta.0))
    }

    /// Values `∂^α σ_j` at a single point, one per neuron.
    pub fn eval_point(&self, x: &[f64], alpha: MultiIndex) -> Result<Array1<f64>> {
        let p = ArrayView2::from_shape((1, x.len()), x).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(self.eval_derivative(p, alpha)?.row(0).to_owned())
    }
}

/// Output weights `β`, one per neuron.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputWeights(pub Array1<f64>);

impl OutputWeights {
    pub fn zeros(n: usize) -> Self {
        Self(Array1::zeros(n))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }
}

impl From<Array1<f64>> for OutputWeights {
    fn from(a: Array1<f64>) -> Self {
        Self(a)
    }
}

// Binary layer record, little endian:
//   magic "RFL\0" | version u32 | activation u8 | dim u32 | neurons u64
//   | half_range f64 | seed u64 | W row-major (neurons*dim f64) | b (neurons f64)

const LAYER_MAGIC: &[u8; 4] = b"RFL\0";
pub const LAYER_FORMAT_VERSION: u32 = 1;
const LAYER_HEADER_LEN: usize = 4 + 4 + 1 + 4 + 8 + 8 + 8;

impl RandomFeatureLayer {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(LAYER_HEADER_LEN + 8 * self.neurons() * (self.dim() + 1));
        out.extend_from_slice(LAYER_MAGIC);
        out.extend_from_slice(&LAYER_FORMAT_VERSION.to_le_bytes());
        out.push(self.activation.code());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&(self.neurons() as u64).to_le_bytes());
        out.extend_from_slice(&self.half_range.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        for v in self.weights.iter().chain(self.biases.iter()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    /// Decodes one record from the front of `bytes`, returning the layer and
    /// the number of bytes consumed.
    pub fn decode_prefix(bytes: &[u8]) -> Result<(Self, usize)> {
        let mut r = crate::io::ByteReader::new(bytes);
        if r.take(4)? != LAYER_MAGIC {
            return Err(Error::Decode("bad layer magic".into()));
        }
        let version = r.u32()?;
        if version != LAYER_FORMAT_VERSION {
            return Err(Error::Decode(format!("unsupported layer format version {version}")));
        }
        let activation = Activation::from_code(r.u8()?).ok_or_else(|| Error::Decode("unknown activation".into()))?;
        let dim = r.u32()? as usize;
        let neurons = r.u64()?;
        let half_range = r.f64()?;
        let seed = r.u64()?;
        if !(1..=3).contains(&dim) || neurons == 0 {
            return Err(Error::Decode(format!("bad layer shape {neurons}x{dim}")));
        }
        let count = usize::try_from(neurons)
            .ok()
            .and_then(|n| n.checked_mul(dim + 1))
            .filter(|&c| c.checked_mul(8).is_some_and(|b| b <= r.remaining()))
            .ok_or_else(|| Error::Decode("layer record truncated".into()))?;
        let neurons = neurons as usize;
        let values = r.f64s(count)?;
        let weights = Array2::from_shape_vec((neurons, dim), values[..neurons * dim].to_vec())
            .map_err(|e| Error::Decode(e.to_string()))?;
        let biases = Array1::from(values[neurons * dim..].to_vec());
        let mut layer = Self::from_parts(weights, biases, half_range, seed).map_err(|e| Error::Decode(e.to_string()))?;
        layer.activation = activation;
        Ok((layer, r.position()))
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let (layer, used) = Self::decode_prefix(bytes)?;
        if used != bytes.len() {
            return Err(Error::Decode(format!("{} trailing bytes after layer record", bytes.len() - used)));
        }
        Ok(layer)
    }
}
