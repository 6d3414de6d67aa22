//! Computational domains and random collocation point sets.
//!
//! Three kinds of region are supported: axis-aligned boxes in one to three
//! dimensions, simple polygons in the plane, and space-time cylinders built
//! from a spatial box or polygon and a time interval. Time is carried as the
//! last coordinate of a point and is otherwise treated like a space axis.
//!
//! The boundary of a space-time cylinder is its lateral surface plus the
//! initial-time face. The final-time face is never part of it.

use ndarray::Array2;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::Rng;

/// Draws tested before the acceptance ratio of rejection sampling is judged.
const REJECTION_WARMUP: usize = 10_000;
const MIN_ACCEPTANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lo: Vec<f64>,
    hi: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch { expected: lo.len(), got: hi.len() });
        }
        if lo.is_empty() || lo.len() > 3 {
            return Err(Error::InvalidArgument(format!("box dimension {} not in 1..=3", lo.len())));
        }
        for (a, b) in lo.iter().zip(&hi) {
            if !(a.is_finite() && b.is_finite() && a < b) {
                return Err(Error::InvalidArgument(format!("box bounds require lo < hi, got [{a}, {b}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn unit_square() -> Self {
        Self { lo: vec![0.0, 0.0], hi: vec![1.0, 1.0] }
    }

    pub fn lo(&self) -> &[f64] {
        &self.lo
    }

    pub fn hi(&self) -> &[f64] {
        &self.hi
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    fn extent(&self, axis: usize) -> f64 {
        self.hi[axis] - self.lo[axis]
    }

    fn volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.extent(k)).product()
    }

    /// Area of one of the two faces normal to `axis` (1 for an interval endpoint).
    fn face_area(&self, axis: usize) -> f64 {
        (0..self.dim()).filter(|&k| k != axis).map(|k| self.extent(k)).product()
    }

    fn surface(&self) -> f64 {
        (0..self.dim()).map(|k| 2.0 * self.face_area(k)).sum()
    }

    fn contains(&self, p: &[f64]) -> bool {
        p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (a, b))| a < x && x < b)
    }

    fn contains_closed(&self, p: &[f64]) -> bool {
        p.iter().zip(self.lo.iter().zip(&self.hi)).all(|(x, (a, b))| a <= x && x <= b)
    }

    fn boundary_distance(&self, p: &[f64]) -> f64 {
        if self.contains_closed(p) {
            p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .map(|(x, (a, b))| (x - a).min(b - x))
                .fold(f64::INFINITY, f64::min)
        } else {
            p.iter()
                .zip(self.lo.iter().zip(&self.hi))
                .map(|(x, (a, b))| (a - x).max(x - b).max(0.0).powi(2))
                .sum::<f64>()
                .sqrt()
        }
    }

    fn sample_closed(&self, rng: &mut Rng) -> Vec<f64> {
        (0..self.dim()).map(|k| self.lo[k] + rng.random::<f64>() * self.extent(k)).collect()
    }

    fn sample_surface(&self, rng: &mut Rng) -> Vec<f64> {
        let total = self.surface();
        let mut u = rng.random::<f64>() * total;
        let mut axis = self.dim() - 1;
        let mut upper = false;
        for k in 0..self.dim() {
            let a = self.face_area(k);
            if u < 2.0 * a {
                axis = k;
                upper = u >= a;
                break;
            }
            u -= 2.0 * a;
            // Rounding can leave u marginally past the last face.
            upper = true;
        }
        let mut p = self.sample_closed(rng);
        p[axis] = if upper { self.hi[axis] } else { self.lo[axis] };
        p
    }
}

/// A simple closed polygon in the plane. The closing edge from the last
/// vertex back to the first is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    vertices: Vec<[f64; 2]>,
}

impl Polygon {
    pub fn new(vertices: Vec<[f64; 2]>) -> Result<Self> {
        if vertices.len() < 3 {
            return Err(Error::InvalidArgument(format!("polygon needs at least 3 vertices, got {}", vertices.len())));
        }
        if vertices.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("polygon vertex is not finite".into()));
        }
        let poly = Self { vertices };
        if poly.signed_area().abs() <= f64::EPSILON * poly.bbox_diameter().powi(2) {
            return Err(Error::InvalidArgument("polygon has zero signed area".into()));
        }
        Ok(poly)
    }

    pub fn vertices(&self) -> &[[f64; 2]] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a[0] * b[1] - b[0] * a[1]).sum::<f64>()
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1])).sum()
    }

    fn bbox(&self) -> ([f64; 2], [f64; 2]) {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for v in &self.vertices {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k]);
                hi[k] = hi[k].max(v[k]);
            }
        }
        (lo, hi)
    }

    fn bbox_diameter(&self) -> f64 {
        let (lo, hi) = self.bbox();
        (hi[0] - lo[0]).hypot(hi[1] - lo[1])
    }

    fn boundary_distance(&self, p: &[f64]) -> f64 {
        self.edges().map(|(a, b)| segment_distance(p, a, b)).fold(f64::INFINITY, f64::min)
    }

    /// Even-odd rule; points on an edge count as outside.
    fn contains(&self, p: &[f64]) -> bool {
        if self.boundary_distance(p) <= 1e-14 * self.bbox_diameter() {
            return false;
        }
        let (x, y) = (p[0], p[1]);
        let mut inside = false;
        for (a, b) in self.edges() {
            if (a[1] > y) != (b[1] > y) {
                let x_cross = a[0] + (y - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
                if x < x_cross {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn contains_closed(&self, p: &[f64]) -> bool {
        self.contains(p) || self.boundary_distance(p) <= 1e-12 * self.bbox_diameter()
    }

    /// Uniform in arc length over the concatenated edges.
    fn sample_perimeter(&self, rng: &mut Rng) -> Vec<f64> {
        let lengths: Vec<f64> = self.edges().map(|(a, b)| (b[0] - a[0]).hypot(b[1] - a[1])).collect();
        let total: f64 = lengths.iter().sum();
        let mut s = rng.random::<f64>() * total;
        let mut edge = lengths.len() - 1;
        for (i, len) in lengths.iter().enumerate() {
            if s < *len {
                edge = i;
                break;
            }
            s -= len;
        }
        let a = self.vertices[edge];
        let b = self.vertices[(edge + 1) % self.vertices.len()];
        let t = (s / lengths[edge]).clamp(0.0, 1.0);
        vec![a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
    }
}

fn segment_distance(p: &[f64], a: [f64; 2], b: [f64; 2]) -> f64 {
    let d = [b[0] - a[0], b[1] - a[1]];
    let len2 = d[0] * d[0] + d[1] * d[1];
    let t = (((p[0] - a[0]) * d[0] + (p[1] - a[1]) * d[1]) / len2).clamp(0.0, 1.0);
    let q = [a[0] + t * d[0], a[1] + t * d[1]];
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// Spatial region swept over `[t0, tf]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpaceTime {
    space: Box<Domain>,
    t0: f64,
    tf: f64,
}

impl SpaceTime {
    pub fn space(&self) -> &Domain {
        &self.space
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn tf(&self) -> f64 {
        self.tf
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Domain {
    Box(BoxDomain),
    Polygon(Polygon),
    SpaceTime(SpaceTime),
}

impl Domain {
    pub fn unit_square() -> Self {
        Domain::Box(BoxDomain::unit_square())
    }

    pub fn rect(x: [f64; 2], y: [f64; 2]) -> Result<Self> {
        Ok(Domain::Box(BoxDomain::new(vec![x[0], y[0]], vec![x[1], y[1]])?))
    }

    pub fn polygon(vertices: Vec<[f64; 2]>) -> Result<Self> {
        Ok(Domain::Polygon(Polygon::new(vertices)?))
    }

    pub fn space_time(space: Domain, t0: f64, tf: f64) -> Result<Self> {
        if matches!(space, Domain::SpaceTime(_)) {
            return Err(Error::InvalidArgument("space-time domains cannot be nested".into()));
        }
        if space.dim() > 2 {
            return Err(Error::InvalidArgument("space-time domains support 1D or 2D space".into()));
        }
        if !(t0.is_finite() && tf.is_finite() && t0 < tf) {
            return Err(Error::InvalidArgument(format!("time interval requires t0 < tf, got [{t0}, {tf}]")));
        }
        Ok(Domain::SpaceTime(SpaceTime { space: Box::new(space), t0, tf }))
    }

    pub fn dim(&self) -> usize {
        match self {
            Domain::Box(b) => b.dim(),
            Domain::Polygon(_) => 2,
            Domain::SpaceTime(st) => st.space.dim() + 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Domain::Box(_) => "box",
            Domain::Polygon(_) => "polygon",
            Domain::SpaceTime(_) => "space_time_box",
        }
    }

    pub fn as_rect(&self) -> Option<&BoxDomain> {
        match self {
            Domain::Box(b) if b.dim() == 2 => Some(b),
            _ => None,
        }
    }

    fn check_dim(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: p.len() });
        }
        Ok(())
    }

    /// Strict interior membership: points on the boundary are outside.
    pub fn contains(&self, p: &[f64]) -> Result<bool> {
        self.check_dim(p)?;
        Ok(self.contains_unchecked(p))
    }

    fn contains_unchecked(&self, p: &[f64]) -> bool {
        match self {
            Domain::Box(b) => b.contains(p),
            Domain::Polygon(poly) => poly.contains(p),
            Domain::SpaceTime(st) => {
                let (x, t) = p.split_at(p.len() - 1);
                st.t0 < t[0] && t[0] < st.tf && st.space.contains_unchecked(x)
            }
        }
    }

    /// Membership in the closed region (boundary included).
    pub fn contains_closed(&self, p: &[f64]) -> Result<bool> {
        self.check_dim(p)?;
        Ok(self.contains_closed_unchecked(p))
    }

    fn contains_closed_unchecked(&self, p: &[f64]) -> bool {
        match self {
            Domain::Box(b) => b.contains_closed(p),
            Domain::Polygon(poly) => poly.contains_closed(p),
            Domain::SpaceTime(st) => {
                let (x, t) = p.split_at(p.len() - 1);
                st.t0 <= t[0] && t[0] <= st.tf && st.space.contains_closed_unchecked(x)
            }
        }
    }

    /// Euclidean distance from `p` to the collocation boundary Γ. For
    /// space-time domains Γ omits the final-time face.
    pub fn boundary_distance(&self, p: &[f64]) -> Result<f64> {
        self.check_dim(p)?;
        Ok(self.boundary_distance_unchecked(p))
    }

    fn boundary_distance_unchecked(&self, p: &[f64]) -> f64 {
        match self {
            Domain::Box(b) => b.boundary_distance(p),
            Domain::Polygon(poly) => poly.boundary_distance(p),
            Domain::SpaceTime(st) => {
                let (x, t) = p.split_at(p.len() - 1);
                let t = t[0];
                let tc = t.clamp(st.t0, st.tf);
                // Lateral surface.
                let lateral = st.space.boundary_distance_unchecked(x).hypot(t - tc);
                // Initial face: the closed spatial region at t0.
                let initial = if st.space.contains_closed_unchecked(x) {
                    (t - st.t0).abs()
                } else {
                    st.space.boundary_distance_unchecked(x).hypot(t - st.t0)
                };
                lateral.min(initial)
            }
        }
    }

    /// Lebesgue measure of the region.
    pub fn measure(&self) -> f64 {
        match self {
            Domain::Box(b) => b.volume(),
            Domain::Polygon(poly) => poly.signed_area().abs(),
            Domain::SpaceTime(st) => st.space.measure() * (st.tf - st.t0),
        }
    }

    /// Measure of Γ (counting measure for the endpoints of an interval).
    pub fn boundary_measure(&self) -> f64 {
        match self {
            Domain::Box(b) => b.surface(),
            Domain::Polygon(poly) => poly.perimeter(),
            Domain::SpaceTime(st) => st.space.boundary_measure() * (st.tf - st.t0) + st.space.measure(),
        }
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            Domain::Box(b) => (b.lo.clone(), b.hi.clone()),
            Domain::Polygon(poly) => {
                let (lo, hi) = poly.bbox();
                (lo.to_vec(), hi.to_vec())
            }
            Domain::SpaceTime(st) => {
                let (mut lo, mut hi) = st.space.bounding_box();
                lo.push(st.t0);
                hi.push(st.tf);
                (lo, hi)
            }
        }
    }

    fn sample_closed(&self, rng: &mut Rng) -> Vec<f64> {
        match self {
            Domain::Box(b) => b.sample_closed(rng),
            _ => {
                let (lo, hi) = self.bounding_box();
                loop {
                    let p: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + rng.random::<f64>() * (b - a)).collect();
                    if self.contains_closed_unchecked(&p) {
                        return p;
                    }
                }
            }
        }
    }

    fn sample_boundary_point(&self, rng: &mut Rng) -> Vec<f64> {
        match self {
            Domain::Box(b) => b.sample_surface(rng),
            Domain::Polygon(poly) => poly.sample_perimeter(rng),
            Domain::SpaceTime(st) => {
                let span = st.tf - st.t0;
                let lateral = st.space.boundary_measure() * span;
                let initial = st.space.measure();
                if rng.random::<f64>() * (lateral + initial) < lateral {
                    let mut p = st.space.sample_boundary_point(rng);
                    let t = loop {
                        let t = st.t0 + rng.random::<f64>() * span;
                        if t < st.tf {
                            break t;
                        }
                    };
                    p.push(t);
                    p
                } else {
                    let mut p = st.space.sample_closed(rng);
                    p.push(st.t0);
                    p
                }
            }
        }
    }

    /// `n` i.i.d. uniform points in the open region, by rejection from the
    /// bounding box. Rows of the result are points.
    pub fn sample_interior(&self, n: usize, rng: &mut Rng) -> Result<Array2<f64>> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        let d = self.dim();
        let (lo, hi) = self.bounding_box();
        let mut out = Array2::zeros((n, d));
        let mut p = vec![0.0; d];
        let (mut accepted, mut trials) = (0usize, 0usize);
        while accepted < n {
            for k in 0..d {
                p[k] = lo[k] + rng.random::<f64>() * (hi[k] - lo[k]);
            }
            trials += 1;
            if self.contains_unchecked(&p) {
                out.row_mut(accepted).iter_mut().zip(&p).for_each(|(o, v)| *o = *v);
                accepted += 1;
            }
            if trials >= REJECTION_WARMUP && (accepted as f64) < MIN_ACCEPTANCE * trials as f64 {
                return Err(Error::DegenerateDomain { accepted, trials });
            }
        }
        Ok(out)
    }

    /// `n` points uniform with respect to the surface measure of Γ.
    pub fn sample_boundary(&self, n: usize, rng: &mut Rng) -> Result<Array2<f64>> {
        if n == 0 {
            return Err(Error::InvalidArgument("sample count must be at least 1".into()));
        }
        let d = self.dim();
        let mut out = Array2::zeros((n, d));
        for mut row in out.rows_mut() {
            let p = self.sample_boundary_point(rng);
            row.iter_mut().zip(&p).for_each(|(o, v)| *o = *v);
        }
        Ok(out)
    }
}

/// How a total point budget is split between interior and boundary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "rule", content = "n_boundary")]
pub enum PointRule {
    /// Boundary count held fixed.
    Fixed(usize),
    /// Half the points on the boundary.
    Linear,
    /// Boundary line density equal to the square root of the interior
    /// surface density: `N_B = 4 sqrt(N_I)`.
    Sqrt,
}

impl std::fmt::Display for PointRule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PointRule::Fixed(k) => write!(f, "fixed({k})"),
            PointRule::Linear => f.write_str("linear"),
            PointRule::Sqrt => f.write_str("sqrt"),
        }
    }
}

impl std::str::FromStr for PointRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "linear" => Ok(PointRule::Linear),
            "sqrt" => Ok(PointRule::Sqrt),
            _ => {
                let inner = s
                    .strip_prefix("fixed(")
                    .and_then(|r| r.strip_suffix(')'))
                    .or_else(|| s.strip_prefix("fixed:"))
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown point rule `{s}`")))?;
                inner
                    .trim()
                    .parse()
                    .map(PointRule::Fixed)
                    .map_err(|_| Error::InvalidArgument(format!("bad boundary count in `{s}`")))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Allocation {
    pub n_interior: usize,
    pub n_boundary: usize,
    /// Set when the rule had no admissible solution and the nearest feasible
    /// split was substituted.
    pub fallback: bool,
}

/// Ratio between the boundary perimeter and the characteristic length used by
/// the sqrt rule. The characteristic length is the side of the square whose
/// perimeter matches, so the rule reduces to `N_B = 4 sqrt(N_I)` on every domain.
const SQRT_RULE_FACTOR: f64 = 4.0;

pub fn allocate_counts(total: usize, rule: PointRule) -> Result<Allocation> {
    if total < 2 {
        return Err(Error::InvalidArgument(format!("total point count must be at least 2, got {total}")));
    }
    let feasible = |nb: usize| nb >= 1 && nb < total;
    let (n_boundary, fallback) = match rule {
        PointRule::Fixed(k) => {
            if feasible(k) {
                (k, false)
            } else {
                (k.clamp(1, total - 1), true)
            }
        }
        PointRule::Linear => (total / 2, false),
        PointRule::Sqrt => {
            let n = total as f64;
            let k = SQRT_RULE_FACTOR;
            // nb = k sqrt(n - nb) with s = sqrt(n - nb): s^2 + k s - n = 0.
            let s = 0.5 * (-k + (k * k + 4.0 * n).sqrt());
            let root = k * s;
            let mismatch = |nb: usize| (nb as f64 - k * ((total - nb) as f64).sqrt()).abs();
            let lo = root.floor() as usize;
            let candidates = [lo, lo + 1];
            let best = candidates
                .iter()
                .copied()
                .filter(|&nb| feasible(nb))
                .min_by(|&a, &b| mismatch(a).total_cmp(&mismatch(b)));
            match best {
                Some(nb) => (nb, false),
                None => ((root.round() as usize).clamp(1, total - 1), true),
            }
        }
    };
    Ok(Allocation { n_interior: total - n_boundary, n_boundary, fallback })
}

/// Training or test collocation points.
#[derive(Debug, Clone)]
pub struct PointSet {
    pub interior: Array2<f64>,
    pub boundary: Array2<f64>,
    pub seed: u64,
}

impl PointSet {
    /// Interior points from `domain` and boundary points from `curve`
    /// (usually the same domain; a separate curve for extrapolation runs).
    pub fn sample(domain: &Domain, curve: &Domain, n_interior: usize, n_boundary: usize, seed: u64) -> Result<Self> {
        let mut rng = crate::seed::rng_from_seed(seed);
        let interior = domain.sample_interior(n_interior, &mut rng)?;
        let boundary = curve.sample_boundary(n_boundary, &mut rng)?;
        Ok(Self { interior, boundary, seed })
    }
}
