//! The circle map `f_a(x) = x + a + L·ln|Φ(x)| (mod 1)` and its critical and
//! singular structure.

use std::sync::Arc;

use rand::Rng;

use crate::error::{Error, HaltReason, Result};
use crate::phi::PhiSpec;
use crate::scalar::Scalar;

/// Grid resolution per unit interval for sign-change scans.
pub const SCAN_POINTS: usize = 4096;

/// Residual threshold below which an orbit point counts as having hit `C` or `S`.
pub fn hit_threshold<T: Scalar>() -> T {
    T::lit(1e-13).max(T::epsilon() * T::lit(100.0))
}

/// Distance on `ℝ/ℤ`, in `[0, 1/2]`.
#[inline]
pub fn circle_dist<T: Scalar>(x: T, y: T) -> T {
    let d = (x - y).abs().wrap_unit();
    d.min(T::one() - d)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PointKind {
    Critical,
    Singular,
}

/// Sorted, pairwise distinct points of `C` or `S` in `[0, 1)`.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PointSet<T> {
    pub points: Vec<T>,
    pub kind: PointKind,
    /// Largest defining residual over the points.
    pub tolerance: T,
}

impl<T: Scalar> PointSet<T> {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Index and distance of the closest point; ties go to the smallest index.
pub fn nearest_in_set<T: Scalar>(x: T, set: &PointSet<T>) -> Result<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for (i, &p) in set.points.iter().enumerate() {
        let d = circle_dist(x, p);
        match best {
            Some((_, bd)) if d >= bd => {}
            _ => best = Some((i, d)),
        }
    }
    best.ok_or(Error::EmptySet)
}

/// Distance to a set, with the empty set treated as lying at maximal distance 1/2.
#[inline]
pub(crate) fn set_distance<T: Scalar>(x: T, set: &PointSet<T>) -> (Option<usize>, T) {
    match nearest_in_set(x, set) {
        Ok((i, d)) => (Some(i), d),
        Err(_) => (None, T::lit(0.5)),
    }
}

/// Parameters of one member of the family.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct MapParams<T> {
    pub a: T,
    pub l: T,
}

impl<T: Scalar> MapParams<T> {
    pub fn new(a: T, l: T) -> Result<Self> {
        if !(l >= T::one()) || !l.is_finite() {
            return Err(Error::InvalidParams(format!("L must be a finite value >= 1, got {l}")));
        }
        if !a.is_finite() {
            return Err(Error::InvalidParams(format!("a must be finite, got {a}")));
        }
        Ok(Self { a: a.wrap_unit(), l })
    }
}

/// One iteration: image point and signed log-derivative at the source.
#[derive(Debug, Clone, Copy)]
pub struct Step<T> {
    pub next: T,
    pub log_abs_deriv: T,
    pub sign: i8,
}

/// A member `f_a` of the family together with its critical and singular sets.
///
/// `C` depends only on `(Φ, L)`, so [`CircleMap::with_a`] shares both sets.
#[derive(Debug, Clone)]
pub struct CircleMap<T> {
    phi: PhiSpec<T>,
    params: MapParams<T>,
    critical: Arc<PointSet<T>>,
    singular: Arc<PointSet<T>>,
}

impl<T: Scalar> CircleMap<T> {
    pub fn new(phi: PhiSpec<T>, a: T, l: T) -> Result<Self> {
        let params = MapParams::new(a, l)?;
        let singular = find_singular_points(&phi)?;
        let critical = find_critical_points(&phi, l)?;
        Ok(Self { phi, params, critical: Arc::new(critical), singular: Arc::new(singular) })
    }

    pub fn with_a(&self, a: T) -> Self {
        Self { params: MapParams { a: a.wrap_unit(), l: self.params.l }, ..self.clone() }
    }

    pub fn phi(&self) -> &PhiSpec<T> {
        &self.phi
    }

    pub fn params(&self) -> MapParams<T> {
        self.params
    }

    pub fn a(&self) -> T {
        self.params.a
    }

    pub fn l(&self) -> T {
        self.params.l
    }

    pub fn critical(&self) -> &PointSet<T> {
        &self.critical
    }

    pub fn singular(&self) -> &PointSet<T> {
        &self.singular
    }

    /// `(x + a + L ln|Φ(x)|) mod 1`.
    pub fn f_eval(&self, x: T) -> Result<T> {
        let v = self.phi.eval(x);
        if v.value.abs() < hit_threshold() {
            return Err(Error::SingularHit { x: x.as_f64() });
        }
        Ok((x + self.params.a + self.params.l * v.value.abs().ln()).wrap_unit())
    }

    /// `f'(x) = 1 + L Φ'/Φ`, with no hit checks.
    #[inline]
    pub fn deriv(&self, x: T) -> T {
        let v = self.phi.eval(x);
        T::one() + self.params.l * v.d1 / v.value
    }

    /// `f''(x) = L (Φ''Φ − Φ'²)/Φ²`.
    #[inline]
    pub fn second_deriv(&self, x: T) -> T {
        let v = self.phi.eval(x);
        self.params.l * (v.d2 * v.value - v.d1 * v.d1) / (v.value * v.value)
    }

    /// `ln|f'(x)|` and the sign of `f'(x)`.
    pub fn f_log_deriv(&self, x: T) -> Result<(T, i8)> {
        let v = self.phi.eval(x);
        self.log_deriv_from(x, v.value, v.d1, v.d2)
    }

    #[inline]
    fn log_deriv_from(&self, x: T, value: T, d1: T, d2: T) -> Result<(T, i8)> {
        let thr = hit_threshold::<T>();
        if value.abs() < thr {
            return Err(Error::SingularHit { x: x.as_f64() });
        }
        let l = self.params.l;
        let fp = T::one() + l * d1 / value;
        // Newton distance |f'/f''| to the nearest zero of f'.
        let fpp = l * (d2 * value - d1 * d1) / (value * value);
        if fp.abs() < thr * fpp.abs().max(T::one()) {
            return Err(Error::CriticalHit { x: x.as_f64() });
        }
        Ok((fp.abs().ln(), if fp < T::zero() { -1 } else { 1 }))
    }

    /// Image and log-derivative from a single evaluation of Φ.
    #[inline]
    pub fn step(&self, x: T) -> std::result::Result<Step<T>, HaltReason> {
        let v = self.phi.eval(x);
        match self.log_deriv_from(x, v.value, v.d1, v.d2) {
            Ok((log_abs_deriv, sign)) => Ok(Step {
                next: (x + self.params.a + self.params.l * v.value.abs().ln()).wrap_unit(),
                log_abs_deriv,
                sign,
            }),
            Err(Error::SingularHit { .. }) => Err(HaltReason::SingularHit),
            Err(_) => Err(HaltReason::CriticalHit),
        }
    }

    /// Critical value `c_0 = f(c)` of the critical point with index `idx`.
    pub fn critical_value(&self, idx: usize) -> Result<T> {
        let c = *self.critical.points.get(idx).ok_or(Error::EmptySet)?;
        self.f_eval(c)
    }

    #[inline]
    pub fn d_c(&self, x: T) -> T {
        set_distance(x, &self.critical).1
    }

    #[inline]
    pub fn d_s(&self, x: T) -> T {
        set_distance(x, &self.singular).1
    }
}

fn bisect<T: Scalar>(g: impl Fn(T) -> T, mut lo: T, mut hi: T, mut glo: T) -> T {
    for _ in 0..200 {
        let mid = lo + (hi - lo) * T::lit(0.5);
        if mid <= lo || mid >= hi {
            break;
        }
        let gm = g(mid);
        if gm == T::zero() {
            return mid;
        }
        if (gm < T::zero()) == (glo < T::zero()) {
            lo = mid;
            glo = gm;
        } else {
            hi = mid;
        }
    }
    // pick the endpoint with the smaller residual
    if g(lo).abs() <= g(hi).abs() {
        lo
    } else {
        hi
    }
}

/// Scans `g` on a uniform grid over one period and returns bracketed zeros.
fn scan_zeros<T: Scalar>(g: impl Fn(T) -> T, exact: impl Fn(T) -> bool) -> Vec<T> {
    let m = SCAN_POINTS;
    let grid = |k: usize| T::lit(k as f64 / m as f64);
    let mut out = Vec::new();
    for k in 0..m {
        let x0 = grid(k);
        let g0 = g(x0);
        if exact(x0) {
            out.push(x0);
            continue;
        }
        let x1 = grid(k + 1);
        if exact(x1) {
            continue;
        }
        let g1 = g(x1);
        if (g0 < T::zero()) != (g1 < T::zero()) {
            out.push(bisect(&g, x0, x1, g0).wrap_unit());
        }
    }
    out.sort_by(|a, b| a.partial_cmp(b).unwrap());
    out.dedup_by(|a, b| circle_dist(*a, *b) < T::lit(1e-12));
    if out.len() > 1 && circle_dist(out[0], out[out.len() - 1]) < T::lit(1e-12) {
        out.pop();
    }
    out
}

/// Zeros of Φ in `[0, 1)`.
pub fn find_singular_points<T: Scalar>(phi: &PhiSpec<T>) -> Result<PointSet<T>> {
    let thr = hit_threshold::<T>();
    let points = scan_zeros(|x| phi.eval(x).value, |x| phi.eval(x).value.abs() < thr);
    let mut tol = T::zero();
    for &s in &points {
        let v = phi.eval(s);
        if v.d1.abs() < T::lit(1e-8) {
            return Err(Error::DegenerateZero { x: s.as_f64() });
        }
        tol = tol.max(v.value.abs());
    }
    // Tangential zeros do not change sign: look for them among zeros of Φ'.
    for s in find_phi_critical_points(phi)? {
        if phi.eval(s).value.abs() < T::lit(1e-10) {
            return Err(Error::DegenerateZero { x: s.as_f64() });
        }
    }
    Ok(PointSet { points, kind: PointKind::Singular, tolerance: tol.max(thr) })
}

/// Zeros of Φ' in `[0, 1)`.
pub fn find_phi_critical_points<T: Scalar>(phi: &PhiSpec<T>) -> Result<Vec<T>> {
    let pts = scan_zeros(|x| phi.eval(x).d1, |x| phi.eval(x).d1 == T::zero());
    for &p in &pts {
        if phi.eval(p).d2.abs() < T::lit(1e-8) {
            return Err(Error::DegenerateCritical { x: p.as_f64() });
        }
    }
    Ok(pts)
}

/// Zeros of `f' = 1 + LΦ'/Φ` in `[0, 1) \ S`.
///
/// Scans `Φ + LΦ'` (which equals `f'·Φ` and has no poles) so brackets never
/// straddle a singular point.
pub fn find_critical_points<T: Scalar>(phi: &PhiSpec<T>, l: T) -> Result<PointSet<T>> {
    let g = |x: T| {
        let v = phi.eval(x);
        v.value + l * v.d1
    };
    let points = scan_zeros(g, |x| g(x) == T::zero());
    let mut tol = T::zero();
    for &c in &points {
        let v = phi.eval(c);
        let fp = T::one() + l * v.d1 / v.value;
        let fpp = l * (v.d2 * v.value - v.d1 * v.d1) / (v.value * v.value);
        tol = tol.max((fp / fpp.abs().max(T::one())).abs());
    }
    Ok(PointSet { points, kind: PointKind::Critical, tolerance: tol.max(hit_threshold()) })
}

/// Empirical constants for the two-sided derivative bracket
/// `K₀⁻¹ L d_C/d_S ≤ |f'| ≤ K₀ L d_C/d_S`, `|f''| ≤ K₀ L / d_S²` and the
/// `C_{ε₀}` curvature bracket `K₀⁻¹ L < |f''| < K₀ L`.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DerivativeBracket {
    pub k0: f64,
    pub eps0: f64,
    /// Safety factor applied to the sampled extremes.
    pub safety: f64,
}

#[derive(Debug, Clone, Copy, Default, serde::Serialize)]
pub struct BracketViolations {
    pub samples: usize,
    pub first_derivative: usize,
    pub second_derivative: usize,
    pub outside_neighbourhood: usize,
    pub near_critical: usize,
}

impl BracketViolations {
    pub fn total(&self) -> usize {
        self.first_derivative + self.second_derivative + self.outside_neighbourhood + self.near_critical
    }
}

const BRACKET_CLEARANCE: f64 = 1e-8;

fn sample_admissible<R: Rng>(map: &CircleMap<f64>, rng: &mut R) -> f64 {
    loop {
        let x: f64 = rng.gen();
        if map.d_c(x) > BRACKET_CLEARANCE && map.d_s(x) > BRACKET_CLEARANCE {
            return x;
        }
    }
}

impl DerivativeBracket {
    pub const SAFETY: f64 = 1.05;

    /// Fits `K₀` over `samples` random points per `L`, then the largest `ε₀`
    /// on a dyadic ladder for which the curvature bracket holds on the sample.
    pub fn fit<R: Rng>(phi: &PhiSpec<f64>, ls: &[f64], samples: usize, rng: &mut R) -> Result<Self> {
        let mut worst = 1.0f64;
        let mut near: Vec<(f64, f64)> = Vec::new();
        for &l in ls {
            let map = CircleMap::new(phi.clone(), 0.0, l)?;
            for _ in 0..samples {
                let x = sample_admissible(&map, &mut *rng);
                let (dc, ds) = (map.d_c(x), map.d_s(x));
                let r = map.deriv(x).abs() / (l * dc / ds);
                let s = map.second_deriv(x).abs() * ds * ds / l;
                worst = worst.max(r).max(1.0 / r).max(s);
                near.push((dc, map.second_deriv(x).abs() / l));
            }
            // probe the immediate neighbourhood of C as well
            for &c in &map.critical().points {
                for k in 0..40 {
                    let e = 0.1 * 0.5f64.powi(k);
                    for x in [c - e, c + e] {
                        let q = map.second_deriv(x).abs() / l;
                        if e < 1e-3 {
                            worst = worst.max(q).max(1.0 / q);
                        }
                        near.push((map.d_c(x), q));
                    }
                }
            }
        }
        let k0 = worst * Self::SAFETY;
        let mut eps0 = 0.0;
        for k in 1..60 {
            let e = 0.5f64.powi(k);
            if near.iter().filter(|(dc, _)| *dc < e).all(|&(_, q)| q > 1.0 / k0 && q < k0) {
                eps0 = e;
                break;
            }
        }
        Ok(Self { k0, eps0, safety: Self::SAFETY })
    }

    /// Counts violations of all three bracket statements on fresh samples.
    pub fn verify<R: Rng>(&self, map: &CircleMap<f64>, samples: usize, rng: &mut R) -> BracketViolations {
        let l = map.l();
        let k0 = self.k0;
        let mut v = BracketViolations { samples, ..Default::default() };
        for _ in 0..samples {
            let x = sample_admissible(map, &mut *rng);
            let (dc, ds) = (map.d_c(x), map.d_s(x));
            let fp = map.deriv(x).abs();
            let fpp = map.second_deriv(x).abs();
            let base = l * dc / ds;
            if !(fp >= base / k0 && fp <= k0 * base) {
                v.first_derivative += 1;
            }
            if fpp > k0 * l / (ds * ds) {
                v.second_derivative += 1;
            }
            // (b): any ε ≤ d_C(x) gives |f'| ≥ L ε / K₀; the sharpest is ε = d_C(x)
            if fp < l * dc / k0 {
                v.outside_neighbourhood += 1;
            }
            if dc < self.eps0 && !(fpp > l / k0 && fpp < k0 * l) {
                v.near_critical += 1;
            }
        }
        v
    }
}
