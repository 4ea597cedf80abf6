//! Forcing functions Φ with unit period and analytic derivatives.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Value of Φ together with its first two derivatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhiValue<T> {
    pub value: T,
    pub d1: T,
    pub d2: T,
}

type PhiFn<T> = dyn Fn(T) -> PhiValue<T> + Send + Sync;

/// An admissible forcing function, evaluated through its analytic triple.
#[derive(Clone)]
pub struct PhiSpec<T> {
    name: String,
    eval: Arc<PhiFn<T>>,
}

impl<T> fmt::Debug for PhiSpec<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PhiSpec").field("name", &self.name).finish()
    }
}

impl<T: Scalar> PhiSpec<T> {
    pub fn new<F>(name: impl Into<String>, eval: F) -> Self
    where
        F: Fn(T) -> PhiValue<T> + Send + Sync + 'static,
    {
        Self { name: name.into(), eval: Arc::new(eval) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Φ, Φ', Φ'' at `x mod 1`.
    #[inline]
    pub fn eval(&self, x: T) -> PhiValue<T> {
        (self.eval)(x.wrap_unit())
    }

    /// `sin(2πx)`, the default forcing.
    pub fn sin2pi() -> Self {
        Self::sine(1, T::zero(), "sin2pi".to_string())
    }

    /// `sin(4πx)`.
    pub fn sin4pi() -> Self {
        Self::sine(2, T::zero(), "sin4pi".to_string())
    }

    /// `sin(2πx) + shift`. For `|shift| < 1` the zeros stay simple.
    pub fn sin2pi_shifted(shift: f64) -> Self {
        Self::sine(1, T::lit(shift), format!("sin2pi+{shift}"))
    }

    fn sine(harmonic: u32, shift: T, name: String) -> Self {
        let w = T::lit(2.0 * harmonic as f64) * T::PI();
        Self::new(name, move |x: T| {
            let (s, c) = (w * x).sin_cos();
            PhiValue { value: s + shift, d1: w * c, d2: -w * w * s }
        })
    }
}

/// Named forcing functions addressable from configuration.
///
/// Besides explicitly registered entries, names of the form `sin2pi+<c>`
/// resolve to [`PhiSpec::sin2pi_shifted`].
pub struct PhiRegistry<T> {
    entries: BTreeMap<String, PhiSpec<T>>,
}

impl<T: Scalar> Default for PhiRegistry<T> {
    fn default() -> Self {
        let mut r = Self { entries: BTreeMap::new() };
        r.register(PhiSpec::sin2pi());
        r.register(PhiSpec::sin4pi());
        r
    }
}

impl<T: Scalar> PhiRegistry<T> {
    pub fn register(&mut self, spec: PhiSpec<T>) {
        self.entries.insert(spec.name().to_string(), spec);
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn get(&self, name: &str) -> Result<PhiSpec<T>> {
        if let Some(spec) = self.entries.get(name) {
            return Ok(spec.clone());
        }
        if let Some(rest) = name.strip_prefix("sin2pi+") {
            let shift: f64 = rest.parse().map_err(|_| Error::UnknownPhi(name.to_string()))?;
            return Ok(PhiSpec::sin2pi_shifted(shift));
        }
        Err(Error::UnknownPhi(name.to_string()))
    }
}

/// Outcome of checking a forcing function against its admissibility hypotheses.
#[derive(Debug, Clone, serde::Serialize)]
pub struct PhiAudit {
    pub max_period_defect: f64,
    pub max_fd_rel_error_d1: f64,
    pub max_fd_rel_error_d2: f64,
    pub min_abs_d1_at_zeros: f64,
    pub min_abs_d2_at_critical: f64,
}

/// Checks periodicity, simple zeros, nondegenerate critical points of Φ and
/// the analytic derivatives against central differences on a grid.
pub fn audit_phi(spec: &PhiSpec<f64>, grid: usize) -> Result<PhiAudit> {
    let mut period = 0.0f64;
    let mut fd1 = 0.0f64;
    let mut fd2 = 0.0f64;
    let h = 1e-5;
    for k in 0..grid {
        let x = (k as f64 + 0.37) / grid as f64;
        let v = (spec.eval)(x);
        let shifted = (spec.eval)(x + 1.0);
        period = period.max((v.value - shifted.value).abs());
        let p = (spec.eval)(x + h);
        let m = (spec.eval)(x - h);
        let d1 = (p.value - m.value) / (2.0 * h);
        let d2 = (p.d1 - m.d1) / (2.0 * h);
        let scale1 = v.d1.abs().max(1.0);
        let scale2 = v.d2.abs().max(1.0);
        fd1 = fd1.max((d1 - v.d1).abs() / scale1);
        fd2 = fd2.max((d2 - v.d2).abs() / scale2);
    }
    let zeros = crate::map::find_singular_points(spec)?;
    let min_d1 = zeros
        .points
        .iter()
        .map(|&s| spec.eval(s).d1.abs())
        .fold(f64::INFINITY, f64::min);
    let crit = crate::map::find_phi_critical_points(spec)?;
    let min_d2 = crit.iter().map(|&s| spec.eval(s).d2.abs()).fold(f64::INFINITY, f64::min);
    Ok(PhiAudit {
        max_period_defect: period,
        max_fd_rel_error_d1: fd1,
        max_fd_rel_error_d2: fd2,
        min_abs_d1_at_zeros: min_d1,
        min_abs_d2_at_critical: min_d2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn sine_extremum_and_zero() {
        let phi = PhiSpec::<f64>::sin2pi();
        let v = phi.eval(0.25);
        assert!((v.value - 1.0).abs() < 1e-15);
        assert!(v.d1.abs() < 1e-12);
        assert!((v.d2 + 4.0 * PI * PI).abs() < 1e-12);
        let z = phi.eval(0.0);
        assert_eq!(z.value, 0.0);
        assert!((z.d1 - 2.0 * PI).abs() < 1e-15);
        assert_eq!(z.d2, 0.0);
    }

    #[test]
    fn periodic_evaluation() {
        let phi = PhiSpec::<f64>::sin2pi();
        assert_eq!(phi.eval(1.25), phi.eval(0.25));
    }

    #[test]
    fn registry_lookup() {
        let reg = PhiRegistry::<f64>::default();
        assert_eq!(reg.get("sin2pi").unwrap().name(), "sin2pi");
        assert_eq!(reg.get("sin4pi").unwrap().name(), "sin4pi");
        let shifted = reg.get("sin2pi+0.5").unwrap();
        assert!((shifted.eval(0.0).value - 0.5).abs() < 1e-15);
        assert!(matches!(reg.get("cos"), Err(Error::UnknownPhi(_))));
        assert!(matches!(reg.get("sin2pi+x"), Err(Error::UnknownPhi(_))));
    }

    #[test]
    fn audit_builtins() {
        for phi in [PhiSpec::sin2pi(), PhiSpec::sin4pi(), PhiSpec::sin2pi_shifted(0.5)] {
            let a = audit_phi(&phi, 997).unwrap();
            assert!(a.max_period_defect < 1e-12, "{}", phi.name());
            assert!(a.max_fd_rel_error_d1 < 1e-6);
            assert!(a.max_fd_rel_error_d2 < 1e-6);
            assert!(a.min_abs_d1_at_zeros > 0.1);
            assert!(a.min_abs_d2_at_critical > 0.1);
        }
    }
}
