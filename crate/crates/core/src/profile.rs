//! Constants governing the good-parameter conditions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `(λ, α, N, σ-exponent)`; the per-`L` radii `σ = L^{-sigma_exp}`,
/// `δ = L^{-αN}` and `δ₀ = L^{-11/12}` are derived on demand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantsProfile {
    pub lambda: f64,
    pub alpha: f64,
    #[serde(rename = "N")]
    pub n: usize,
    pub sigma_exp: f64,
}

impl ConstantsProfile {
    /// Asymptotic constants. `N` is the smallest round value with `δ < σ`.
    pub const fn paper() -> Self {
        Self { lambda: 1e-3, alpha: 1e-6, n: 200_000, sigma_exp: 1.0 / 6.0 }
    }

    /// Constants at which the structural statements can be exercised on a desk.
    ///
    /// `σ = L^{-0.7}` keeps `Δ_N` non-empty for `L ≥ 10³`, `δ = L^{-1}` sits
    /// below `δ₀ < σ`, and `16α/λ = 0.8 < 1`.
    pub const fn desk() -> Self {
        Self { lambda: 0.5, alpha: 0.025, n: 40, sigma_exp: 0.7 }
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "paper" => Some(Self::paper()),
            "desk" => Some(Self::desk()),
            _ => None,
        }
    }

    pub fn with_n(self, n: usize) -> Self {
        Self { n, ..self }
    }

    pub fn sigma<T: Scalar>(&self, l: T) -> T {
        l.powf(T::lit(-self.sigma_exp))
    }

    pub fn delta<T: Scalar>(&self, l: T) -> T {
        l.powf(T::lit(-self.alpha * self.n as f64))
    }

    pub fn delta0<T: Scalar>(&self, l: T) -> T {
        l.powf(T::lit(-11.0 / 12.0))
    }

    /// Rejects profiles with non-positive rates or without `δ < σ < 1` and `δ₀ < σ`.
    pub fn validate(&self, l: f64) -> Result<()> {
        if !(self.lambda > 0.0 && self.alpha > 0.0 && self.sigma_exp > 0.0) {
            return Err(Error::InvalidProfile(format!("rates must be positive: {self:?}")));
        }
        if self.n == 0 {
            return Err(Error::InvalidProfile("N must be positive".into()));
        }
        let (sigma, delta, delta0) = (self.sigma(l), self.delta(l), self.delta0(l));
        if !(delta < sigma && sigma < 1.0) {
            return Err(Error::InvalidProfile(format!(
                "need delta < sigma < 1 at L = {l}: delta = {delta:e}, sigma = {sigma:e}"
            )));
        }
        if !(delta0 < sigma) {
            return Err(Error::InvalidProfile(format!(
                "need delta0 < sigma at L = {l}: delta0 = {delta0:e}, sigma = {sigma:e}"
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_radii() {
        let p = ConstantsProfile { lambda: 0.1, alpha: 0.01, n: 50, sigma_exp: 0.25 };
        assert!((p.sigma(1e4) - 0.1f64).abs() < 1e-15);
        assert!((p.delta(1e4) - 1e-2f64).abs() < 1e-15);
        assert!((p.delta0(1e4f64) - 10f64.powf(-44.0 / 12.0)).abs() < 1e-15);
        p.validate(1e4).unwrap();
    }

    #[test]
    fn asymptotic_profile_constants() {
        let p = ConstantsProfile::paper();
        assert_eq!((p.lambda, p.alpha, p.sigma_exp), (1e-3, 1e-6, 1.0 / 6.0));
        p.validate(1e4).unwrap();
        assert!(p.with_n(20).validate(1e4).is_err());
    }

    #[test]
    fn infeasible_profile_rejected() {
        let p = ConstantsProfile { lambda: 0.1, alpha: 0.001, n: 10, sigma_exp: 0.5 };
        assert!(matches!(p.validate(1e4), Err(Error::InvalidProfile(_))));
    }

    #[test]
    fn desk_profile_is_feasible() {
        for l in [1e3, 1e4, 1e5] {
            let p = ConstantsProfile::desk();
            p.validate(l).unwrap();
            assert!(p.delta(l) < p.delta0(l));
            assert!(16.0 * p.alpha / p.lambda < 1.0);
        }
    }

    #[test]
    fn json_round_trip_uses_capital_n() {
        let s = serde_json::to_string(&ConstantsProfile::desk()).unwrap();
        assert!(s.contains("\"N\""));
        let back: ConstantsProfile = serde_json::from_str(&s).unwrap();
        assert_eq!(back, ConstantsProfile::desk());
    }
}
