//! Bound/free decomposition of critical orbits.

use serde::Serialize;

use crate::conditions::{check_delta_n, check_g1, check_g2, check_g3};
use crate::error::{Error, Result};
use crate::map::{circle_dist, nearest_in_set, CircleMap};
use crate::orbit::{iterate_orbit, log_jacobian, CriticalOrbits, OrbitRecord, WindowTable};
use crate::profile::ConstantsProfile;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct BoundPeriod {
    pub p: usize,
    /// No annulus up to `pmax` contains the image; `p` was clamped to `pmax`.
    pub saturated: bool,
}

/// Bound period of `x` to the critical point whose critical orbit is `binding`:
/// the `p ≥ 2` with `D_p(c₀) ≤ |f(x) − c₀| < D_{p−1}(c₀)`.
pub fn bound_period<T: Scalar>(
    map: &CircleMap<T>,
    binding: &OrbitRecord<T>,
    windows: &WindowTable<T>,
    x: T,
    pmax: usize,
) -> Result<BoundPeriod> {
    let c0 = *binding.points.first().ok_or(Error::EmptySet)?;
    let fx = map.f_eval(x)?;
    let ln_dist = circle_dist(fx, c0).ln();
    let ln_d1 = windows.log_d_n(1).ok_or(Error::TooShort { len: 0, need: 1 })?;
    if ln_dist >= ln_d1 {
        return Err(Error::OutsideWindow { dist: ln_dist.exp().as_f64(), d1: ln_d1.exp().as_f64() });
    }
    let top = pmax.min(windows.valid_to);
    for p in 2..=top {
        if windows.log_d_n(p).is_some_and(|ld| ld <= ln_dist) {
            return Ok(BoundPeriod { p, saturated: false });
        }
    }
    Ok(BoundPeriod { p: pmax.max(2), saturated: true })
}

/// A free return of a critical orbit to `C_radius`.
#[derive(Debug, Clone, Serialize)]
pub struct ReturnEvent {
    pub time: usize,
    /// Index of the binding (nearest) critical point.
    pub binding: usize,
    /// `|c_time − c^{(k)}| ∈ (L^{−r}, L^{−r+1}]`.
    pub r: u32,
    /// Bound period; `1` when the image falls outside the first window.
    pub p: usize,
    pub deep: bool,
    pub saturated: bool,
    pub outside_window: bool,
    /// `|c_time − c^{(k)}|`.
    pub distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Itinerary {
    pub owner: usize,
    pub horizon: usize,
    pub radius: f64,
    pub events: Vec<ReturnEvent>,
}

impl Itinerary {
    pub fn event_at(&self, time: usize) -> Option<&ReturnEvent> {
        self.events.iter().find(|e| e.time == time)
    }

    /// Checks `n_1 < n_1+p_1 ≤ n_2 < n_2+p_2 ≤ …`.
    pub fn is_interleaved(&self) -> bool {
        self.events.windows(2).all(|w| w[0].time < w[0].time + w[0].p && w[0].time + w[0].p <= w[1].time)
            && self.events.iter().all(|e| e.p >= 1)
    }

    pub fn total_bound_time(&self) -> usize {
        self.events.iter().filter(|e| !e.outside_window).map(|e| e.p).sum()
    }
}

/// Which neighbourhood of `C` defines a return.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReturnRadius {
    Delta,
    Delta0,
    /// `δ^{1/20}`, the coarser structure used inside free segments.
    DeltaRoot20,
}

impl ReturnRadius {
    pub fn value<T: Scalar>(self, profile: &ConstantsProfile, l: T) -> T {
        match self {
            ReturnRadius::Delta => profile.delta(l),
            ReturnRadius::Delta0 => profile.delta0(l),
            ReturnRadius::DeltaRoot20 => profile.delta(l).powf(T::lit(0.05)),
        }
    }
}

/// The `r ≥ 1` with `dist ∈ (L^{−r}, L^{−r+1}]`.
pub(crate) fn depth_index<T: Scalar>(dist: T, l: T) -> u32 {
    let (dist, l) = (dist.as_f64(), l.as_f64());
    let guess = (-(dist.ln() / l.ln())).floor() + 1.0;
    if !guess.is_finite() {
        return u32::MAX;
    }
    let mut r = guess.max(1.0) as i32;
    // Correct the rounding of the logarithm at exact powers of L.
    while r > 1 && dist > l.powi(-r + 1) {
        r -= 1;
    }
    while dist <= l.powi(-r) {
        r += 1;
    }
    r as u32
}

/// Free returns of the orbit of `c₀ = f(c_owner)` to `C_radius` up to time `n`,
/// with bound periods measured against the binding critical orbit.
pub fn build_itinerary<T: Scalar>(
    map: &CircleMap<T>,
    orbits: &CriticalOrbits<T>,
    owner: usize,
    n: usize,
    radius: T,
) -> Result<Itinerary> {
    let rec = orbits.records.get(owner).ok_or(Error::EmptySet)?;
    if rec.len() < n + 1 {
        return Err(match rec.halted {
            Some(h) => Error::HaltedOrbit { step: h.step, reason: h.reason },
            None => Error::TooShort { len: rec.steps(), need: n },
        });
    }
    let pmax = orbits.horizon;
    let mut events = Vec::new();
    let mut j = 0;
    while j <= n {
        if rec.d_c[j] >= radius {
            j += 1;
            continue;
        }
        let x = rec.points[j];
        let (binding, dist) = nearest_in_set(x, map.critical())?;
        let (p, saturated, outside_window) =
            match bound_period(map, &orbits.records[binding], &orbits.windows[binding], x, pmax) {
                Ok(bp) => (bp.p, bp.saturated, false),
                Err(Error::OutsideWindow { .. }) => (1, false, true),
                Err(e) => return Err(e),
            };
        events.push(ReturnEvent {
            time: j,
            binding,
            r: depth_index(dist, map.l()),
            p,
            deep: false,
            saturated,
            outside_window,
            distance: dist.as_f64(),
        });
        j += p;
    }
    Ok(Itinerary { owner, horizon: n, radius: radius.as_f64(), events })
}

/// Flags deep returns: `ν` is deep iff for every earlier free return `i`,
/// `Σ_{free j ∈ (i, ν]} 2 log_L d_C(c_j) ≤ log_L d_C(c_i)`.
///
/// Runs in linear time: with prefix sums `P`, the condition reads
/// `2 P_k ≤ min_{m<k} (ℓ_m + 2 P_m)` with `P` inclusive.
pub fn detect_deep_returns<T: Scalar>(itin: &Itinerary, rec: &OrbitRecord<T>, l: T) -> Itinerary {
    let ln_l = l.ln().as_f64();
    let mut out = itin.clone();
    let mut prefix = 0.0f64;
    let mut best = f64::INFINITY;
    for ev in &mut out.events {
        let ell = rec.d_c[ev.time].ln().as_f64() / ln_l;
        prefix += ell;
        ev.deep = 2.0 * prefix <= best;
        best = best.min(ell + 2.0 * prefix);
    }
    out
}

/// Itinerary at radius `radius` with deep flags, recomputing the critical orbits.
pub fn itinerary_for(
    map: &CircleMap<f64>,
    profile: &ConstantsProfile,
    owner: usize,
    n: usize,
    radius: ReturnRadius,
) -> Result<Itinerary> {
    let orbits = CriticalOrbits::compute(map, n + 1)?;
    let itin = build_itinerary(map, &orbits, owner, n, radius.value(profile, map.l()))?;
    Ok(detect_deep_returns(&itin, &orbits.records[owner], map.l()))
}

#[derive(Debug, Clone, Serialize)]
pub struct RecoveryReport {
    pub time: usize,
    pub p: usize,
    pub distance: f64,
    /// `(2/λ) log_L |c − x|⁻¹`.
    pub p_cap: f64,
    pub cap_ok: bool,
    pub log_jp: f64,
    /// `(−1 + 16α/λ) ln|c − x|`.
    pub bound_distance: f64,
    /// `(λ/3) p ln L`.
    pub bound_growth: f64,
    pub growth_ok: bool,
    pub pass: bool,
}

/// Checks the bound-period cap and the derivative recovery over the bound period
/// of a free return.
pub fn recovery_check(
    map: &CircleMap<f64>,
    profile: &ConstantsProfile,
    orbits: &CriticalOrbits<f64>,
    owner: usize,
    event: &ReturnEvent,
) -> Result<RecoveryReport> {
    if event.saturated || event.outside_window {
        return Err(Error::Inapplicable("event has no resolved bound period".into()));
    }
    let l = map.l();
    let delta = profile.delta(l);
    if event.distance >= delta {
        return Err(Error::Inapplicable("return is not inside C_delta".into()));
    }
    let horizon = orbits.horizon.saturating_sub(1);
    let binding = &orbits.records[event.binding];
    let conditions_hold = binding.len() > horizon + 1
        && check_g1(binding, profile, l, horizon)?.is_none()
        && check_g2(binding, profile, l, horizon)?.is_none()
        && check_g3(binding, profile, l, horizon)?.is_none();
    if !conditions_hold {
        return Err(Error::Inapplicable("binding orbit violates (G1)-(G3)".into()));
    }
    let x = orbits.records[owner].points[event.time];
    let seg = iterate_orbit(map, x, event.p);
    if let Some(h) = seg.halted {
        return Err(Error::HaltedOrbit { step: h.step, reason: h.reason });
    }
    let ln_l = l.ln();
    let ln_eps = event.distance.ln();
    let log_jp = seg.log_deriv_prefix[event.p];
    let p_cap = 2.0 / profile.lambda * (-ln_eps / ln_l);
    let bound_distance = (-1.0 + 16.0 * profile.alpha / profile.lambda) * ln_eps;
    let bound_growth = profile.lambda / 3.0 * event.p as f64 * ln_l;
    let cap_ok = event.p as f64 <= p_cap;
    let growth_ok = log_jp >= bound_distance && log_jp >= bound_growth;
    Ok(RecoveryReport {
        time: event.time,
        p: event.p,
        distance: event.distance,
        p_cap,
        cap_ok,
        log_jp,
        bound_distance,
        bound_growth,
        growth_ok,
        pass: cap_ok && growth_ok,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ApproachReport {
    pub checked: usize,
    /// Smallest `K` with `d_C(c_i) ≥ K⁻¹ σ L^{−αi}` on the record (times safety 1.05).
    pub k_fitted: f64,
    /// Indices violating `J^i(c₀) D_{i+1}(c₀) ≥ L^{−1−7αi}`.
    pub window_violations: Vec<usize>,
}

pub fn approach_rate_check(
    rec: &OrbitRecord<f64>,
    windows: &WindowTable<f64>,
    profile: &ConstantsProfile,
    l: f64,
    n: usize,
) -> ApproachReport {
    let ln_l = l.ln();
    let ln_sigma = profile.sigma(l).ln();
    let top = n.min(rec.len() - 1).min(windows.valid_to.saturating_sub(1));
    let mut k = 1.0f64;
    let mut bad = Vec::new();
    for i in 0..=top {
        let need = ln_sigma - profile.alpha * i as f64 * ln_l - rec.d_c[i].ln();
        k = k.max(need.exp());
        let lhs = rec.log_deriv_prefix[i] + windows.log_d_n(i + 1).unwrap();
        if lhs < (-1.0 - 7.0 * profile.alpha * i as f64) * ln_l {
            bad.push(i);
        }
    }
    ApproachReport { checked: top + 1, k_fitted: k * 1.05, window_violations: bad }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeepReturnReport {
    pub nu: usize,
    /// `ln J^ν(c₀) + ln D_ν(c₀)`.
    pub lhs: f64,
    /// `½ ln d_C(c_ν)`.
    pub rhs: f64,
    pub pass: bool,
}

/// Checks `J^ν(c₀)·D_ν(c₀) ≥ √d_C(c_ν)` at a deep return `ν`.
pub fn deep_return_expansion_check<T: Scalar>(
    rec: &OrbitRecord<T>,
    windows: &WindowTable<T>,
    itin: &Itinerary,
    nu: usize,
) -> Result<DeepReturnReport> {
    match itin.event_at(nu) {
        Some(e) if e.deep => {}
        _ => return Err(Error::NotDeep(nu)),
    }
    if nu == 0 {
        return Err(Error::Inapplicable("D_0 is undefined".into()));
    }
    let lhs = log_jacobian(rec, 0, nu)? + windows.log_d_n(nu).ok_or(Error::TooShort { len: rec.len(), need: nu })?;
    let rhs = T::lit(0.5) * rec.d_c[nu].ln();
    Ok(DeepReturnReport { nu, lhs: lhs.as_f64(), rhs: rhs.as_f64(), pass: lhs >= rhs })
}

#[derive(Debug, Clone, Serialize)]
pub struct ChainReport {
    pub critical_index: usize,
    /// `ln(L⁻¹ D_N)`, `ln δ²`, `ln δ₀²`, `ln(L⁻¹ D_1)`.
    pub terms: [f64; 4],
    pub holds: bool,
}

/// The chain `L⁻¹D_N(c₀) < δ² < δ₀² < L⁻¹D_1(c₀)` for every critical point.
pub fn return_chain(orbits: &CriticalOrbits<f64>, profile: &ConstantsProfile, l: f64) -> Result<Vec<ChainReport>> {
    let ln_l = l.ln();
    let mut out = Vec::new();
    for (idx, w) in orbits.windows.iter().enumerate() {
        let dn = w.log_d_n(profile.n).ok_or(Error::TooShort { len: w.valid_to, need: profile.n })?;
        let d1 = w.log_d_n(1).ok_or(Error::TooShort { len: w.valid_to, need: 1 })?;
        let terms = [dn - ln_l, 2.0 * profile.delta(l).ln(), 2.0 * profile.delta0(l).ln(), d1 - ln_l];
        let holds = terms.windows(2).all(|t| t[0] < t[1]);
        out.push(ChainReport { critical_index: idx, terms, holds });
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Delta0Report {
    pub binding: usize,
    pub distance: f64,
    pub p: usize,
    pub saturated: bool,
    pub log_jp: f64,
    /// Smallest `K` for `J^p(y) ≥ K⁻¹ L^{−1/2} σ² |c − y|⁻¹`.
    pub k_needed: f64,
    /// `(p/300) ln L`.
    pub bound_growth: f64,
    pub growth_ok: bool,
    pub p_within_n: bool,
    pub pass: bool,
}

/// Bound period and recovery for `y ∈ C_{δ₀} \ C_δ` under `Δ_N` parameters.
pub fn delta0_structure_check(
    map: &CircleMap<f64>,
    profile: &ConstantsProfile,
    orbits: &CriticalOrbits<f64>,
    y: f64,
) -> Result<Delta0Report> {
    let l = map.l();
    if !check_delta_n(orbits, profile, l).iter().all(|r| r.ok) {
        return Err(Error::Inapplicable("parameter is not in Delta_N".into()));
    }
    let (binding, dist) = nearest_in_set(y, map.critical())?;
    if !(dist < profile.delta0(l) && dist >= profile.delta(l)) {
        return Err(Error::Inapplicable("point is not in C_delta0 minus C_delta".into()));
    }
    let pmax = orbits.horizon;
    let bp = match bound_period(map, &orbits.records[binding], &orbits.windows[binding], y, pmax) {
        Ok(bp) => bp,
        Err(Error::OutsideWindow { .. }) => BoundPeriod { p: 1, saturated: false },
        Err(e) => return Err(e),
    };
    let seg = iterate_orbit(map, y, bp.p);
    if let Some(h) = seg.halted {
        return Err(Error::HaltedOrbit { step: h.step, reason: h.reason });
    }
    let ln_l = l.ln();
    let log_jp = seg.log_deriv_prefix[bp.p];
    let ln_rhs_b = -0.5 * ln_l + 2.0 * profile.sigma(l).ln() - dist.ln();
    let k_needed = (ln_rhs_b - log_jp).exp().max(1.0);
    let bound_growth = bp.p as f64 / 300.0 * ln_l;
    let growth_ok = log_jp >= bound_growth;
    let p_within_n = !bp.saturated && bp.p <= profile.n;
    Ok(Delta0Report {
        binding,
        distance: dist,
        p: bp.p,
        saturated: bp.saturated,
        log_jp,
        k_needed,
        bound_growth,
        growth_ok,
        p_within_n,
        pass: growth_ok && p_within_n,
    })
}

/// JSON dump: `{"owner", "horizon", "radius", "events": [{time, binding, r, p, deep, …}]}`.
pub fn write_itinerary_json<W: std::io::Write>(itin: &Itinerary, out: W) -> Result<()> {
    serde_json::to_writer_pretty(out, itin)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phi::PhiSpec;

    fn sine_map(a: f64, l: f64) -> CircleMap<f64> {
        CircleMap::new(PhiSpec::sin2pi(), a, l).unwrap()
    }

    /// Point `x` near `c` (on the side `sign`) with `|f(x) − c₀| = target`, by bisection.
    fn point_with_image_distance(map: &CircleMap<f64>, idx: usize, target: f64, sign: f64) -> f64 {
        let c = map.critical().points[idx];
        let c0 = map.f_eval(c).unwrap();
        let g = |e: f64| circle_dist(map.f_eval(c + sign * e).unwrap(), c0) - target;
        let (mut lo, mut hi) = (0.0, 1e-2);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid
            } else {
                hi = mid
            }
        }
        c + sign * 0.5 * (lo + hi)
    }

    #[test]
    fn first_annulus_gives_p_two() {
        let map = sine_map(0.41, 1e4);
        let orbits = CriticalOrbits::compute(&map, 50).unwrap();
        let d1 = orbits.windows[0].log_d_n(1).unwrap().exp();
        let x = point_with_image_distance(&map, 0, d1 * 0.999, 1.0);
        let bp = bound_period(&map, &orbits.records[0], &orbits.windows[0], x, 50).unwrap();
        assert_eq!(bp, BoundPeriod { p: 2, saturated: false });
        let far = point_with_image_distance(&map, 0, d1 * 1.5, -1.0);
        assert!(matches!(
            bound_period(&map, &orbits.records[0], &orbits.windows[0], far, 50),
            Err(Error::OutsideWindow { .. })
        ));
    }

    #[test]
    fn annuli_are_nested() {
        let map = sine_map(0.41, 1e4);
        let orbits = CriticalOrbits::compute(&map, 40).unwrap();
        let c = map.critical().points[1];
        let mut prev = usize::MAX;
        for k in 3..40 {
            let eps = 2f64.powf(-(k as f64) / 2.0) * 1e-3;
            if let Ok(bp) = bound_period(&map, &orbits.records[1], &orbits.windows[1], c + eps, 40) {
                if prev != usize::MAX {
                    assert!(bp.p >= prev);
                }
                prev = bp.p;
            }
        }
        assert_ne!(prev, usize::MAX);
    }

    fn synthetic(dcs: &[f64], l: f64) -> (Itinerary, OrbitRecord<f64>) {
        let map = sine_map(0.3, l);
        let mut rec = iterate_orbit(&map, 0.1, dcs.len());
        rec.d_c = dcs.to_vec();
        let events = (0..dcs.len())
            .map(|t| ReturnEvent {
                time: t,
                binding: 0,
                r: 1,
                p: 1,
                deep: false,
                saturated: false,
                outside_window: false,
                distance: dcs[t],
            })
            .collect();
        (Itinerary { owner: 0, horizon: dcs.len(), radius: 1.0, events }, rec)
    }

    #[test]
    fn first_return_is_deep() {
        let (it, rec) = synthetic(&[1e-3], 10.0);
        assert!(detect_deep_returns(&it, &rec, 10.0).events[0].deep);
    }

    #[test]
    fn shallow_second_return() {
        let l = 10.0f64;
        let (it, rec) = synthetic(&[l.powi(-5), l.powi(-2)], l);
        let out = detect_deep_returns(&it, &rec, l);
        assert!(out.events[0].deep);
        assert!(!out.events[1].deep);
        let (it, rec) = synthetic(&[l.powi(-2), l.powi(-5)], l);
        assert!(detect_deep_returns(&it, &rec, l).events[1].deep);
    }

    fn deep_brute_force(ell: &[f64]) -> Vec<bool> {
        (0..ell.len())
            .map(|nu| (0..nu).all(|i| 2.0 * ell[i + 1..=nu].iter().sum::<f64>() <= ell[i]))
            .collect()
    }

    proptest::proptest! {
        #[test]
        fn deep_flags_match_brute_force(exps in proptest::collection::vec(0.0f64..12.0, 1..20)) {
            let l = 10.0f64;
            let dcs: Vec<f64> = exps.iter().map(|e| l.powf(-e)).collect();
            let (it, rec) = synthetic(&dcs, l);
            let ell: Vec<f64> = rec.d_c.iter().map(|d| d.ln() / l.ln()).collect();
            let got: Vec<bool> = detect_deep_returns(&it, &rec, l).events.iter().map(|e| e.deep).collect();
            let want = deep_brute_force(&ell);
            for k in 0..got.len() {
                // Ties within rounding may go either way.
                let margin = (0..k).map(|i| (2.0 * ell[i + 1..=k].iter().sum::<f64>() - ell[i]).abs()).fold(f64::INFINITY, f64::min);
                if margin > 1e-9 {
                    proptest::prop_assert_eq!(got[k], want[k], "k={}", k);
                }
            }
        }
    }

    #[test]
    fn depth_index_brackets_distance() {
        let l = 100.0f64;
        assert_eq!(depth_index(0.5, l), 1);
        assert_eq!(depth_index(1e-2, l), 2);
        assert_eq!(depth_index(0.9e-2, l), 2);
        assert_eq!(depth_index(1.1e-4, l), 2);
    }

    #[test]
    fn empty_itinerary_when_orbit_avoids_neighbourhood() {
        let map = sine_map(0.3, 1e4);
        let orbits = CriticalOrbits::compute(&map, 30).unwrap();
        let it = build_itinerary(&map, &orbits, 0, 29, 1e-300).unwrap();
        assert!(it.events.is_empty());
    }

    #[test]
    fn itineraries_interleave() {
        for k in 0..20 {
            let map = sine_map(k as f64 / 20.0 + 0.013, 1e3);
            let orbits = CriticalOrbits::compute(&map, 301).unwrap();
            if orbits.records.iter().any(|r| r.halted.is_some()) {
                continue;
            }
            for owner in 0..2 {
                let it = build_itinerary(&map, &orbits, owner, 300, 0.05).unwrap();
                assert!(it.is_interleaved());
                for w in it.events.windows(2) {
                    for t in w[0].time + 1..w[0].time + w[0].p {
                        assert!(t < w[1].time);
                    }
                }
            }
        }
    }

    #[test]
    fn not_deep_is_reported() {
        let (it, rec) = synthetic(&[1e-3, 1e-1], 10.0);
        let it = detect_deep_returns(&it, &rec, 10.0);
        let w = WindowTable::build(&rec, 10.0);
        assert!(matches!(deep_return_expansion_check(&rec, &w, &it, 1), Err(Error::NotDeep(1))));
        assert!(matches!(deep_return_expansion_check(&rec, &w, &it, 5), Err(Error::NotDeep(5))));
    }

    #[test]
    fn itinerary_json_fields() {
        let (it, _) = synthetic(&[1e-3], 10.0);
        let mut buf = Vec::new();
        write_itinerary_json(&it, &mut buf).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&buf).unwrap();
        let ev = &v["events"][0];
        for key in ["time", "binding", "r", "p", "deep"] {
            assert!(ev.get(key).is_some(), "{key}");
        }
    }
}
