//! Good-parameter conditions along critical orbits and parameter-space derivatives.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::map::{circle_dist, CircleMap};
use crate::orbit::{fmt17, iterate_orbit, lyapunov_slope, CriticalOrbits, Halt, OrbitRecord};
use crate::profile::ConstantsProfile;
use crate::scalar::{Scalar, SignedLog};
use crate::structure::{build_itinerary, detect_deep_returns, Itinerary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct DeltaNResult {
    pub ok: bool,
    /// First `i` with `c_i ∈ C_σ ∪ S_σ`, or the halt step.
    pub witness: Option<usize>,
}

fn need_points<T: Scalar>(rec: &OrbitRecord<T>, need: usize) -> Result<()> {
    if rec.len() >= need {
        return Ok(());
    }
    Err(match rec.halted {
        Some(h) => Error::HaltedOrbit { step: h.step, reason: h.reason },
        None => Error::TooShort { len: rec.steps(), need: need.saturating_sub(1) },
    })
}

/// `Δ_N` test for one critical orbit: `c_i ∉ C_σ ∪ S_σ` for `0 ≤ i ≤ N`.
pub fn delta_n_for<T: Scalar>(rec: &OrbitRecord<T>, profile: &ConstantsProfile, l: T) -> DeltaNResult {
    let sigma = profile.sigma(l);
    let top = profile.n.min(rec.len().saturating_sub(1));
    for i in 0..=top {
        if rec.d_c[i] < sigma || rec.d_s[i] < sigma {
            return DeltaNResult { ok: false, witness: Some(i) };
        }
    }
    if rec.len() <= profile.n {
        let step = rec.halted.map_or(rec.len(), |h| h.step);
        return DeltaNResult { ok: false, witness: Some(step) };
    }
    DeltaNResult { ok: true, witness: None }
}

/// `Δ_N` per critical point.
pub fn check_delta_n<T: Scalar>(orbits: &CriticalOrbits<T>, profile: &ConstantsProfile, l: T) -> Vec<DeltaNResult> {
    orbits.records.iter().map(|r| delta_n_for(r, profile, l)).collect()
}

/// First `j ≤ n+1` with `J^{j−i}(c_i) < L·min(σ, L^{−αi})` for some `i < j`.
///
/// Exact and linear: with `P` the log-derivative prefix, a violation at `j`
/// means `P_j < max_{i<j} (P_i + ln L + min(ln σ, −αi ln L))`.
pub fn check_g1<T: Scalar>(rec: &OrbitRecord<T>, profile: &ConstantsProfile, l: T, n: usize) -> Result<Option<usize>> {
    need_points(rec, n + 2)?;
    let ln_l = l.ln().as_f64();
    let ln_sigma = profile.sigma(l).ln().as_f64();
    let prefix = &rec.log_deriv_prefix;
    let mut best = f64::NEG_INFINITY;
    for j in 0..=n + 1 {
        if j > 0 && prefix[j].as_f64() < best {
            return Ok(Some(j));
        }
        let floor = ln_sigma.min(-profile.alpha * j as f64 * ln_l);
        best = best.max(prefix[j].as_f64() + ln_l + floor);
    }
    Ok(None)
}

/// Reference pair scan for [`check_g1`].
pub fn check_g1_pairs<T: Scalar>(rec: &OrbitRecord<T>, profile: &ConstantsProfile, l: T, n: usize) -> Result<Option<usize>> {
    need_points(rec, n + 2)?;
    let ln_l = l.ln().as_f64();
    let ln_sigma = profile.sigma(l).ln().as_f64();
    let prefix = &rec.log_deriv_prefix;
    for j in 1..=n + 1 {
        for i in 0..j {
            let rhs = ln_l + ln_sigma.min(-profile.alpha * i as f64 * ln_l);
            if (prefix[j] - prefix[i]).as_f64() < rhs {
                return Ok(Some(j));
            }
        }
    }
    Ok(None)
}

/// First `0 < i ≤ n+1` with `J^i(c₀) < L^{λi}`.
pub fn check_g2<T: Scalar>(rec: &OrbitRecord<T>, profile: &ConstantsProfile, l: T, n: usize) -> Result<Option<usize>> {
    need_points(rec, n + 2)?;
    let ln_l = l.ln().as_f64();
    Ok((1..=n + 1).find(|&i| rec.log_deriv_prefix[i].as_f64() < profile.lambda * i as f64 * ln_l))
}

/// First `N ≤ i ≤ n` with `d_S(c_i) < L^{−4αi}`.
pub fn check_g3<T: Scalar>(rec: &OrbitRecord<T>, profile: &ConstantsProfile, l: T, n: usize) -> Result<Option<usize>> {
    need_points(rec, n + 1)?;
    let ln_l = l.ln().as_f64();
    Ok((profile.n..=n).find(|&i| rec.d_s[i].ln().as_f64() < -4.0 * profile.alpha * i as f64 * ln_l))
}

/// First `j ∈ [N, n]` where the sum of `log_L d_C` over deep returns up to `j`
/// drops below `−λαj/20`.
pub fn check_r<T: Scalar>(itin: &Itinerary, rec: &OrbitRecord<T>, profile: &ConstantsProfile, l: T, n: usize) -> Option<usize> {
    let ln_l = l.ln().as_f64();
    let mut deep = itin.events.iter().filter(|e| e.deep).peekable();
    let mut sum = 0.0f64;
    for j in 0..=n {
        while let Some(e) = deep.next_if(|e| e.time <= j) {
            sum += rec.d_c[e.time].ln().as_f64() / ln_l;
        }
        if j >= profile.n && sum < -profile.lambda * profile.alpha * j as f64 / 20.0 {
            return Some(j);
        }
    }
    None
}

#[derive(Debug, Clone, Serialize)]
pub struct CriticalConditions {
    pub critical_index: usize,
    #[serde(rename = "deltaN_ok")]
    pub delta_n_ok: bool,
    #[serde(rename = "deltaN_witness")]
    pub delta_n_witness: Option<usize>,
    pub g1_fail: Option<usize>,
    pub g2_fail: Option<usize>,
    pub g3_fail: Option<usize>,
    pub r_fail: Option<usize>,
    pub halted: Option<Halt>,
}

impl CriticalConditions {
    /// First step `j` at which the parameter leaves `Δ_j` through this orbit.
    pub fn exclusion_step(&self, n_const: usize) -> Option<usize> {
        let late = |s: Option<usize>| s.map(|j| j.max(n_const + 1));
        let halt = self.halted.map(|h| h.step.max(1));
        [self.delta_n_witness, late(self.r_fail), late(self.g3_fail), halt].into_iter().flatten().min()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub a: f64,
    #[serde(rename = "L")]
    pub l: f64,
    pub horizon: usize,
    pub per_critical: Vec<CriticalConditions>,
}

impl ConditionReport {
    pub fn delta_n_ok(&self) -> bool {
        self.per_critical.iter().all(|c| c.delta_n_ok)
    }

    /// Earliest exclusion over all critical points.
    pub fn exclusion_step(&self, n_const: usize) -> Option<usize> {
        self.per_critical.iter().filter_map(|c| c.exclusion_step(n_const)).min()
    }

    pub fn first(&self, pick: impl Fn(&CriticalConditions) -> Option<usize>) -> Option<usize> {
        self.per_critical.iter().filter_map(pick).min()
    }

    pub fn g1_g2_g3_pass(&self) -> bool {
        self.per_critical
            .iter()
            .all(|c| c.g1_fail.is_none() && c.g2_fail.is_none() && c.g3_fail.is_none() && c.halted.is_none())
    }
}

/// Evaluates every condition to horizon `n` from precomputed orbits of length `≥ n+2`.
pub fn evaluate_with_orbits<T: Scalar>(
    map: &CircleMap<T>,
    orbits: &CriticalOrbits<T>,
    profile: &ConstantsProfile,
    n: usize,
) -> Result<ConditionReport> {
    let l = map.l();
    let delta = profile.delta(l);
    let mut per = Vec::with_capacity(orbits.records.len());
    for (idx, rec) in orbits.records.iter().enumerate() {
        let dn = delta_n_for(rec, profile, l);
        // A halted orbit is checked on the prefix it has.
        let avail = rec.len().saturating_sub(1);
        let n_r = n.min(avail);
        let n_g = n.min(avail.saturating_sub(1));
        let ok_or_none = |r: Result<Option<usize>>| r.ok().flatten();
        let (g1, g2) = if avail >= 1 {
            (ok_or_none(check_g1(rec, profile, l, n_g)), ok_or_none(check_g2(rec, profile, l, n_g)))
        } else {
            (None, None)
        };
        let g3 = ok_or_none(check_g3(rec, profile, l, n_r));
        let itin = build_itinerary(map, orbits, idx, n_r, delta)?;
        let itin = detect_deep_returns(&itin, rec, l);
        let r = check_r(&itin, rec, profile, l, n_r);
        let halted = rec.halted.filter(|h| h.step <= n + 1);
        per.push(CriticalConditions {
            critical_index: idx,
            delta_n_ok: dn.ok,
            delta_n_witness: dn.witness,
            g1_fail: g1,
            g2_fail: g2,
            g3_fail: g3,
            r_fail: r,
            halted,
        });
    }
    Ok(ConditionReport { a: map.a().as_f64(), l: l.as_f64(), horizon: n, per_critical: per })
}

pub fn evaluate_conditions<T: Scalar>(map: &CircleMap<T>, profile: &ConstantsProfile, n: usize) -> Result<ConditionReport> {
    let orbits = CriticalOrbits::compute(map, (n + 1).max(profile.n))?;
    evaluate_with_orbits(map, &orbits, profile, n)
}

/// CSV columns: a, deltaN, g1_fail, g2_fail, g3_fail, r_fail, lyapunov_slope.
pub fn write_condition_csv<W: Write>(rows: &[(ConditionReport, Option<f64>)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["a", "deltaN", "g1_fail", "g2_fail", "g3_fail", "r_fail", "lyapunov_slope"])?;
    let opt = |v: Option<usize>| v.map_or_else(String::new, |s| s.to_string());
    for (rep, slope) in rows {
        w.write_record([
            fmt17(rep.a),
            (rep.delta_n_ok() as u8).to_string(),
            opt(rep.first(|c| c.g1_fail)),
            opt(rep.first(|c| c.g2_fail)),
            opt(rep.first(|c| c.g3_fail)),
            opt(rep.first(|c| c.r_fail)),
            slope.map_or_else(String::new, fmt17),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Lyapunov slope of the first critical orbit, if it runs long enough.
pub fn critical_lyapunov<T: Scalar>(orbits: &CriticalOrbits<T>) -> Option<f64> {
    orbits.records.first().and_then(|r| lyapunov_slope(r).ok())
}

#[derive(Debug, Clone, Serialize)]
pub struct TauRecord<T> {
    pub owner: usize,
    pub tau: Vec<SignedLog<T>>,
}

/// `τ_k = ∂_a c_k(a)` by `τ_0 = 1`, `τ_k = 1 + f'(c_{k−1}) τ_{k−1}`.
pub fn tau_from_record<T: Scalar>(map: &CircleMap<T>, rec: &OrbitRecord<T>, owner: usize, n: usize) -> Result<TauRecord<T>> {
    need_points(rec, n + 1)?;
    let mut tau = Vec::with_capacity(n + 1);
    let mut t = SignedLog::one();
    tau.push(t);
    for k in 1..=n {
        let (ld, sign) = map.f_log_deriv(rec.points[k - 1])?;
        t = t.mul(ld, sign).one_plus();
        tau.push(t);
    }
    Ok(TauRecord { owner, tau })
}

pub fn tau_orbit<T: Scalar>(map: &CircleMap<T>, c: usize, n: usize) -> Result<TauRecord<T>> {
    let rec = iterate_orbit(map, map.critical_value(c)?, n);
    tau_from_record(map, &rec, c, n)
}

/// `c_k(a) = f_a^{k+1}(c)` without derivative bookkeeping.
pub fn critical_point_image(map: &CircleMap<f64>, c: usize, k: usize) -> Result<f64> {
    let mut x = map.critical().points.get(c).copied().ok_or(Error::EmptySet)?;
    for _ in 0..=k {
        x = map.f_eval(x)?;
    }
    Ok(x)
}

/// Central difference `(c_k(a+h) − c_k(a−h)) / 2h`, unwrapped on the circle.
pub fn tau_finite_difference(map: &CircleMap<f64>, c: usize, k: usize, h: f64) -> Result<f64> {
    let plus = critical_point_image(&map.with_a(map.a() + h), c, k)?;
    let minus = critical_point_image(&map.with_a(map.a() - h), c, k)?;
    Ok((plus - minus).wrap_signed() / (2.0 * h))
}

#[derive(Debug, Clone, Serialize)]
pub struct TransversalityReport {
    pub owner: usize,
    pub n: usize,
    /// `ln(|τ_k| / J^k(c₀))` range over `1 ≤ k ≤ n`.
    pub min_log_ratio: f64,
    pub max_log_ratio: f64,
    pub worst_k: usize,
    pub pass: bool,
}

fn r_passes(map: &CircleMap<f64>, orbits: &CriticalOrbits<f64>, profile: &ConstantsProfile, n: usize) -> Result<bool> {
    let l = map.l();
    if !check_delta_n(orbits, profile, l).iter().all(|d| d.ok) {
        return Ok(false);
    }
    for (idx, rec) in orbits.records.iter().enumerate() {
        if rec.len() < n + 1 {
            return Ok(false);
        }
        let itin = detect_deep_returns(&build_itinerary(map, orbits, idx, n, profile.delta(l))?, rec, l);
        if check_r(&itin, rec, profile, l, n).is_some() {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Ratios `|τ_k| / J^k(c₀)` for `k ≤ n`; requires `Δ_N` and `(R)` to `n−1`.
pub fn transversality_report(
    map: &CircleMap<f64>,
    profile: &ConstantsProfile,
    c: usize,
    n: usize,
) -> Result<TransversalityReport> {
    let orbits = CriticalOrbits::compute(map, (n + 1).max(profile.n))?;
    if !r_passes(map, &orbits, profile, n.saturating_sub(1))? {
        return Err(Error::Inapplicable("(R) does not hold to n-1".into()));
    }
    transversality_unchecked(map, &orbits.records[c], c, n)
}

/// The ratio table without verifying the hypotheses.
pub fn transversality_unchecked(
    map: &CircleMap<f64>,
    rec: &OrbitRecord<f64>,
    c: usize,
    n: usize,
) -> Result<TransversalityReport> {
    let tau = tau_from_record(map, rec, c, n)?;
    let (mut lo, mut hi, mut worst, mut worst_dev) = (f64::INFINITY, f64::NEG_INFINITY, 0, -1.0);
    for k in 1..=n {
        let r = tau.tau[k].log_abs - rec.log_deriv_prefix[k];
        lo = lo.min(r);
        hi = hi.max(r);
        if r.abs() > worst_dev {
            worst_dev = r.abs();
            worst = k;
        }
    }
    if n == 0 {
        lo = 0.0;
        hi = 0.0;
    }
    let ln2 = std::f64::consts::LN_2;
    Ok(TransversalityReport {
        owner: c,
        n,
        min_log_ratio: lo,
        max_log_ratio: hi,
        worst_k: worst,
        pass: lo >= -ln2 && hi <= ln2,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparabilityReport {
    pub owner: usize,
    pub n: usize,
    pub samples: usize,
    pub halted_samples: usize,
    /// `ln(|τ_k(a)| / |τ_k(a_*)|)` range over the samples and `k ≤ n`.
    pub min_log_ratio: f64,
    pub max_log_ratio: f64,
    pub pass: bool,
}

/// Compares `τ_k(a)` to `τ_k(a_*)` for `a` sampled in `[a_* − D_n, a_* + D_n]`.
pub fn window_comparability<R: Rng>(
    map: &CircleMap<f64>,
    c: usize,
    n: usize,
    samples: usize,
    rng: &mut R,
) -> Result<ComparabilityReport> {
    let rec = iterate_orbit(map, map.critical_value(c)?, n);
    let star = tau_from_record(map, &rec, c, n)?;
    let half = crate::orbit::compute_window(&rec, map.l(), n.max(1))?.exp();
    let (mut lo, mut hi, mut halted) = (f64::INFINITY, f64::NEG_INFINITY, 0);
    for s in 0..samples {
        let off = match s {
            0 => half,
            1 => -half,
            _ => rng.gen_range(-half..=half),
        };
        let m = map.with_a(map.a() + off);
        let Ok(t) = tau_orbit(&m, c, n) else {
            halted += 1;
            continue;
        };
        for k in 1..=n {
            let r = t.tau[k].log_abs - star.tau[k].log_abs;
            lo = lo.min(r);
            hi = hi.max(r);
        }
    }
    if n == 0 || halted == samples {
        lo = 0.0;
        hi = 0.0;
    }
    let ln2 = std::f64::consts::LN_2;
    Ok(ComparabilityReport {
        owner: c,
        n,
        samples,
        halted_samples: halted,
        min_log_ratio: lo,
        max_log_ratio: hi,
        pass: lo > -ln2 && hi <= ln2,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct ImageReport {
    pub owner: usize,
    pub n: usize,
    /// `D_n(c₀)` at `a_*`.
    pub half_width: f64,
    pub tau_log_abs: f64,
    /// Image length of `γ_n` on the parameter window; a lower bound when `wrapped`.
    pub length: f64,
    /// `|τ_n| · 2D_n`.
    pub first_order: f64,
    pub wrapped: bool,
    pub bound: f64,
    pub pass: bool,
}

/// `|γ_n(a_* + h) − γ_n(a_* − h)|` on the circle.
pub fn endpoint_image(map: &CircleMap<f64>, c: usize, n: usize, half: f64) -> Result<f64> {
    let lo = critical_point_image(&map.with_a(map.a() - half), c, n)?;
    let hi = critical_point_image(&map.with_a(map.a() + half), c, n)?;
    Ok(circle_dist(hi, lo))
}

/// Length of `γ_n(I_n(a_*, c))` against `L^{1/7}σ` (`n ≤ N`) or `L^{−3αn}` (`n > N`).
pub fn window_image_bound(map: &CircleMap<f64>, profile: &ConstantsProfile, c: usize, n: usize) -> Result<ImageReport> {
    if n == 0 {
        return Err(Error::Inapplicable("window I_0 is undefined".into()));
    }
    let l = map.l();
    let rec = iterate_orbit(map, map.critical_value(c)?, n);
    let tau = tau_from_record(map, &rec, c, n)?;
    let half = crate::orbit::compute_window(&rec, l, n)?.exp();
    let tn = tau.tau[n];
    let first_order = (tn.log_abs + (2.0 * half).ln()).exp();
    let bound = if n <= profile.n {
        l.powf(1.0 / 7.0) * profile.sigma(l)
    } else {
        l.powf(-3.0 * profile.alpha * n as f64)
    };
    let wrapped = first_order > 0.25;
    let length = if wrapped {
        // Comparability keeps |τ| ≥ |τ_n(a_*)|/2 across the window.
        0.25f64.max(0.5 * first_order)
    } else {
        endpoint_image(map, c, n, half).unwrap_or(first_order)
    };
    Ok(ImageReport {
        owner: c,
        n,
        half_width: half,
        tau_log_abs: tn.log_abs,
        length,
        first_order,
        wrapped,
        bound,
        pass: length >= bound,
    })
}
