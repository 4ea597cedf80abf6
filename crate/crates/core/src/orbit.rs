//! Orbit iteration with log-space derivative bookkeeping and distortion windows.

use std::io::Write;

use rand::Rng;
use serde::Serialize;

use crate::error::{Error, HaltReason, Result};
use crate::map::{set_distance, CircleMap};
use crate::profile::ConstantsProfile;
use crate::scalar::{LogSumExp, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Halt {
    pub step: usize,
    pub reason: HaltReason,
}

/// An orbit `c_0, …, c_n` with everything needed to evaluate `J^i` and `d_i`.
///
/// `log_deriv_prefix[i] = Σ_{j<i} ln|f'(c_j)|` and
/// `log_d[i] = ln d_C(c_i) + ln d_S(c_i) − log_deriv_prefix[i]`.
/// On a halt at step `h` the record holds `c_0..c_h` and no derivative at `c_h`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrbitRecord<T> {
    pub origin: T,
    pub points: Vec<T>,
    pub log_deriv_prefix: Vec<T>,
    /// Sign of `f'(c_i)` for every point with a derivative.
    pub deriv_sign: Vec<i8>,
    pub d_c: Vec<T>,
    pub d_s: Vec<T>,
    /// Index of the nearest critical point to `c_i`.
    pub nearest_c: Vec<usize>,
    pub log_d: Vec<T>,
    pub halted: Option<Halt>,
}

impl<T: Scalar> OrbitRecord<T> {
    /// Number of points `c_0..`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Number of completed iterations.
    pub fn steps(&self) -> usize {
        self.points.len().saturating_sub(1)
    }
}

/// Iterates `n` steps from `x0`, stopping early on a singular or critical hit.
pub fn iterate_orbit<T: Scalar>(map: &CircleMap<T>, x0: T, n: usize) -> OrbitRecord<T> {
    let x0 = x0.wrap_unit();
    let mut rec = OrbitRecord {
        origin: x0,
        points: Vec::with_capacity(n + 1),
        log_deriv_prefix: Vec::with_capacity(n + 1),
        deriv_sign: Vec::with_capacity(n),
        d_c: Vec::with_capacity(n + 1),
        d_s: Vec::with_capacity(n + 1),
        nearest_c: Vec::with_capacity(n + 1),
        log_d: Vec::with_capacity(n + 1),
        halted: None,
    };
    let mut x = x0;
    let mut prefix = T::zero();
    for i in 0..=n {
        let (ic, dc) = set_distance(x, map.critical());
        let (_, ds) = set_distance(x, map.singular());
        rec.points.push(x);
        rec.log_deriv_prefix.push(prefix);
        rec.d_c.push(dc);
        rec.d_s.push(ds);
        rec.nearest_c.push(ic.unwrap_or(0));
        rec.log_d.push(dc.ln() + ds.ln() - prefix);
        if i == n {
            break;
        }
        match map.step(x) {
            Ok(s) => {
                prefix = prefix + s.log_abs_deriv;
                rec.deriv_sign.push(s.sign);
                x = s.next;
            }
            Err(reason) => {
                rec.halted = Some(Halt { step: i, reason });
                break;
            }
        }
    }
    rec
}

/// `ln J^{j-i}(c_i)` for prefix indices `0 ≤ i < j < rec.len()`.
pub fn log_jacobian<T: Scalar>(rec: &OrbitRecord<T>, i: usize, j: usize) -> Result<T> {
    let len = rec.log_deriv_prefix.len();
    if i >= j || j >= len {
        return Err(Error::IndexOutOfRange { i, j, len });
    }
    Ok(rec.log_deriv_prefix[j] - rec.log_deriv_prefix[i])
}

/// `ln D_n(c_0)` for every `n` the record supports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowTable<T> {
    /// Entry `k` holds `ln D_{k+1}`.
    log_dn: Vec<T>,
    /// Largest `n` with a defined `D_n`.
    pub valid_to: usize,
}

impl<T: Scalar> WindowTable<T> {
    pub fn build(rec: &OrbitRecord<T>, l: T) -> Self {
        let half_log_l = l.ln() * T::lit(0.5);
        let mut acc = LogSumExp::default();
        let log_dn: Vec<T> = rec
            .log_d
            .iter()
            .map(|&ld| {
                acc.push(-ld);
                -half_log_l - acc.value()
            })
            .collect();
        let valid_to = log_dn.len();
        Self { log_dn, valid_to }
    }

    /// `ln D_n`, `n ≥ 1`.
    pub fn log_d_n(&self, n: usize) -> Option<T> {
        if n == 0 {
            None
        } else {
            self.log_dn.get(n - 1).copied()
        }
    }
}

/// `ln D_n(c_0) = −½ ln L − logsumexp_{i<n}(−ln d_i)`.
pub fn compute_window<T: Scalar>(rec: &OrbitRecord<T>, l: T, n: usize) -> Result<T> {
    if n == 0 || n > rec.len() {
        return Err(match rec.halted {
            Some(h) => Error::HaltedOrbit { step: h.step, reason: h.reason },
            None => Error::TooShort { len: rec.len(), need: n },
        });
    }
    let mut acc = LogSumExp::default();
    for &ld in &rec.log_d[..n] {
        acc.push(-ld);
    }
    Ok(-(l.ln() * T::lit(0.5)) - acc.value())
}

#[derive(Debug, Clone, Serialize)]
pub struct DistortionReport {
    pub critical_index: usize,
    pub n: usize,
    pub log_window: f64,
    /// `max J^n(x)/J^n(y)` over the evaluated pairs.
    pub max_ratio: f64,
    pub pairs: usize,
    pub halted_samples: usize,
    /// Pairs whose two sample points coincide in floating point.
    pub collapsed_pairs: usize,
    pub pass: bool,
}

/// Samples `m` pairs in `[c_0 − D_n, c_0 + D_n]` and reports the largest
/// derivative ratio `J^n(x)/J^n(y)`; passes iff it is at most 2.
pub fn distortion_ratio<R: Rng>(
    map: &CircleMap<f64>,
    critical_index: usize,
    n: usize,
    m: usize,
    rng: &mut R,
) -> Result<DistortionReport> {
    let c0 = map.critical_value(critical_index)?;
    let central = iterate_orbit(map, c0, n);
    if let Some(h) = central.halted {
        return Err(Error::HaltedOrbit { step: h.step, reason: h.reason });
    }
    let log_window = compute_window(&central, map.l(), n)?;
    let radius = log_window.exp();
    let log_jn = |x: f64| {
        let rec = iterate_orbit(map, x, n);
        match rec.halted {
            None => Some(rec.log_deriv_prefix[n]),
            Some(_) => None,
        }
    };
    let mut max_log = 0.0f64;
    let (mut pairs, mut halted, mut collapsed) = (0, 0, 0);
    for _ in 0..m {
        let x = c0 + radius * (2.0 * rng.gen::<f64>() - 1.0);
        let y = c0 + radius * (2.0 * rng.gen::<f64>() - 1.0);
        if x == y {
            collapsed += 1;
        }
        match (log_jn(x), log_jn(y)) {
            (Some(a), Some(b)) => {
                pairs += 1;
                max_log = max_log.max((a - b).abs());
            }
            _ => halted += 1,
        }
    }
    let max_ratio = max_log.exp();
    Ok(DistortionReport {
        critical_index,
        n,
        log_window,
        max_ratio,
        pairs,
        halted_samples: halted,
        collapsed_pairs: collapsed,
        pass: max_ratio <= 2.0,
    })
}

/// Least-squares slope of `log_deriv_prefix` over the second half of the record.
pub fn lyapunov_slope<T: Scalar>(rec: &OrbitRecord<T>) -> Result<f64> {
    lyapunov_slope_with_discard(rec, 0.5)
}

/// Slope after discarding the leading fraction `discard` of the record.
pub fn lyapunov_slope_with_discard<T: Scalar>(rec: &OrbitRecord<T>, discard: f64) -> Result<f64> {
    const MIN_STEPS: usize = 100;
    let len = rec.log_deriv_prefix.len();
    if len <= MIN_STEPS {
        return Err(Error::TooShort { len: len.saturating_sub(1), need: MIN_STEPS });
    }
    let start = ((len as f64) * discard.clamp(0.0, 0.9)).floor() as usize;
    let ys = &rec.log_deriv_prefix[start..];
    let k = ys.len() as f64;
    let mean_x = (ys.len() - 1) as f64 / 2.0;
    let mean_y = ys.iter().map(|y| y.as_f64()).sum::<f64>() / k;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - mean_x;
        sxy += dx * (y.as_f64() - mean_y);
        sxx += dx * dx;
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, Serialize)]
pub struct OutsideExpansionReport {
    pub n: usize,
    pub log_jacobian: f64,
    /// `ln δ + 2λn ln L`.
    pub bound_free: f64,
    pub ends_in_c_delta: bool,
    /// `2λn ln L`, applicable when the segment ends in `C_δ`.
    pub bound_return: f64,
    pub pass: bool,
}

/// Checks `J^n(x₀) ≥ δ L^{2λn}` for segments staying outside `C_δ`, and
/// `J^n(x₀) ≥ L^{2λn}` when moreover `fⁿx₀ ∈ C_δ`.
pub fn outside_expansion_check(
    map: &CircleMap<f64>,
    profile: &ConstantsProfile,
    x0: f64,
    n: usize,
) -> Result<OutsideExpansionReport> {
    if n == 0 {
        return Err(Error::Inapplicable("segment length must be positive".into()));
    }
    let rec = iterate_orbit(map, x0, n);
    let delta = profile.delta(map.l());
    if let Some(i) = rec.d_c[..rec.len().min(n)].iter().position(|&dc| dc < delta) {
        return Err(Error::Inapplicable(format!("orbit enters C_delta at step {i}")));
    }
    if let Some(h) = rec.halted {
        return Err(Error::HaltedOrbit { step: h.step, reason: h.reason });
    }
    let log_j = rec.log_deriv_prefix[n];
    let ln_l = map.l().ln();
    let bound_free = delta.ln() + 2.0 * profile.lambda * n as f64 * ln_l;
    let bound_return = 2.0 * profile.lambda * n as f64 * ln_l;
    let ends_in_c_delta = rec.d_c[n] < delta;
    let pass = log_j >= bound_free && (!ends_in_c_delta || log_j >= bound_return);
    Ok(OutsideExpansionReport { n, log_jacobian: log_j, bound_free, ends_in_c_delta, bound_return, pass })
}

/// Formats with 17 significant digits, `.` as decimal separator.
pub fn fmt17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// Writes `step,point,log_deriv_prefix,dC,dS,log_d`.
pub fn write_orbit_csv<T: Scalar, W: Write>(rec: &OrbitRecord<T>, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "point", "log_deriv_prefix", "dC", "dS", "log_d"])?;
    for i in 0..rec.len() {
        w.write_record([
            i.to_string(),
            fmt17(rec.points[i].as_f64()),
            fmt17(rec.log_deriv_prefix[i].as_f64()),
            fmt17(rec.d_c[i].as_f64()),
            fmt17(rec.d_s[i].as_f64()),
            fmt17(rec.log_d[i].as_f64()),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Orbits of every critical value `c_0 = f(c)` with their window tables.
#[derive(Debug, Clone)]
pub struct CriticalOrbits<T> {
    pub records: Vec<OrbitRecord<T>>,
    pub windows: Vec<WindowTable<T>>,
    pub horizon: usize,
}

impl<T: Scalar> CriticalOrbits<T> {
    pub fn compute(map: &CircleMap<T>, horizon: usize) -> Result<Self> {
        let mut records = Vec::with_capacity(map.critical().len());
        let mut windows = Vec::with_capacity(map.critical().len());
        for idx in 0..map.critical().len() {
            let rec = iterate_orbit(map, map.critical_value(idx)?, horizon);
            windows.push(WindowTable::build(&rec, map.l()));
            records.push(rec);
        }
        Ok(Self { records, windows, horizon })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phi::PhiSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sine_map(a: f64, l: f64) -> CircleMap<f64> {
        CircleMap::new(PhiSpec::sin2pi(), a, l).unwrap()
    }

    #[test]
    fn orbit_from_singular_point_halts_immediately() {
        let rec = iterate_orbit(&sine_map(0.3, 10.0), 0.0, 10);
        assert_eq!(rec.len(), 1);
        assert_eq!(rec.halted, Some(Halt { step: 0, reason: HaltReason::SingularHit }));
    }

    #[test]
    fn single_step_from_peak() {
        let rec = iterate_orbit(&sine_map(0.3, 10.0), 0.25, 1);
        assert_eq!(rec.len(), 2);
        assert!((rec.points[1] - 0.55).abs() < 1e-15);
        assert_eq!(rec.log_deriv_prefix[0], 0.0);
        assert!(rec.log_deriv_prefix[1].abs() < 1e-12);
        assert!(rec.halted.is_none());
    }

    #[test]
    fn record_invariants() {
        let map = sine_map(0.123, 1e3);
        let rec = iterate_orbit(&map, 0.31, 200);
        for i in 0..rec.steps() {
            let (la, s) = map.f_log_deriv(rec.points[i]).unwrap();
            let step = rec.log_deriv_prefix[i + 1] - rec.log_deriv_prefix[i];
            assert!((step - la).abs() <= 1e-13 * rec.log_deriv_prefix[i + 1].abs().max(1.0));
            assert_eq!(rec.deriv_sign[i], s);
            assert_eq!(rec.points[i + 1], map.f_eval(rec.points[i]).unwrap());
        }
        for i in 0..rec.len() {
            assert_eq!(rec.log_d[i], rec.d_c[i].ln() + rec.d_s[i].ln() - rec.log_deriv_prefix[i]);
        }
        assert_eq!(rec, iterate_orbit(&map, 0.31, 200));
    }

    #[test]
    fn log_jacobian_bounds_and_additivity() {
        let rec = iterate_orbit(&sine_map(0.7, 50.0), 0.11, 30);
        assert!(matches!(log_jacobian(&rec, 3, 3), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(log_jacobian(&rec, 0, 31), Err(Error::IndexOutOfRange { .. })));
        let one = log_jacobian(&rec, 4, 5).unwrap();
        assert_eq!(one, rec.log_deriv_prefix[5] - rec.log_deriv_prefix[4]);
    }

    #[test]
    fn first_window_formula() {
        let l = 1e4;
        let rec = iterate_orbit(&sine_map(0.4, l), 0.2, 5);
        let d1 = compute_window(&rec, l, 1).unwrap();
        let want = -0.5 * l.ln() + rec.d_c[0].ln() + rec.d_s[0].ln();
        assert!((d1 - want).abs() < 1e-13);
        let table = WindowTable::build(&rec, l);
        for n in 1..=rec.len() {
            assert_eq!(table.log_d_n(n).unwrap(), compute_window(&rec, l, n).unwrap());
        }
        assert!(table.log_d_n(0).is_none());
        assert!(compute_window(&rec, l, 0).is_err());
        assert!(compute_window(&rec, l, 7).is_err());
    }

    #[test]
    fn windows_decrease() {
        let l = 1e3;
        let rec = iterate_orbit(&sine_map(0.77, l), 0.4, 100);
        let t = WindowTable::build(&rec, l);
        for n in 1..t.valid_to {
            assert!(t.log_d_n(n + 1).unwrap() < t.log_d_n(n).unwrap());
        }
    }

    #[test]
    fn lyapunov_of_linear_prefix() {
        let mut rec = iterate_orbit(&sine_map(0.3, 10.0), 0.25, 0);
        rec.log_deriv_prefix = (0..400).map(|i| 2.5 * i as f64).collect();
        assert!((lyapunov_slope(&rec).unwrap() - 2.5).abs() < 1e-12);
        let a = lyapunov_slope_with_discard(&rec, 0.1).unwrap();
        let b = lyapunov_slope_with_discard(&rec, 0.5).unwrap();
        assert!((a - b).abs() < 1e-9);
        rec.log_deriv_prefix.truncate(50);
        assert!(matches!(lyapunov_slope(&rec), Err(Error::TooShort { .. })));
    }

    #[test]
    fn distortion_of_identical_points_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = distortion_ratio(&sine_map(0.37, 1e4), 0, 1, 0, &mut rng).unwrap();
        assert_eq!(r.max_ratio, 1.0);
        assert!(r.pass);
    }

    #[test]
    fn one_step_distortion_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for a in [0.1, 0.37, 0.6, 0.9] {
            let r = distortion_ratio(&sine_map(a, 1e4), 1, 1, 64, &mut rng).unwrap();
            assert!(r.pass, "{r:?}");
            assert!(r.max_ratio > 1.0);
        }
    }

    #[test]
    fn outside_expansion_single_step_far_from_c() {
        let map = sine_map(0.3, 1e4);
        let p = ConstantsProfile { lambda: 0.05, alpha: 0.05, n: 20, sigma_exp: 0.5 };
        let r = outside_expansion_check(&map, &p, 0.1, 1).unwrap();
        assert!(r.pass);
        assert!(r.log_jacobian > r.bound_free + 5.0);
    }

    #[test]
    fn outside_expansion_inapplicable_inside_c_delta() {
        let map = sine_map(0.3, 1e4);
        let p = ConstantsProfile { lambda: 0.05, alpha: 0.05, n: 20, sigma_exp: 0.5 };
        let c = map.critical().points[0];
        assert!(matches!(outside_expansion_check(&map, &p, c + 1e-6, 3), Err(Error::Inapplicable(_))));
    }

    #[test]
    fn csv_dump_has_expected_columns() {
        let rec = iterate_orbit(&sine_map(0.3, 10.0), 0.1, 3);
        let mut buf = Vec::new();
        write_orbit_csv(&rec, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "step,point,log_deriv_prefix,dC,dS,log_d");
        assert_eq!(lines.count(), 4);
        assert_eq!(fmt17(0.1), "1.0000000000000001e-1");
    }
}
