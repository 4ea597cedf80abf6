//! Measure estimates for the good-parameter sets by grid sweeps and interval refinement.

use std::collections::HashMap;
use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::evaluate_with_orbits;
use crate::error::Result;
use crate::map::CircleMap;
use crate::orbit::{fmt17, lyapunov_slope, CriticalOrbits};
use crate::profile::ConstantsProfile;

/// Per-parameter digest of a [`crate::conditions::ConditionReport`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub a: f64,
    #[serde(rename = "deltaN")]
    pub delta_n: bool,
    pub g1_fail: Option<usize>,
    pub g2_fail: Option<usize>,
    pub g3_fail: Option<usize>,
    pub r_fail: Option<usize>,
    /// First `j` with `a ∉ Δ_j`; `None` if `a ∈ Δ_n` at the horizon.
    pub exclusion_step: Option<usize>,
    /// Smallest Lyapunov slope over the critical orbits.
    pub lyapunov_slope: Option<f64>,
}

impl SweepRow {
    pub fn survives(&self, j: usize) -> bool {
        self.exclusion_step.map_or(true, |s| s > j)
    }
}

/// Evaluates `Δ_N`, `(R)` and `(G3)` (and, for reporting, `(G1)`, `(G2)`) at `a`.
pub fn evaluate_parameter(base: &CircleMap<f64>, profile: &ConstantsProfile, a: f64, n: usize) -> SweepRow {
    let map = base.with_a(a);
    let horizon = (n + 1).max(profile.n);
    let orbits = match CriticalOrbits::compute(&map, horizon) {
        Ok(o) => o,
        Err(_) => return failed_row(a),
    };
    let rep = match evaluate_with_orbits(&map, &orbits, profile, n) {
        Ok(r) => r,
        Err(_) => return failed_row(a),
    };
    let slope = orbits
        .records
        .iter()
        .map(|r| lyapunov_slope(r).ok())
        .try_fold(f64::INFINITY, |m, s| s.map(|s| m.min(s)));
    SweepRow {
        a,
        delta_n: rep.delta_n_ok(),
        g1_fail: rep.first(|c| c.g1_fail),
        g2_fail: rep.first(|c| c.g2_fail),
        g3_fail: rep.first(|c| c.g3_fail),
        r_fail: rep.first(|c| c.r_fail),
        exclusion_step: rep.exclusion_step(profile.n),
        lyapunov_slope: slope.filter(|s| s.is_finite()),
    }
}

fn failed_row(a: f64) -> SweepRow {
    SweepRow {
        a,
        delta_n: false,
        g1_fail: None,
        g2_fail: None,
        g3_fail: None,
        r_fail: None,
        exclusion_step: Some(0),
        lyapunov_slope: None,
    }
}

/// Closed-form exclusion bounds under a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TheoreticalBounds {
    pub n: usize,
    /// `L^{−λαn/100}` and its base-10 exponent.
    pub recurrence: f64,
    pub recurrence_log10: f64,
    /// `L^{−αn/3}` and its base-10 exponent.
    pub singular: f64,
    pub singular_log10: f64,
    /// Lower bound `αN/2` on bound periods of deep returns.
    pub min_bound_period: f64,
    /// `2n/(αN)`, the cap on the number of deep returns.
    pub max_deep_returns: f64,
    /// `λαn/20`, the depth budget `R` must exceed for exclusion.
    pub depth_threshold: f64,
}

pub fn theoretical_bounds(profile: &ConstantsProfile, l: f64, n: usize) -> TheoreticalBounds {
    let lg = l.log10();
    let nf = n as f64;
    let recurrence_log10 = -profile.lambda * profile.alpha * nf / 100.0 * lg;
    let singular_log10 = -profile.alpha * nf / 3.0 * lg;
    let an = profile.alpha * profile.n as f64;
    TheoreticalBounds {
        n,
        recurrence: 10f64.powf(recurrence_log10),
        recurrence_log10,
        singular: 10f64.powf(singular_log10),
        singular_log10,
        min_bound_period: 0.5 * an,
        max_deep_returns: 2.0 * nf / an,
        depth_threshold: profile.lambda * profile.alpha * nf / 20.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepComparison {
    pub j: usize,
    /// Fraction of the grid excluded exactly at step `j`.
    pub excluded: f64,
    /// `L^{−λαj/100} + L^{−αj/3}`.
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    #[serde(rename = "L")]
    pub l: f64,
    pub phi: String,
    pub profile: ConstantsProfile,
    #[serde(rename = "M")]
    pub m: usize,
    pub horizon: usize,
    /// `±1/M`.
    pub resolution: f64,
    #[serde(rename = "deltaN_fraction")]
    pub delta_n_fraction: f64,
    /// Entry `j` is the fraction of the grid in `Δ_j`, `0 ≤ j ≤ n`.
    pub good_fraction: Vec<f64>,
    pub step_comparison: Vec<StepComparison>,
    #[serde(skip)]
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn good_fraction_at(&self, j: usize) -> f64 {
        self.good_fraction[j.min(self.horizon)]
    }

    pub fn survivors(&self) -> impl Iterator<Item = &SweepRow> {
        let n = self.horizon;
        self.rows.iter().filter(move |r| r.survives(n))
    }

    /// CSV columns: a, deltaN, g1_fail, g2_fail, g3_fail, r_fail, exclusion_step, lyapunov_slope.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["a", "deltaN", "g1_fail", "g2_fail", "g3_fail", "r_fail", "exclusion_step", "lyapunov_slope"])?;
        let opt = |v: Option<usize>| v.map_or_else(String::new, |s| s.to_string());
        for r in &self.rows {
            w.write_record([
                fmt17(r.a),
                (r.delta_n as u8).to_string(),
                opt(r.g1_fail),
                opt(r.g2_fail),
                opt(r.g3_fail),
                opt(r.r_fail),
                opt(r.exclusion_step),
                r.lyapunov_slope.map_or_else(String::new, fmt17),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

/// Evaluates the grid `a = k/M`, `0 ≤ k < M`, to horizon `n`.
pub fn grid_sweep(base: &CircleMap<f64>, profile: &ConstantsProfile, m: usize, n: usize) -> SweepResult {
    let rows: Vec<SweepRow> =
        (0..m).into_par_iter().map(|k| evaluate_parameter(base, profile, k as f64 / m as f64, n)).collect();
    summarize(base, profile, m, n, rows)
}

fn summarize(base: &CircleMap<f64>, profile: &ConstantsProfile, m: usize, n: usize, rows: Vec<SweepRow>) -> SweepResult {
    let mut excluded_at = vec![0usize; n + 1];
    for r in &rows {
        if let Some(s) = r.exclusion_step {
            excluded_at[s.min(n)] += (s <= n) as usize;
        }
    }
    let mf = m as f64;
    let mut alive = m;
    let mut good_fraction = Vec::with_capacity(n + 1);
    for &e in &excluded_at {
        alive -= e;
        good_fraction.push(alive as f64 / mf);
    }
    let l = base.l();
    let step_comparison = (profile.n + 1..=n)
        .map(|j| {
            let b = theoretical_bounds(profile, l, j);
            StepComparison { j, excluded: excluded_at[j] as f64 / mf, bound: b.recurrence + b.singular }
        })
        .collect();
    let delta_n_fraction = rows.iter().filter(|r| r.delta_n).count() as f64 / mf;
    SweepResult {
        l,
        phi: base.phi().name().to_string(),
        profile: *profile,
        m,
        horizon: n,
        resolution: 1.0 / mf,
        delta_n_fraction,
        good_fraction,
        step_comparison,
        rows,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// Still ambiguous at the subdivision limit.
    pub depth_exceeded: bool,
}

impl Interval {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IntervalSet {
    pub generation: usize,
    pub intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn total_length(&self) -> f64 {
        self.intervals.iter().map(Interval::width).sum()
    }

    pub fn flagged_length(&self) -> f64 {
        self.intervals.iter().filter(|i| i.depth_exceeded).map(Interval::width).sum()
    }

    pub fn is_sorted_disjoint(&self) -> bool {
        self.intervals.iter().all(|i| 0.0 <= i.lo && i.lo < i.hi && i.hi <= 1.0)
            && self.intervals.windows(2).all(|w| w[0].hi <= w[1].lo)
    }

    /// Every interval lies inside some interval of `parent`.
    pub fn is_subset_of(&self, parent: &IntervalSet) -> bool {
        self.intervals.iter().all(|i| parent.intervals.iter().any(|p| p.lo <= i.lo && i.hi <= p.hi))
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RefineResult {
    #[serde(rename = "L")]
    pub l: f64,
    pub profile: ConstantsProfile,
    pub depth: u32,
    pub width_min: f64,
    pub probes: usize,
    pub generations: Vec<IntervalSet>,
}

pub const DEFAULT_WIDTH_MIN: f64 = 1e-12;

/// Refinement starts from `2^min(depth, COARSE_DEPTH)` uniform cells.
pub const COARSE_DEPTH: u32 = 10;

/// Builds `Δ̂_n` for the listed generations by three-probe interval refinement.
///
/// Starting from a uniform coarse partition of `[0,1)`, an interval is kept when its endpoints and midpoint all lie in `Δ_n`,
/// dropped when none do, and halved otherwise down to width
/// `max(2^{−depth}, width_min)`; intervals still ambiguous there are kept and flagged.
pub fn interval_refine(
    base: &CircleMap<f64>,
    profile: &ConstantsProfile,
    generations: &[usize],
    depth: u32,
    width_min: f64,
) -> RefineResult {
    let n_max = generations.iter().copied().max().unwrap_or(profile.n);
    let floor_width = 2f64.powi(-(depth as i32)).max(width_min);
    let mut cache: HashMap<u64, Option<usize>> = HashMap::new();
    // Three probes on [0,1) itself would drop everything the probes miss.
    let cells = 1usize << depth.min(COARSE_DEPTH);
    let mut current: Vec<Interval> = (0..cells)
        .map(|k| Interval { lo: k as f64 / cells as f64, hi: (k + 1) as f64 / cells as f64, depth_exceeded: false })
        .collect();
    let mut out = Vec::with_capacity(generations.len());
    for &gen in generations {
        let mut kept = Vec::new();
        let mut work = std::mem::take(&mut current);
        while !work.is_empty() {
            let mut missing: Vec<f64> = work
                .iter()
                .flat_map(|i| [i.lo, 0.5 * (i.lo + i.hi), i.hi])
                .filter(|a| !cache.contains_key(&a.to_bits()))
                .collect();
            missing.sort_by(f64::total_cmp);
            missing.dedup();
            let fresh: Vec<(u64, Option<usize>)> = missing
                .par_iter()
                .map(|&a| (a.to_bits(), evaluate_parameter(base, profile, a, n_max).exclusion_step))
                .collect();
            cache.extend(fresh);
            let pass = |a: f64| cache[&a.to_bits()].map_or(true, |s| s > gen);
            let mut next = Vec::new();
            for iv in work {
                let mid = 0.5 * (iv.lo + iv.hi);
                let votes = [iv.lo, mid, iv.hi].into_iter().filter(|&a| pass(a)).count();
                match votes {
                    3 => kept.push(Interval { depth_exceeded: false, ..iv }),
                    0 => {}
                    _ if iv.width() * 0.5 < floor_width => kept.push(Interval { depth_exceeded: true, ..iv }),
                    _ => {
                        next.push(Interval { lo: iv.lo, hi: mid, depth_exceeded: false });
                        next.push(Interval { lo: mid, hi: iv.hi, depth_exceeded: false });
                    }
                }
            }
            work = next;
        }
        kept.sort_by(|x, y| x.lo.total_cmp(&y.lo));
        current = kept.clone();
        out.push(IntervalSet { generation: gen, intervals: kept });
    }
    RefineResult {
        l: base.l(),
        profile: *profile,
        depth,
        width_min,
        probes: cache.len(),
        generations: out,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridAgreement {
    pub generation: usize,
    pub grid_fraction: f64,
    pub certain_length: f64,
    pub flagged_length: f64,
    /// `|grid − total| < 2·max(1/M, width_min)`.
    pub strict: bool,
    /// `certain − 1/M ≤ grid ≤ certain + flagged + 1/M`.
    pub bracketed: bool,
}

pub fn compare_with_grid(refined: &IntervalSet, sweep: &SweepResult, width_min: f64) -> GridAgreement {
    let grid = sweep.good_fraction_at(refined.generation);
    let total = refined.total_length();
    let flagged = refined.flagged_length();
    let certain = total - flagged;
    let res = 1.0 / sweep.m as f64;
    GridAgreement {
        generation: refined.generation,
        grid_fraction: grid,
        certain_length: certain,
        flagged_length: flagged,
        strict: (grid - total).abs() < 2.0 * res.max(width_min),
        bracketed: certain - res <= grid && grid <= total + res,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrendRow {
    #[serde(rename = "L")]
    pub l: f64,
    #[serde(rename = "deltaN_fraction")]
    pub delta_n_fraction: f64,
    pub good_fraction: f64,
    /// `1 − L^{−1/9}`.
    pub initial_bound: f64,
    pub survivors: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrendReport {
    pub horizon: usize,
    #[serde(rename = "M")]
    pub m: usize,
    pub tolerance: f64,
    pub rows: Vec<TrendRow>,
    pub pass: bool,
}

/// `good_fraction(n)` against `L`; passes when non-decreasing within `2/√M`.
pub fn trend_study(base: &CircleMap<f64>, ls: &[f64], profile: &ConstantsProfile, m: usize, n: usize) -> Result<(TrendReport, Vec<SweepResult>)> {
    let mut rows = Vec::with_capacity(ls.len());
    let mut sweeps = Vec::with_capacity(ls.len());
    for &l in ls {
        let map = CircleMap::new(base.phi().clone(), 0.0, l)?;
        let s = grid_sweep(&map, profile, m, n);
        rows.push(TrendRow {
            l,
            delta_n_fraction: s.delta_n_fraction,
            good_fraction: s.good_fraction_at(n),
            initial_bound: 1.0 - l.powf(-1.0 / 9.0),
            survivors: s.survivors().count(),
        });
        sweeps.push(s);
    }
    let tolerance = 2.0 / (m as f64).sqrt();
    let pass = rows.windows(2).all(|w| w[1].good_fraction >= w[0].good_fraction - tolerance);
    Ok((TrendReport { horizon: n, m, tolerance, rows, pass }, sweeps))
}

#[derive(Debug, Clone, Serialize)]
pub struct LyapunovCensus {
    pub horizon: usize,
    pub survivors: usize,
    pub min_slope: Option<f64>,
    pub median_slope: Option<f64>,
    /// `λ ln L`.
    pub threshold: f64,
    /// Fraction of survivors whose slope reaches `(1/3) ln L`.
    pub third_fraction: f64,
    pub pass: bool,
}

/// Lyapunov slopes of every critical orbit over `horizon` steps for the sweep survivors.
pub fn lyapunov_census(base: &CircleMap<f64>, sweep: &SweepResult, horizon: usize) -> LyapunovCensus {
    let l = sweep.l;
    let map = base.with_a(0.0);
    let mut slopes: Vec<f64> = sweep
        .survivors()
        .collect::<Vec<_>>()
        .par_iter()
        .filter_map(|r| {
            let m = map.with_a(r.a);
            let orbits = CriticalOrbits::compute(&m, horizon).ok()?;
            orbits.records.iter().map(|rec| lyapunov_slope(rec).ok()).try_fold(f64::INFINITY, |acc, s| s.map(|s| acc.min(s)))
        })
        .collect();
    slopes.sort_by(f64::total_cmp);
    let threshold = sweep.profile.lambda * l.ln();
    let third = l.ln() / 3.0;
    let count = slopes.len();
    let min_slope = slopes.first().copied();
    let median_slope = (count > 0).then(|| slopes[count / 2]);
    let third_fraction = if count == 0 { 0.0 } else { slopes.iter().filter(|&&s| s >= third).count() as f64 / count as f64 };
    LyapunovCensus {
        horizon,
        survivors: count,
        min_slope,
        median_slope,
        threshold,
        third_fraction,
        pass: min_slope.is_some_and(|m| m >= threshold),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phi::PhiSpec;

    fn base(l: f64) -> CircleMap<f64> {
        CircleMap::new(PhiSpec::sin2pi(), 0.0, l).unwrap()
    }

    fn loose() -> ConstantsProfile {
        ConstantsProfile { lambda: 0.05, alpha: 0.2, n: 3, sigma_exp: 0.5 }
    }

    #[test]
    fn good_fraction_starts_at_delta_n_and_decreases() {
        let prof = loose();
        let s = grid_sweep(&base(1e4), &prof, 1000, 40);
        assert!((s.good_fraction_at(prof.n) - s.delta_n_fraction).abs() < 1e-15);
        assert!(s.good_fraction.windows(2).all(|w| w[1] <= w[0]));
        assert!(s.good_fraction.iter().all(|f| (0.0..=1.0).contains(f)));
        assert!(s.delta_n_fraction > 0.0);
    }

    #[test]
    fn sweep_is_deterministic_across_thread_counts() {
        let prof = loose();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| grid_sweep(&base(1e3), &prof, 500, 30));
        let b = grid_sweep(&base(1e3), &prof, 500, 30);
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.good_fraction, b.good_fraction);
    }

    #[test]
    fn asymptotic_profile_bound_arithmetic() {
        let b = theoretical_bounds(&ConstantsProfile::paper(), 10.0, 1_000_000);
        assert!((b.recurrence_log10 + 1e-5).abs() < 1e-18);
        let desk = ConstantsProfile { lambda: 0.05, alpha: 0.01, n: 20, sigma_exp: 1.0 / 6.0 };
        let b = theoretical_bounds(&desk, 1e4, 100);
        assert!((b.recurrence_log10 - 4.0 * -5e-4).abs() < 1e-15);
    }

    #[test]
    fn bounds_decrease_in_n() {
        let p = loose();
        let mut prev = theoretical_bounds(&p, 1e4, 1);
        for n in 2..50 {
            let b = theoretical_bounds(&p, 1e4, n);
            assert!(b.recurrence < prev.recurrence && b.singular < prev.singular);
            prev = b;
        }
    }

    #[test]
    fn refinement_nests_and_brackets_grid() {
        let prof = loose();
        let map = base(1e4);
        let depth = 10;
        let gens = [prof.n, 10, 20, 40];
        let r = interval_refine(&map, &prof, &gens, depth, DEFAULT_WIDTH_MIN);
        assert_eq!(r.generations.len(), gens.len());
        for g in &r.generations {
            assert!(g.is_sorted_disjoint());
            assert!(g.total_length() <= 1.0);
        }
        for w in r.generations.windows(2) {
            assert!(w[1].is_subset_of(&w[0]));
        }
        let sweep = grid_sweep(&map, &prof, 1 << depth, 40);
        let first = compare_with_grid(&r.generations[0], &sweep, DEFAULT_WIDTH_MIN);
        assert!(first.bracketed, "{first:?}");
    }

    #[test]
    fn single_l_trend_passes() {
        let (t, _) = trend_study(&base(1e3), &[1e3], &loose(), 200, 20).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.pass);
    }

    #[test]
    fn sweep_csv_header() {
        let s = grid_sweep(&base(1e3), &loose(), 10, 20);
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("a,deltaN,g1_fail,g2_fail,g3_fail,r_fail,exclusion_step,lyapunov_slope\n"));
        assert_eq!(text.lines().count(), 11);
    }
}
