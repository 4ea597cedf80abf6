//! The property battery behind `circle-lab verify` and the acceptance suite.

use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::conditions::{
    check_g1, check_g2, delta_n_for, tau_orbit, transversality_unchecked, window_comparability,
};
use crate::error::{Error, Result};
use crate::map::{CircleMap, DerivativeBracket};
use crate::orbit::{distortion_ratio, iterate_orbit, outside_expansion_check, CriticalOrbits, WindowTable};
use crate::phi::PhiSpec;
use crate::profile::ConstantsProfile;
use crate::structure::{
    return_chain, build_itinerary, deep_return_expansion_check, delta0_structure_check, detect_deep_returns,
    recovery_check, Itinerary, ReturnRadius,
};
use crate::sweep::{grid_sweep, lyapunov_census, trend_study, LyapunovCensus, SweepResult, SweepRow, TrendReport};

/// `∂_a c_k(a)` for `Φ = sin 2πx`, `L = 1`, `a = 0.123`, critical point 0,
/// by central difference at 80 significant digits with `h = 1e-30`.
pub const TAU_REFERENCE: [f64; 16] = [
    1.0, -5.1823822444893832, -54.994651893711093, -551.08914062143892, -2780.8874945222078,
    -24359.82788189431, -6847.2597390897619, 41723.856196672083, 418529.01710812196, 2097162.3246258829,
    17687131.53366169, -16109913.164147578, 86081383.871852381, 492732277.44653721, 10818321859.320105,
    -116173293529.49091,
];

/// Criteria whose statements cannot hold at the prescribed desk constants.
pub const UNATTAINABLE: [u8; 2] = [3, 11];

#[derive(Debug, Clone, Serialize)]
pub struct Outcome {
    pub id: u8,
    pub title: &'static str,
    pub pass: bool,
    pub instances: usize,
    pub violations: usize,
    pub detail: String,
    #[serde(skip)]
    pub seconds: f64,
    #[serde(skip)]
    pub time_limit: Option<f64>,
}

impl Outcome {
    pub fn line(&self) -> String {
        let limit = self.time_limit.map_or_else(String::new, |t| format!(" limit {t:.0}s"));
        format!(
            "{} [{:>2}] {}: instances={} violations={} ({:.1}s{}) {}",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.instances,
            self.violations,
            self.seconds,
            limit,
            self.detail
        )
    }
}

struct Timer(Instant);

impl Timer {
    fn start() -> Self {
        Timer(Instant::now())
    }

    fn finish(
        self,
        id: u8,
        title: &'static str,
        instances: usize,
        violations: usize,
        extra_ok: bool,
        time_limit: Option<f64>,
        detail: String,
    ) -> Outcome {
        let seconds = self.0.elapsed().as_secs_f64();
        let in_time = time_limit.map_or(true, |t| seconds < t);
        Outcome {
            id,
            title,
            pass: instances > 0 && violations == 0 && extra_ok && in_time,
            instances,
            violations,
            detail,
            seconds,
            time_limit,
        }
    }
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub phi: PhiSpec<f64>,
    pub desk: ConstantsProfile,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { phi: PhiSpec::sin2pi(), desk: ConstantsProfile::desk(), seed: 0 }
    }
}

/// Tolerances and sizes of the battery.
pub mod limits {
    pub const BRACKET_LS: [f64; 3] = [1e2, 1e3, 1e4];
    pub const BRACKET_SAMPLES: usize = 100_000;
    pub const BRACKET_SECONDS: f64 = 10.0;
    pub const DISTORTION_L: f64 = 1e4;
    pub const DISTORTION_SAMPLES: usize = 100;
    pub const DISTORTION_MAX_N: usize = 50;
    pub const DISTORTION_PAIRS: usize = 64;
    pub const DISTORTION_MAX_RATIO: f64 = 2.0;
    pub const DISTORTION_SECONDS: f64 = 30.0;
    pub const INITIAL_LS: [f64; 2] = [1e4, 1e5];
    pub const INITIAL_N: usize = 5;
    pub const INITIAL_SIGMA_EXP: f64 = 1.0 / 6.0;
    pub const INITIAL_M: usize = 1_000_000;
    pub const INITIAL_BOUND_EXP: f64 = 1.0 / 9.0;
    pub const INITIAL_SECONDS: f64 = 300.0;
    pub const OUTSIDE_L: f64 = 1e4;
    pub const OUTSIDE_SEGMENTS: usize = 100;
    pub const OUTSIDE_MAX_N: usize = 500;
    pub const SAMPLED_PARAMETERS: usize = 200;
    pub const TRANSVERSALITY_K: usize = 200;
    pub const RATIO_LOW: f64 = 0.5;
    pub const RATIO_HIGH: f64 = 2.0;
    pub const TAU_ORACLE_K: usize = 15;
    pub const TAU_ORACLE_REL: f64 = 1e-4;
    pub const ORACLE_ORBITS: usize = 100;
    pub const ORACLE_MAX_N: usize = 20;
    pub const ORACLE_REL: f64 = 1e-10;
    pub const ORACLE_MAX_RETURNS: usize = 20;
    pub const TREND_LS: [f64; 3] = [1e3, 1e4, 1e5];
    pub const TREND_M: usize = 100_000;
    pub const TREND_N: usize = 200;
    pub const TREND_SECONDS: f64 = 900.0;
    pub const CHAIN_L: f64 = 1e4;
    pub const CHAIN_N: usize = 5;
}

use limits::*;

pub const SAMPLE_L: f64 = 1e4;
/// Smallest distortion window sampled; about `10⁴` doubles fit across it.
pub const RESOLVABLE_WINDOW: f64 = 1e-12;
pub const SAMPLE_GRID: usize = 20_000;
pub const SAMPLE_COUNT: usize = SAMPLED_PARAMETERS;
pub const HORIZON: usize = TRANSVERSALITY_K;

/// Runs the criteria, caching the shared parameter sweep.
pub struct Battery {
    pub cfg: VerifyConfig,
    sample: OnceLock<SweepResult>,
    trend: OnceLock<(TrendReport, Vec<LyapunovCensus>)>,
}

/// Up to `count` evenly spaced rows among those accepted by `keep`.
pub fn pick_rows<'a>(rows: &'a [SweepRow], keep: impl Fn(&SweepRow) -> bool, count: usize) -> Vec<&'a SweepRow> {
    let pool: Vec<&SweepRow> = rows.iter().filter(|r| keep(r)).collect();
    if pool.len() <= count {
        return pool;
    }
    (0..count).map(|k| pool[k * pool.len() / count]).collect()
}

impl Battery {
    pub fn new(cfg: VerifyConfig) -> Self {
        Self { cfg, sample: OnceLock::new(), trend: OnceLock::new() }
    }

    fn rng(&self, id: u8) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.cfg.seed.wrapping_mul(1000).wrapping_add(id as u64))
    }

    fn map(&self, l: f64) -> Result<CircleMap<f64>> {
        CircleMap::new(self.cfg.phi.clone(), 0.0, l)
    }

    /// Grid sweep at `L = 10⁴` that supplies the sampled parameters.
    pub fn sample_sweep(&self) -> Result<&SweepResult> {
        if let Some(s) = self.sample.get() {
            return Ok(s);
        }
        let s = grid_sweep(&self.map(SAMPLE_L)?, &self.cfg.desk, SAMPLE_GRID, HORIZON);
        Ok(self.sample.get_or_init(|| s))
    }

    fn sample_orbits(&self, a: f64) -> Result<(CircleMap<f64>, CriticalOrbits<f64>)> {
        let map = self.map(SAMPLE_L)?.with_a(a);
        let orbits = CriticalOrbits::compute(&map, HORIZON + 1)?;
        Ok((map, orbits))
    }

    pub fn criterion_1(&self) -> Result<Outcome> {
        let t = Timer::start();
        let mut rng = self.rng(1);
        let ls = BRACKET_LS;
        let bracket = DerivativeBracket::fit(&self.cfg.phi, &ls, 10_000, &mut rng)?;
        let mut instances = 0;
        let mut violations = 0;
        for &l in &ls {
            let v = bracket.verify(&self.map(l)?, BRACKET_SAMPLES, &mut rng);
            instances += v.samples;
            violations += v.first_derivative;
        }
        let detail = format!("K0 = {:.4}, eps0 = {:.3e}", bracket.k0, bracket.eps0);
        Ok(t.finish(1, "derivative bracket", instances, violations, true, Some(BRACKET_SECONDS), detail))
    }

    pub fn criterion_2(&self) -> Result<Outcome> {
        let t = Timer::start();
        let mut rng = self.rng(2);
        let base = self.map(DISTORTION_L)?;
        let (mut done, mut bad, mut worst, mut collapsed, mut tries) = (0, 0, 1.0f64, 0, 0);
        while done < DISTORTION_SAMPLES && tries < 10_000 {
            tries += 1;
            let map = base.with_a(rng.gen());
            let c = rng.gen_range(0..map.critical().len());
            let central = iterate_orbit(&map, map.critical_value(c)?, DISTORTION_MAX_N);
            if central.halted.is_some() {
                continue;
            }
            // Windows narrower than this hold a single double-precision point.
            let w = WindowTable::build(&central, map.l());
            let top = (1..=DISTORTION_MAX_N).take_while(|&n| w.log_d_n(n).is_some_and(|d| d > RESOLVABLE_WINDOW.ln())).last();
            let Some(top) = top else { continue };
            let n = rng.gen_range(1..=top);
            match distortion_ratio(&map, c, n, DISTORTION_PAIRS, &mut rng) {
                Ok(rep) => {
                    done += 1;
                    worst = worst.max(rep.max_ratio);
                    collapsed += rep.collapsed_pairs;
                    bad += (rep.max_ratio > DISTORTION_MAX_RATIO) as usize;
                }
                Err(Error::HaltedOrbit { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        let detail = format!("max ratio {worst:.4}, coincident sample pairs {collapsed}");
        Ok(t.finish(2, "distortion", done, bad, done == DISTORTION_SAMPLES, Some(DISTORTION_SECONDS), detail))
    }

    pub fn criterion_3(&self) -> Result<Outcome> {
        let t = Timer::start();
        let m = INITIAL_M;
        let prof = ConstantsProfile { n: INITIAL_N, sigma_exp: INITIAL_SIGMA_EXP, ..self.cfg.desk };
        let mut bad = 0;
        let mut parts = Vec::new();
        for l in INITIAL_LS {
            let s = grid_sweep(&self.map(l)?, &prof, m, prof.n);
            let bound = 1.0 - l.powf(-INITIAL_BOUND_EXP);
            let ok = s.delta_n_fraction >= bound - 1.0 / m as f64;
            bad += (!ok) as usize;
            parts.push(format!("L={l:e}: fraction {:.6} vs bound {:.6}", s.delta_n_fraction, bound));
        }
        Ok(t.finish(3, "initial measure", INITIAL_LS.len(), bad, true, Some(INITIAL_SECONDS), parts.join("; ")))
    }

    pub fn criterion_4(&self) -> Result<Outcome> {
        let t = Timer::start();
        let mut rng = self.rng(4);
        let base = self.map(OUTSIDE_L)?;
        let (mut done, mut bad, mut ending, mut tries) = (0, 0, 0, 0);
        while done < OUTSIDE_SEGMENTS && tries < 100_000 {
            tries += 1;
            let map = base.with_a(rng.gen());
            let x0: f64 = rng.gen();
            let n = rng.gen_range(1..=OUTSIDE_MAX_N);
            match outside_expansion_check(&map, &self.cfg.desk, x0, n) {
                Ok(rep) => {
                    done += 1;
                    ending += rep.ends_in_c_delta as usize;
                    bad += (!rep.pass) as usize;
                }
                Err(Error::Inapplicable(_) | Error::HaltedOrbit { .. }) => {}
                Err(e) => return Err(e),
            }
        }
        let detail = format!("{ending} segments end in C_delta");
        Ok(t.finish(4, "outside expansion", done, bad, done == OUTSIDE_SEGMENTS, None, detail))
    }

    fn itineraries(&self, map: &CircleMap<f64>, orbits: &CriticalOrbits<f64>) -> Result<Vec<Option<Itinerary>>> {
        let delta = self.cfg.desk.delta(map.l());
        (0..orbits.records.len())
            .map(|c| match build_itinerary(map, orbits, c, HORIZON, delta) {
                Ok(it) => Ok(Some(detect_deep_returns(&it, &orbits.records[c], map.l()))),
                Err(Error::HaltedOrbit { .. } | Error::TooShort { .. }) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    }

    pub fn criterion_5(&self) -> Result<Outcome> {
        let t = Timer::start();
        let sweep = self.sample_sweep()?;
        let picks = pick_rows(&sweep.rows, |r| r.delta_n, SAMPLE_COUNT);
        let per: Vec<Result<(usize, usize, usize, usize)>> = picks
            .par_iter()
            .map(|row| {
                let (map, orbits) = self.sample_orbits(row.a)?;
                let (mut checked, mut bad, mut skipped, mut cap_bad) = (0, 0, 0, 0);
                for (c, it) in self.itineraries(&map, &orbits)?.into_iter().enumerate() {
                    let Some(it) = it else { continue };
                    for ev in &it.events {
                        match recovery_check(&map, &self.cfg.desk, &orbits, c, ev) {
                            Ok(rep) => {
                                checked += 1;
                                bad += (!rep.pass) as usize;
                                cap_bad += (!rep.cap_ok) as usize;
                            }
                            Err(Error::Inapplicable(_) | Error::HaltedOrbit { .. }) => skipped += 1,
                            Err(e) => return Err(e),
                        }
                    }
                }
                Ok((checked, bad, skipped, cap_bad))
            })
            .collect();
        let (mut checked, mut bad, mut skipped, mut cap_bad) = (0, 0, 0, 0);
        for r in per {
            let (a, b, c, d) = r?;
            checked += a;
            bad += b;
            skipped += c;
            cap_bad += d;
        }
        let detail = format!(
            "{} parameters in Delta_N; {skipped} events outside the hypotheses; {cap_bad} cap violations",
            picks.len()
        );
        Ok(t.finish(5, "recovery", checked, bad, true, None, detail))
    }

    fn conditions_to_horizon(&self, orbits: &CriticalOrbits<f64>, l: f64) -> bool {
        let prof = &self.cfg.desk;
        orbits.records.iter().all(|rec| {
            delta_n_for(rec, prof, l).ok
                && rec.len() >= HORIZON + 2
                && matches!(check_g1(rec, prof, l, HORIZON), Ok(None))
                && matches!(check_g2(rec, prof, l, HORIZON), Ok(None))
                && matches!(crate::conditions::check_g3(rec, prof, l, HORIZON), Ok(None))
        })
    }

    pub fn criterion_6(&self) -> Result<Outcome> {
        let t = Timer::start();
        let sweep = self.sample_sweep()?;
        let picks = pick_rows(
            &sweep.rows,
            |r| r.delta_n && r.g1_fail.is_none() && r.g2_fail.is_none() && r.g3_fail.is_none(),
            SAMPLE_COUNT,
        );
        let per: Vec<Result<(usize, usize, f64)>> = picks
            .par_iter()
            .map(|row| {
                let (map, orbits) = self.sample_orbits(row.a)?;
                if !self.conditions_to_horizon(&orbits, map.l()) {
                    return Ok((0, 0, f64::INFINITY));
                }
                let (mut checked, mut bad, mut margin) = (0, 0, f64::INFINITY);
                for (c, it) in self.itineraries(&map, &orbits)?.into_iter().enumerate() {
                    let Some(it) = it else { continue };
                    for ev in it.events.iter().filter(|e| e.deep && e.time > 0) {
                        let rep = deep_return_expansion_check(&orbits.records[c], &orbits.windows[c], &it, ev.time)?;
                        checked += 1;
                        bad += (!rep.pass) as usize;
                        margin = margin.min(rep.lhs - rep.rhs);
                    }
                }
                Ok((checked, bad, margin))
            })
            .collect();
        let (mut checked, mut bad, mut margin) = (0, 0, f64::INFINITY);
        for r in per {
            let (a, b, m) = r?;
            checked += a;
            bad += b;
            margin = margin.min(m);
        }
        let detail = format!("{} condition-passing parameters; min log margin {margin:.3}", picks.len());
        Ok(t.finish(6, "deep-return expansion", checked, bad, true, None, detail))
    }

    pub fn criterion_7(&self) -> Result<Outcome> {
        let t = Timer::start();
        let sweep = self.sample_sweep()?;
        let n = HORIZON;
        let picks = pick_rows(&sweep.rows, |r| r.delta_n && r.r_fail.map_or(true, |j| j > n - 1), SAMPLE_COUNT);
        let prof = &self.cfg.desk;
        let per: Vec<Result<(usize, usize)>> = picks
            .par_iter()
            .map(|row| {
                let (map, orbits) = self.sample_orbits(row.a)?;
                let l = map.l();
                let (mut checked, mut bad) = (0, 0);
                for rec in &orbits.records {
                    if rec.len() < n + 1 {
                        continue;
                    }
                    checked += 1;
                    let g1 = check_g1(rec, prof, l, n - 1)?;
                    let g2 = check_g2(rec, prof, l, n - 1)?;
                    bad += (g1.is_some() || g2.is_some()) as usize;
                }
                Ok((checked, bad))
            })
            .collect();
        let (mut checked, mut bad) = (0, 0);
        for r in per {
            let (a, b) = r?;
            checked += a;
            bad += b;
        }
        let detail = format!("{} parameters passing (R) to n-1 = {}", picks.len(), n - 1);
        Ok(t.finish(7, "(R) implies (G1) and (G2)", checked, bad, true, None, detail))
    }

    pub fn criterion_8(&self) -> Result<Outcome> {
        let t = Timer::start();
        let sweep = self.sample_sweep()?;
        let n = HORIZON;
        let picks = pick_rows(&sweep.rows, |r| r.survives(n - 1), SAMPLE_COUNT);
        let seed_base = self.cfg.seed;
        let per: Vec<Result<(usize, usize, usize, usize, f64)>> = picks
            .par_iter()
            .enumerate()
            .map(|(k, row)| {
                let (map, orbits) = self.sample_orbits(row.a)?;
                let mut rng = ChaCha8Rng::seed_from_u64(seed_base.wrapping_mul(1000).wrapping_add(800 + k as u64));
                let (mut checked, mut bad, mut windows, mut wbad, mut worst) = (0, 0, 0, 0, 0.0f64);
                for c in 0..orbits.records.len() {
                    let rep = transversality_unchecked(&map, &orbits.records[c], c, n)?;
                    checked += 1;
                    bad += (!rep.pass) as usize;
                    worst = worst.max(rep.max_log_ratio.abs()).max(rep.min_log_ratio.abs());
                    let cmp = window_comparability(&map, c, n, 8, &mut rng)?;
                    windows += 1;
                    wbad += (!cmp.pass) as usize;
                }
                Ok((checked, bad, windows, wbad, worst))
            })
            .collect();
        let (mut checked, mut bad, mut windows, mut wbad, mut worst) = (0, 0, 0, 0, 0.0f64);
        for r in per {
            let (a, b, c, d, w) = r?;
            checked += a;
            bad += b;
            windows += c;
            wbad += d;
            worst = worst.max(w);
        }
        // Finite-difference oracle for τ.
        let map = CircleMap::new(self.cfg.phi.clone(), 0.123, 1.0)?;
        let tau = tau_orbit(&map, 0, TAU_ORACLE_K)?;
        let oracle_bad = if self.cfg.phi.name() == "sin2pi" {
            TAU_REFERENCE
                .iter()
                .enumerate()
                .filter(|&(k, &want)| (tau.tau[k].to_value() - want).abs() > TAU_ORACLE_REL * want.abs())
                .count()
        } else {
            0
        };
        let detail = format!(
            "{} parameters; ratio tables {checked} (max |ln ratio| {worst:.3}); windows {windows} with {wbad} violations; oracle mismatches {oracle_bad}",
            picks.len()
        );
        Ok(t.finish(8, "transversality", checked + windows, bad + wbad + oracle_bad, true, None, detail))
    }

    pub fn criterion_9(&self) -> Result<Outcome> {
        let t = Timer::start();
        let mut rng = self.rng(9);
        let l = 10.0;
        let base = self.map(l)?;
        let (mut orbits_done, mut bad, mut worst) = (0, 0, 0.0f64);
        while orbits_done < ORACLE_ORBITS {
            let map = base.with_a(rng.gen());
            let rec = iterate_orbit(&map, rng.gen(), ORACLE_MAX_N);
            if rec.halted.is_some() {
                continue;
            }
            orbits_done += 1;
            let w = WindowTable::build(&rec, l);
            let mut jac = 1.0f64;
            let mut sum = 0.0f64;
            for n in 1..=ORACLE_MAX_N {
                let i = n - 1;
                sum += jac / (rec.d_c[i] * rec.d_s[i]);
                jac *= map.deriv(rec.points[i]).abs();
                let dn = 1.0 / (l.sqrt() * sum);
                let e1 = (rec.log_deriv_prefix[n].exp() - jac).abs() / jac;
                let e2 = (w.log_d_n(n).unwrap().exp() - dn).abs() / dn;
                worst = worst.max(e1).max(e2);
                bad += (e1 >= ORACLE_REL || e2 >= ORACLE_REL) as usize;
            }
        }
        // Deep flags against the quadratic definition.
        let (mut itins, mut deep_bad) = (0, 0);
        let base = self.map(1e3)?;
        for k in 0..200 {
            let map = base.with_a((k as f64 + 0.5) / 200.0);
            let Ok(orbits) = CriticalOrbits::compute(&map, HORIZON + 1) else { continue };
            for radius in [ReturnRadius::Delta, ReturnRadius::Delta0, ReturnRadius::DeltaRoot20] {
                for c in 0..orbits.records.len() {
                    let Ok(it) = build_itinerary(&map, &orbits, c, HORIZON, radius.value(&self.cfg.desk, map.l())) else {
                        continue;
                    };
                    if it.events.is_empty() || it.events.len() > ORACLE_MAX_RETURNS {
                        continue;
                    }
                    itins += 1;
                    let flagged = detect_deep_returns(&it, &orbits.records[c], map.l());
                    let ell: Vec<f64> = it.events.iter().map(|e| orbits.records[c].d_c[e.time].log(map.l())).collect();
                    for (nu, ev) in flagged.events.iter().enumerate() {
                        let brute = (0..nu).all(|i| 2.0 * ell[i + 1..=nu].iter().sum::<f64>() <= ell[i] + 1e-12 * ell[i].abs());
                        let tight = (0..nu).any(|i| (2.0 * ell[i + 1..=nu].iter().sum::<f64>() - ell[i]).abs() <= 1e-9);
                        if !tight && brute != ev.deep {
                            deep_bad += 1;
                        }
                    }
                }
            }
        }
        let detail = format!("max rel err {worst:.2e}; {itins} itineraries with <= 20 returns");
        Ok(t.finish(9, "oracle equivalence", orbits_done * ORACLE_MAX_N + itins, bad + deep_bad, itins > 0, None, detail))
    }

    /// Trend sweep and Lyapunov census, shared by criterion 10 and the artifacts.
    pub fn trend(&self) -> Result<&(TrendReport, Vec<LyapunovCensus>)> {
        if let Some(t) = self.trend.get() {
            return Ok(t);
        }
        let base = self.map(1e3)?;
        let (report, sweeps) = trend_study(&base, &TREND_LS, &self.cfg.desk, TREND_M, TREND_N)?;
        let census = sweeps
            .iter()
            .map(|s| Ok(lyapunov_census(&self.map(s.l)?, s, TREND_N)))
            .collect::<Result<Vec<_>>>()?;
        Ok(self.trend.get_or_init(|| (report, census)))
    }

    pub fn criterion_10(&self) -> Result<Outcome> {
        let t = Timer::start();
        let (report, census) = self.trend()?;
        let mut parts = Vec::new();
        let mut bad = (!report.pass) as usize;
        for (row, c) in report.rows.iter().zip(census) {
            bad += (c.survivors > 0 && !c.pass) as usize;
            parts.push(format!(
                "L={:e}: good {:.5} (deltaN {:.5}), survivors {}, min slope {} vs {:.3}, (1/3)lnL fraction {:.3}",
                row.l,
                row.good_fraction,
                row.delta_n_fraction,
                c.survivors,
                c.min_slope.map_or("n/a".into(), |m| format!("{m:.3}")),
                c.threshold,
                c.third_fraction
            ));
        }
        let survivors: usize = census.iter().map(|c| c.survivors).sum();
        Ok(t.finish(10, "measure trend", survivors, bad, true, Some(TREND_SECONDS), parts.join("; ")))
    }

    /// Profile for the return-chain checks: `N = 5` and `α` large enough that `δ < δ₀`.
    pub fn chain_profile(&self) -> ConstantsProfile {
        ConstantsProfile { alpha: 0.2, n: CHAIN_N, ..self.cfg.desk }
    }

    pub fn criterion_11(&self) -> Result<Outcome> {
        let t = Timer::start();
        let prof = self.chain_profile();
        let l = CHAIN_L;
        let base = self.map(l)?;
        let sweep = grid_sweep(&base, &prof, 100_000, prof.n);
        let picks = pick_rows(&sweep.rows, |r| r.delta_n, SAMPLE_COUNT);
        let mut rng = self.rng(11);
        let (mut chains, mut chain_bad, mut points, mut point_bad) = (0, 0, 0, 0);
        let (lo, hi) = (prof.delta(l).ln(), prof.delta0(l).ln());
        for row in &picks {
            let map = base.with_a(row.a);
            let orbits = CriticalOrbits::compute(&map, prof.n + 1)?;
            for ch in return_chain(&orbits, &prof, l)? {
                chains += 1;
                chain_bad += (!ch.holds) as usize;
            }
            for &c in &map.critical().points {
                for _ in 0..4 {
                    let r = (lo + (hi - lo) * rng.gen::<f64>()).exp();
                    let y = c + if rng.gen() { r } else { -r };
                    match delta0_structure_check(&map, &prof, &orbits, y) {
                        Ok(rep) => {
                            points += 1;
                            point_bad += (!rep.pass) as usize;
                        }
                        Err(Error::Inapplicable(_) | Error::HaltedOrbit { .. }) => {}
                        Err(e) => return Err(e),
                    }
                }
            }
        }
        let detail = format!(
            "{} Delta_N parameters (N=5, alpha={}); chain fails {chain_bad}/{chains}; annulus points fail {point_bad}/{points}",
            picks.len(),
            prof.alpha
        );
        Ok(t.finish(11, "return chain", chains + points, chain_bad + point_bad, true, None, detail))
    }

    pub fn run(&self, id: u8) -> Result<Outcome> {
        match id {
            1 => self.criterion_1(),
            2 => self.criterion_2(),
            3 => self.criterion_3(),
            4 => self.criterion_4(),
            5 => self.criterion_5(),
            6 => self.criterion_6(),
            7 => self.criterion_7(),
            8 => self.criterion_8(),
            9 => self.criterion_9(),
            10 => self.criterion_10(),
            11 => self.criterion_11(),
            _ => Err(Error::InvalidParams(format!("no criterion {id}"))),
        }
    }
}

/// Deterministic artifacts of a battery run: `(file name, bytes)`.
pub fn artifacts(battery: &Battery, outcomes: &[Outcome]) -> Result<Vec<(String, Vec<u8>)>> {
    #[derive(Serialize)]
    struct Summary<'a> {
        seed: u64,
        phi: &'a str,
        desk_profile: ConstantsProfile,
        outcomes: &'a [Outcome],
    }
    let mut files = Vec::new();
    let summary = Summary { seed: battery.cfg.seed, phi: battery.cfg.phi.name(), desk_profile: battery.cfg.desk, outcomes };
    files.push(("summary.json".to_string(), serde_json::to_vec_pretty(&summary)?));
    let sample = battery.sample_sweep()?;
    let mut csv = Vec::new();
    sample.write_csv(&mut csv)?;
    files.push(("sample_sweep.csv".to_string(), csv));
    files.push(("sample_sweep.json".to_string(), serde_json::to_vec_pretty(sample)?));
    let (trend, census) = battery.trend()?;
    files.push(("trend.json".to_string(), serde_json::to_vec_pretty(&(trend, census))?));
    Ok(files)
}
