//! Command-line front end.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::conditions::evaluate_conditions;
use crate::error::{Error, Result};
use crate::map::{CircleMap, DerivativeBracket};
use crate::orbit::{fmt17, iterate_orbit, write_orbit_csv, CriticalOrbits};
use crate::phi::{audit_phi, PhiRegistry};
use crate::profile::ConstantsProfile;
use crate::structure::{build_itinerary, detect_deep_returns, write_itinerary_json, ReturnRadius};
use crate::sweep::{grid_sweep, interval_refine, trend_study, DEFAULT_WIDTH_MIN};
use crate::verify::{artifacts, Battery, VerifyConfig, UNATTAINABLE};

#[derive(Debug, Parser)]
#[command(name = "circle-lab", version, about = "Circle maps with logarithmic singularities")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Radius {
    Delta,
    Delta0,
    Root20,
}

impl From<Radius> for ReturnRadius {
    fn from(r: Radius) -> Self {
        match r {
            Radius::Delta => ReturnRadius::Delta,
            Radius::Delta0 => ReturnRadius::Delta0,
            Radius::Root20 => ReturnRadius::DeltaRoot20,
        }
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// JSON file with any of the flag values below.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub phi: Option<String>,
    #[arg(long = "L", global = true)]
    pub l: Option<f64>,
    /// `paper`, `desk`, or a JSON file with λ, α, N, sigma_exp.
    #[arg(long, global = true)]
    pub profile: Option<String>,
    #[arg(long, global = true)]
    pub a: Option<f64>,
    #[arg(long, global = true)]
    pub x0: Option<f64>,
    /// Critical point index.
    #[arg(long, global = true)]
    pub c: Option<usize>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long = "M", global = true)]
    pub m: Option<usize>,
    /// Comma-separated list of L values for `measure`.
    #[arg(long = "Ls", global = true, value_delimiter = ',')]
    pub ls: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub radius: Option<Radius>,
    #[arg(long, global = true)]
    pub depth: Option<u32>,
    #[arg(long, global = true)]
    pub width_min: Option<f64>,
    /// Refinement generations are `N, N + stride, …, n`.
    #[arg(long, global = true)]
    pub stride: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Critical and singular sets and the derivative-bracket constants.
    Roots,
    /// Orbit record of `x0` (default: the critical value of `c`).
    Orbit,
    /// Free returns, bound periods and deep returns of a critical orbit.
    Itinerary,
    /// Condition report for one parameter.
    Check,
    /// Grid sweep over `a = k/M`.
    Sweep,
    /// Interval refinement of the good-parameter sets.
    Refine,
    /// Good fraction against `L`.
    Measure,
    /// Full property battery.
    Verify,
}

/// Profile given by name or inline.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProfileSpec {
    Named(String),
    Inline(ConstantsProfile),
}

/// Resolved settings; a config file uses the same field names.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub phi: String,
    #[serde(rename = "L")]
    pub l: f64,
    pub profile: ProfileSpec,
    pub a: f64,
    pub x0: Option<f64>,
    pub c: usize,
    pub n: Option<usize>,
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(rename = "Ls")]
    pub ls: Vec<f64>,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub threads: Option<usize>,
    pub radius: Radius,
    pub depth: u32,
    pub width_min: f64,
    pub stride: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            phi: "sin2pi".into(),
            l: 1e4,
            profile: ProfileSpec::Named("desk".into()),
            a: 0.0,
            x0: None,
            c: 0,
            n: None,
            m: 1000,
            ls: vec![1e3, 1e4, 1e5],
            seed: 0,
            out: None,
            format: None,
            threads: None,
            radius: Radius::Delta,
            depth: 12,
            width_min: DEFAULT_WIDTH_MIN,
            stride: None,
        }
    }
}

impl RunConfig {
    pub fn from_args(args: &CommonArgs) -> Result<Self> {
        let mut cfg = match &args.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                serde_json::from_str(&text).map_err(|e| Error::InvalidParams(format!("{}: {e}", path.display())))?
            }
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($field:ident) => {
                if let Some(v) = args.$field.clone() {
                    cfg.$field = v;
                }
            };
            (opt $field:ident) => {
                if let Some(v) = args.$field.clone() {
                    cfg.$field = Some(v);
                }
            };
        }
        take!(phi);
        take!(l);
        take!(a);
        take!(c);
        take!(m);
        take!(ls);
        take!(seed);
        take!(radius);
        take!(depth);
        take!(width_min);
        take!(opt x0);
        take!(opt n);
        take!(opt out);
        take!(opt format);
        take!(opt threads);
        take!(opt stride);
        if let Some(p) = &args.profile {
            cfg.profile = ProfileSpec::Named(p.clone());
        }
        Ok(cfg)
    }

    pub fn resolve_profile(&self) -> Result<ConstantsProfile> {
        match &self.profile {
            ProfileSpec::Inline(p) => Ok(*p),
            ProfileSpec::Named(name) => match ConstantsProfile::by_name(name) {
                Some(p) => Ok(p),
                None => {
                    let text = fs::read_to_string(name)
                        .map_err(|e| Error::InvalidProfile(format!("{name}: not a profile name or readable file ({e})")))?;
                    serde_json::from_str(&text).map_err(|e| Error::InvalidProfile(format!("{name}: {e}")))
                }
            },
        }
    }

    /// Checks everything that does not need a computation.
    pub fn validate(&self) -> Result<ConstantsProfile> {
        if !(self.l.is_finite() && self.l >= 1.0) {
            return Err(Error::InvalidParams(format!("L must be finite and at least 1, got {}", self.l)));
        }
        if !self.a.is_finite() {
            return Err(Error::InvalidParams("a must be finite".into()));
        }
        if self.m == 0 {
            return Err(Error::InvalidParams("M must be positive".into()));
        }
        if self.ls.iter().any(|l| !(l.is_finite() && *l >= 1.0)) {
            return Err(Error::InvalidParams("every entry of Ls must be at least 1".into()));
        }
        let profile = self.resolve_profile()?;
        profile.validate(self.l)?;
        Ok(profile)
    }
}

fn is_config_error(e: &Error) -> bool {
    matches!(
        e,
        Error::InvalidProfile(_) | Error::InvalidParams(_) | Error::UnknownPhi(_) | Error::Io(_) | Error::Json(_)
    )
}

/// Runs the CLI and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let cfg = match RunConfig::from_args(&cli.common) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    let profile = match cfg.validate() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("config error: {e}");
            return 2;
        }
    };
    if let Some(t) = cfg.threads {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match dispatch(cli.command, &cfg, &profile) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            if is_config_error(&e) {
                2
            } else {
                1
            }
        }
    }
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            fs::write(p, bytes)?;
        }
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn with_extension(out: Option<&Path>, ext: &str) -> Option<PathBuf> {
    out.map(|p| p.with_extension(ext))
}

fn dispatch(cmd: Command, cfg: &RunConfig, profile: &ConstantsProfile) -> Result<i32> {
    let phi = PhiRegistry::<f64>::default().get(&cfg.phi)?;
    let map = CircleMap::new(phi.clone(), cfg.a, cfg.l)?;
    let out = cfg.out.as_deref();
    match cmd {
        Command::Roots => {
            #[derive(Serialize)]
            struct Roots {
                phi: String,
                #[serde(rename = "L")]
                l: f64,
                seed: u64,
                critical: Vec<f64>,
                singular: Vec<f64>,
                bracket: DerivativeBracket,
                audit: crate::phi::PhiAudit,
            }
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let bracket = DerivativeBracket::fit(&phi, &[cfg.l], 10_000, &mut rng)?;
            let roots = Roots {
                phi: phi.name().to_string(),
                l: cfg.l,
                seed: cfg.seed,
                critical: map.critical().points.clone(),
                singular: map.singular().points.clone(),
                bracket,
                audit: audit_phi(&phi, 4096)?,
            };
            let bytes = match cfg.format.unwrap_or(Format::Json) {
                Format::Json => serde_json::to_vec_pretty(&roots)?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["kind", "index", "x"])?;
                    for (kind, pts) in [("critical", &roots.critical), ("singular", &roots.singular)] {
                        for (i, x) in pts.iter().enumerate() {
                            w.write_record([kind.to_string(), i.to_string(), fmt17(*x)])?;
                        }
                    }
                    w.into_inner().map_err(|e| Error::Io(e.into_error()))?
                }
            };
            emit(out, &bytes)?;
        }
        Command::Orbit => {
            let x0 = match cfg.x0 {
                Some(x) => x,
                None => map.critical_value(cfg.c)?,
            };
            let rec = iterate_orbit(&map, x0, cfg.n.unwrap_or(1000));
            let bytes = match cfg.format.unwrap_or(Format::Csv) {
                Format::Csv => {
                    let mut buf = Vec::new();
                    write_orbit_csv(&rec, &mut buf)?;
                    buf
                }
                Format::Json => serde_json::to_vec_pretty(&rec)?,
            };
            emit(out, &bytes)?;
            if let Some(h) = rec.halted {
                eprintln!("orbit halted at step {}: {}", h.step, h.reason);
            }
        }
        Command::Itinerary => {
            let n = cfg.n.unwrap_or(1000);
            let orbits = CriticalOrbits::compute(&map, n + 1)?;
            let radius = ReturnRadius::from(cfg.radius).value(profile, cfg.l);
            let itin = build_itinerary(&map, &orbits, cfg.c, n, radius)?;
            let itin = detect_deep_returns(&itin, &orbits.records[cfg.c], cfg.l);
            let mut buf = Vec::new();
            write_itinerary_json(&itin, &mut buf)?;
            emit(out, &buf)?;
        }
        Command::Check => {
            let n = cfg.n.unwrap_or(200);
            let rep = evaluate_conditions(&map, profile, n)?;
            let bytes = match cfg.format.unwrap_or(Format::Json) {
                Format::Json => serde_json::to_vec_pretty(&rep)?,
                Format::Csv => {
                    let orbits = CriticalOrbits::compute(&map, (n + 1).max(profile.n))?;
                    let slope = crate::conditions::critical_lyapunov(&orbits);
                    let mut buf = Vec::new();
                    crate::conditions::write_condition_csv(&[(rep, slope)], &mut buf)?;
                    buf
                }
            };
            emit(out, &bytes)?;
        }
        Command::Sweep => {
            let n = cfg.n.unwrap_or(200);
            let s = grid_sweep(&map, profile, cfg.m, n);
            match out {
                Some(_) => {
                    let mut csv = Vec::new();
                    s.write_csv(&mut csv)?;
                    emit(with_extension(out, "csv").as_deref(), &csv)?;
                    let mut json = Vec::new();
                    s.write_json(&mut json)?;
                    emit(with_extension(out, "json").as_deref(), &json)?;
                }
                None => {
                    let mut buf = Vec::new();
                    match cfg.format.unwrap_or(Format::Json) {
                        Format::Json => s.write_json(&mut buf)?,
                        Format::Csv => s.write_csv(&mut buf)?,
                    }
                    emit(None, &buf)?;
                }
            }
        }
        Command::Refine => {
            let n = cfg.n.unwrap_or(profile.n + 100);
            if n < profile.n {
                return Err(Error::InvalidParams(format!("n = {n} is below N = {}", profile.n)));
            }
            let stride = cfg.stride.unwrap_or(((n - profile.n) / 10).max(1));
            let mut gens: Vec<usize> = (profile.n..=n).step_by(stride).collect();
            if gens.last() != Some(&n) {
                gens.push(n);
            }
            let r = interval_refine(&map, profile, &gens, cfg.depth, cfg.width_min);
            emit(out, &serde_json::to_vec_pretty(&r)?)?;
        }
        Command::Measure => {
            let n = cfg.n.unwrap_or(200);
            let (report, _) = trend_study(&map, &cfg.ls, profile, cfg.m, n)?;
            let bytes = match cfg.format.unwrap_or(Format::Csv) {
                Format::Json => serde_json::to_vec_pretty(&report)?,
                Format::Csv => {
                    let mut w = csv::Writer::from_writer(Vec::new());
                    w.write_record(["L", "deltaN_fraction", "good_fraction", "initial_bound", "survivors"])?;
                    for r in &report.rows {
                        w.write_record([
                            fmt17(r.l),
                            fmt17(r.delta_n_fraction),
                            fmt17(r.good_fraction),
                            fmt17(r.initial_bound),
                            r.survivors.to_string(),
                        ])?;
                    }
                    w.into_inner().map_err(|e| Error::Io(e.into_error()))?
                }
            };
            emit(out, &bytes)?;
            eprintln!("trend {} (tolerance {:.2e})", if report.pass { "PASS" } else { "FAIL" }, report.tolerance);
        }
        Command::Verify => return verify(cfg, profile, phi),
    }
    Ok(0)
}

fn verify(cfg: &RunConfig, profile: &ConstantsProfile, phi: crate::phi::PhiSpec<f64>) -> Result<i32> {
    let battery = Battery::new(VerifyConfig { phi, desk: *profile, seed: cfg.seed });
    let mut outcomes = Vec::new();
    for id in 1..=11 {
        let o = battery.run(id)?;
        let note = if !o.pass && UNATTAINABLE.contains(&o.id) { " (unattainable at these constants)" } else { "" };
        println!("{}{note}", o.line());
        outcomes.push(o);
    }
    if let Some(dir) = &cfg.out {
        fs::create_dir_all(dir)?;
        for (name, bytes) in artifacts(&battery, &outcomes)? {
            fs::write(dir.join(name), bytes)?;
        }
    }
    let failed = outcomes.iter().filter(|o| !o.pass).count();
    println!("{} of {} criteria PASS", outcomes.len() - failed, outcomes.len());
    Ok(if failed == 0 { 0 } else { 1 })
}
