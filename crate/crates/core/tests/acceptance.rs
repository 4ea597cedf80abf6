//! Acceptance battery. Prints one PASS/FAIL line per criterion and exits
//! non-zero when an attainable criterion fails.

use std::path::Path;
use std::process::{Command, ExitCode};

use circle_lab::verify::limits::*;
use circle_lab::verify::{Battery, VerifyConfig, HORIZON, SAMPLE_COUNT, UNATTAINABLE};

fn pin_limits() -> Vec<String> {
    let mut bad = Vec::new();
    let mut eq = |name: &str, got: f64, want: f64| {
        if got != want {
            bad.push(format!("{name}: {got} != {want}"));
        }
    };
    eq("bracket L[0]", BRACKET_LS[0], 1e2);
    eq("bracket L[1]", BRACKET_LS[1], 1e3);
    eq("bracket L[2]", BRACKET_LS[2], 1e4);
    eq("bracket samples", BRACKET_SAMPLES as f64, 1e5);
    eq("bracket seconds", BRACKET_SECONDS, 10.0);
    eq("distortion L", DISTORTION_L, 1e4);
    eq("distortion samples", DISTORTION_SAMPLES as f64, 100.0);
    eq("distortion max n", DISTORTION_MAX_N as f64, 50.0);
    eq("distortion pairs", DISTORTION_PAIRS as f64, 64.0);
    eq("distortion ratio", DISTORTION_MAX_RATIO, 2.0);
    eq("distortion seconds", DISTORTION_SECONDS, 30.0);
    eq("initial L[0]", INITIAL_LS[0], 1e4);
    eq("initial L[1]", INITIAL_LS[1], 1e5);
    eq("initial N", INITIAL_N as f64, 5.0);
    eq("initial sigma exponent", INITIAL_SIGMA_EXP, 1.0 / 6.0);
    eq("initial grid", INITIAL_M as f64, 1e6);
    eq("initial bound exponent", INITIAL_BOUND_EXP, 1.0 / 9.0);
    eq("initial seconds", INITIAL_SECONDS, 300.0);
    eq("outside L", OUTSIDE_L, 1e4);
    eq("outside segments", OUTSIDE_SEGMENTS as f64, 100.0);
    eq("outside max n", OUTSIDE_MAX_N as f64, 500.0);
    eq("sampled parameters", SAMPLED_PARAMETERS as f64, 200.0);
    eq("sample count", SAMPLE_COUNT as f64, 200.0);
    eq("transversality k", TRANSVERSALITY_K as f64, 200.0);
    eq("horizon", HORIZON as f64, 200.0);
    eq("ratio low", RATIO_LOW, 0.5);
    eq("ratio high", RATIO_HIGH, 2.0);
    eq("tau oracle k", TAU_ORACLE_K as f64, 15.0);
    eq("tau oracle rel", TAU_ORACLE_REL, 1e-4);
    eq("oracle orbits", ORACLE_ORBITS as f64, 100.0);
    eq("oracle max n", ORACLE_MAX_N as f64, 20.0);
    eq("oracle rel", ORACLE_REL, 1e-10);
    eq("oracle max returns", ORACLE_MAX_RETURNS as f64, 20.0);
    eq("trend L[0]", TREND_LS[0], 1e3);
    eq("trend L[1]", TREND_LS[1], 1e4);
    eq("trend L[2]", TREND_LS[2], 1e5);
    eq("trend grid", TREND_M as f64, 1e5);
    eq("trend n", TREND_N as f64, 200.0);
    eq("trend seconds", TREND_SECONDS, 900.0);
    eq("chain L", CHAIN_L, 1e4);
    eq("chain N", CHAIN_N as f64, 5.0);
    bad
}

fn verify_run(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_circle-lab"))
        .args(["verify", "--seed", "0", "--out"])
        .arg(dir)
        .output()
        .map_err(|e| e.to_string())?
        .status;
    if status.code() != Some(0) && status.code() != Some(1) {
        return Err(format!("verify exited with {status}"));
    }
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| e.to_string())?
        .map(|e| {
            let e = e.map_err(|e| e.to_string())?;
            let bytes = std::fs::read(e.path()).map_err(|e| e.to_string())?;
            Ok((e.file_name().to_string_lossy().into_owned(), bytes))
        })
        .collect::<Result<_, String>>()?;
    files.sort();
    Ok(files)
}

fn determinism() -> (bool, String) {
    let tmp = match tempfile::tempdir() {
        Ok(t) => t,
        Err(e) => return (false, e.to_string()),
    };
    let (a, b) = (tmp.path().join("first"), tmp.path().join("second"));
    match (verify_run(&a), verify_run(&b)) {
        (Ok(x), Ok(y)) => {
            let names: Vec<_> = x.iter().map(|f| f.0.clone()).collect();
            let same = !x.is_empty() && x == y;
            (same, format!("{} artifacts {}: {}", x.len(), if same { "identical" } else { "differ" }, names.join(", ")))
        }
        (Err(e), _) | (_, Err(e)) => (false, e),
    }
}

fn main() -> ExitCode {
    let mut failed = Vec::new();

    let pins = pin_limits();
    if pins.is_empty() {
        println!("PASS [ 0] tolerances pinned");
    } else {
        println!("FAIL [ 0] tolerances changed: {}", pins.join("; "));
        failed.push(0u8);
    }

    let battery = Battery::new(VerifyConfig::default());
    for id in 1..=11u8 {
        match battery.run(id) {
            Ok(o) => {
                let note = if UNATTAINABLE.contains(&id) {
                    if o.pass { " [expected to fail, passed]" } else { " [unattainable, see README]" }
                } else {
                    ""
                };
                println!("{}{note}", o.line());
                if !o.pass && !UNATTAINABLE.contains(&id) {
                    failed.push(id);
                }
            }
            Err(e) => {
                println!("FAIL [{id:>2}] error: {e}");
                failed.push(id);
            }
        }
    }

    let (same, detail) = determinism();
    println!("{} [12] reproducibility: {detail}", if same { "PASS" } else { "FAIL" });
    if !same {
        failed.push(12);
    }

    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("attainable criteria failing: {failed:?}");
        ExitCode::FAILURE
    }
}
