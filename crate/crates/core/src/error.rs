use thiserror::Error;

/// Why an orbit stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum HaltReason {
    SingularHit,
    CriticalHit,
}

impl std::fmt::Display for HaltReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HaltReason::SingularHit => f.write_str("SingularHit"),
            HaltReason::CriticalHit => f.write_str("CriticalHit"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("orbit entered the singular set at x = {x}")]
    SingularHit { x: f64 },
    #[error("orbit entered the critical set at x = {x}")]
    CriticalHit { x: f64 },
    #[error("zero of phi at x = {x} has vanishing derivative")]
    DegenerateZero { x: f64 },
    #[error("critical point of phi at x = {x} has vanishing second derivative")]
    DegenerateCritical { x: f64 },
    #[error("point set is empty")]
    EmptySet,
    #[error("index range [{i}, {j}] out of range for record of length {len}")]
    IndexOutOfRange { i: usize, j: usize, len: usize },
    #[error("orbit halted at step {step} ({reason})")]
    HaltedOrbit { step: usize, reason: HaltReason },
    #[error("record too short: {len} steps, need {need}")]
    TooShort { len: usize, need: usize },
    #[error("hypothesis not satisfied: {0}")]
    Inapplicable(String),
    #[error("time {0} is not a deep return")]
    NotDeep(usize),
    #[error("image point lies outside the first window (distance {dist}, D_1 = {d1})")]
    OutsideWindow { dist: f64, d1: f64 },
    #[error("invalid constants profile: {0}")]
    InvalidProfile(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("unknown phi `{0}`")]
    UnknownPhi(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
