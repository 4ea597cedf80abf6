//! Numerical laboratory for the circle maps `f_a(x) = x + a + L ln|Φ(x)| mod 1`.
//!
//! The core types are generic over the scalar (`f32` or `f64`); the aliases
//! below fix the double-precision instantiation used by the sweeps and the CLI.

pub mod cli;
pub mod conditions;
pub mod error;
pub mod map;
pub mod orbit;
pub mod phi;
pub mod profile;
pub mod scalar;
pub mod structure;
pub mod sweep;
pub mod verify;

pub use error::{Error, HaltReason, Result};
pub use profile::ConstantsProfile;
pub use scalar::Scalar;

pub type Map = map::CircleMap<f64>;
pub type Map32 = map::CircleMap<f32>;
pub type Phi = phi::PhiSpec<f64>;
pub type Phi32 = phi::PhiSpec<f32>;
pub type Orbit = orbit::OrbitRecord<f64>;
pub type Orbit32 = orbit::OrbitRecord<f32>;
pub type Windows = orbit::WindowTable<f64>;
pub type CriticalSet = map::PointSet<f64>;
pub type Tau = conditions::TauRecord<f64>;
