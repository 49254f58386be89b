//! Numerical laboratory for measurable dynamics of smooth interval maps.
//!
//! The crate is organised around a validated [`MapSpec`]: orbit analysis
//! and orbit classification live in [`orbit_engine`], pull-back
//! chains and depth certificates in [`chain_lab`], grid densities and
//! distortion probes in [`density_lab`], and the attractor / ergodic /
//! conservative decompositions in [`attractor_decomposer`].

pub mod attractor_decomposer;
pub mod chain_lab;
pub mod density_lab;
pub mod error;
pub mod interval;
pub mod map_model;
pub mod orbit_engine;
pub mod rng;

pub use error::{LabError, Result};
pub use interval::Interval;
pub use map_model::{CriticalKind, CriticalPoint, FamilyHandle, MapFile, MapSpec, ValidationReport};

/// Feigenbaum accumulation parameter of the logistic family.
pub const FEIGENBAUM_LOGISTIC: f64 = 3.569_945_671_870_944_9;
