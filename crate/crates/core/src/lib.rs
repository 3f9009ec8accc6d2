//! Feynman-Kac interacting particle systems on finite and general state spaces:
//! exact oracles, explicit error bounds, interacting simulated annealing and its
//! adaptive variant.

pub mod adaptive;
pub mod bounds;
pub mod error;
pub mod estimators;
pub mod generators;
pub mod harness;
pub mod measure;
pub mod ips;
pub mod isa;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
pub use measure::{BoundedFunction, FiniteDistribution, KernelMatrix, PotentialVector};
