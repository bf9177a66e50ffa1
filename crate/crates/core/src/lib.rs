//! Resilient leader–follower synchronization: graph algebra, Riccati solvers, attack
//! models, observer-based H∞ control with trust weighting, and an off-policy learner.

pub mod baseline;
pub mod error;
pub mod graph;
pub mod hinf;
pub mod linalg;
pub mod observer;
pub mod plant;
pub mod riccati;
pub mod sim;
pub mod trust;

pub use error::{Error, Result};
pub mod rl;
pub mod scenario;
pub mod harness;
pub mod metrics;
pub mod output;
