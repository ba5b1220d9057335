//! Simulation laboratory for learning-based man-in-the-middle attacks on
//! discrete-time LTI control loops.
//!
//! The lab models a plant `X_{k+1} = A X_k + U_k + W_k`, an attacker that
//! first eavesdrops to fit a least-squares estimate `Â` of `A` and then
//! hijacks both channels while feeding the controller a fictitious state
//! sequence `V_{k+1} = Â_k V_k + U_k + W̃_k`, and a controller that runs
//! anomaly detectors (variance test, covariance test, SPRT) on its feedback.
//!
//! On top of the simulators sit the measurement tools: the deception-cost
//! curve `C(n)`, its KL-divergence identity, the critical horizon `n₀`, and
//! deception-time / exploration-length / control-energy bound calculators,
//! all driven by a reproducible Monte-Carlo harness.
//!
//! See the `book/` guide at the repository root for a narrative tour.

pub mod attacker;
pub mod detection;
pub mod error;
pub mod harness;
pub mod lti;
pub mod metrics;
pub mod rng;
pub mod stats;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
