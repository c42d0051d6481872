//! Finite-volume simulator and numerical-verification harness for the
//! two-dimensional Keller-Segel chemotaxis system with a Gompertz growth
//! source, in both the parabolic-elliptic (tau = 0) and fully parabolic
//! (tau = 1) regimes.
//!
//! The scheme is a positivity-aware IMEX finite-volume method: implicit
//! five-point diffusion, explicit donor-cell upwind chemotactic flux
//! (exactly conservative), explicit reaction with a positivity-respecting
//! adaptive time step. On top of the solver sit diagnostics for every
//! monitored functional (mass, entropy, signal gradient energy, the
//! Lyapunov functional), a closed-form mass envelope, a bounded-vs-blow-up
//! run classifier, a Gagliardo-Nirenberg constant estimator, and a sweep
//! harness with CSV persistence.

pub mod analysis;
pub mod config;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod kinetics;
pub mod linsolve;
pub mod mesh;
pub mod stepper;

pub use error::{KsError, Result};
