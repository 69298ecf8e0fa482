//! Optimal output-feedback control of Markov jump linear systems whose
//! actuation and sensing links drop packets according to finite-state Markov
//! channels.
//!
//! The crate covers the whole synthesis and verification chain:
//!
//! * [`channels`]: Markov packet-loss channels (validation, stationary
//!   distributions, sampling).
//! * [`model`]: the plant matrices and one-step stochastic dynamics.
//! * [`msops`]: second-moment operators, their Kronecker representations,
//!   spectral radii and the exact moment recursion of the estimation error.
//! * [`control_care`]: the coupled Riccati equation for state feedback with a
//!   one-step-delayed actuation-mode observation.
//! * [`filter_care`]: the coupled Riccati equation for the mode-dependent
//!   Luenberger-like observer, solved by monotone gain iteration and
//!   certified by an LMI feasibility check.
//! * [`closedloop`]: controller assembly, Monte Carlo simulation and the
//!   separation check on the augmented closed loop.

pub mod channels;
pub mod closedloop;
pub mod control_care;
mod error;
pub mod filter_care;
pub mod linalg;
pub mod model;
pub mod msops;
pub mod rng;

pub use channels::{MarkovChannel, ModePath, TransitionMatrix};
pub use closedloop::{ClosedLoopMatrices, SimOptions, SimulationTrace};
pub use control_care::{solve_control_care, ControlCareSolution};
pub use error::{Error, Result};
pub use filter_care::{solve_filter_care, FilterCareSolution};
pub use model::MjlsModel;
pub use msops::{BlockCollection, MomentState, OperatorMatrix};

/// Default convergence tolerance of the Riccati solvers.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Default iteration cap of the Riccati solvers.
pub const DEFAULT_MAX_ITER: usize = 100_000;

/// Crate version, recorded in report provenance.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
