//! Switching multiple-disorder detection for a Brownian motion whose drift
//! follows a hidden two-state regime.
//!
//! The crate computes the optimal alarm thresholds and Bayesian risk
//! functions for two formulations of the problem: a telegraph-signal regime
//! (`Formulation::F1`) and a regime whose next switch can only happen after
//! the previous alarm (`Formulation::F2`). The closed forms are built from
//! Heun's double confluent function and Kummer's confluent hypergeometric
//! functions, and a Monte Carlo simulator of the full sequential procedure
//! is provided for validation.

pub mod cli;
pub mod model;
pub mod sim;
pub mod solver;
pub mod specfun;

pub use model::{DerivedConstants, Formulation, Model, ModelParams};
pub use solver::{Admissibility, ThresholdSolution};
pub use specfun::SeriesControl;

pub use sim::{PathRecord, RiskEstimate, SimConfig};
