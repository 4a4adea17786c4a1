//! Simulation library for multi-sine wireless power transfer.
//!
//! The library jointly optimizes transmit waveforms and receive combining for
//! a multi-antenna energy transmitter and a multi-antenna rectenna under a
//! polynomial diode model. Three combining strategies are covered: DC
//! combining (one rectifier per receive antenna, outputs summed after
//! rectification), RF combining with an ideal per-tone receive beamformer,
//! and RF combining with a single analog phase-shifter network shared by all
//! tones. A baseline that concentrates all transmit power on the strongest
//! tone is included for comparison, together with a Monte-Carlo harness that
//! sweeps antenna counts and tone counts over random multipath channels.

pub mod baseline;
pub mod channel;
pub mod harness;
pub mod numerics;
pub mod opt_abf;
pub mod opt_dc;
pub mod opt_rf;
pub mod rectenna;
pub mod solution;

pub use numerics::{CMatrix, CVector, C64};
pub use solution::{CombinerSolution, ReceiveCombiner, Scheme, SolveReport, SolverOpts};

/// Library-wide error type.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Inputs whose shapes do not line up.
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    /// Violated numeric precondition (symmetry, normalization, positivity).
    #[error("invalid input: {0}")]
    Invalid(String),
    /// An iterative routine ran out of iterations before meeting tolerance.
    #[error("no convergence: {0}")]
    NoConvergence(String),
    /// The interior-point solver was handed a start that is not strictly
    /// feasible.
    #[error("infeasible start: {0}")]
    InfeasibleStart(String),
    /// Newton refinement diverged. Carries the best strictly feasible point
    /// seen so the caller can fall back to it.
    #[error("solver diverged: {message}")]
    SolverDiverged {
        message: String,
        best_point: Vec<f64>,
        best_objective: f64,
    },
    /// Malformed file or configuration content.
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
