//! Types shared by every optimizer: scheme labels, iteration controls, and
//! the assembled solution handed back to callers.

use serde::{Deserialize, Serialize};

use crate::numerics::CVector;
use crate::rectenna::Waveform;
use crate::{Error, Result};

/// Waveform/combining scheme identifiers used across the CLI, the sweep
/// harness, and result files.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// DC combining, jointly optimized waveform.
    DcOpt,
    /// DC combining, all power on the strongest tone.
    DcAss,
    /// RF combining, optimized per-tone receive beamforming and allocation.
    RfOpt,
    /// RF combining, all power on the strongest tone.
    RfAss,
    /// RF combining through one analog phase-shifter network.
    RfAbf,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::DcOpt,
        Scheme::DcAss,
        Scheme::RfOpt,
        Scheme::RfAss,
        Scheme::RfAbf,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Scheme::DcOpt => "dc-opt",
            Scheme::DcAss => "dc-ass",
            Scheme::RfOpt => "rf-opt",
            Scheme::RfAss => "rf-ass",
            Scheme::RfAbf => "rf-abf",
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dc-opt" => Ok(Scheme::DcOpt),
            "dc-ass" => Ok(Scheme::DcAss),
            "rf-opt" => Ok(Scheme::RfOpt),
            "rf-ass" => Ok(Scheme::RfAss),
            "rf-abf" => Ok(Scheme::RfAbf),
            other => Err(Error::Parse(format!(
                "unknown scheme `{other}`; expected one of dc-opt, dc-ass, rf-opt, rf-ass, rf-abf"
            ))),
        }
    }
}

/// Stopping controls shared by the iterative solvers.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SolverOpts {
    /// Relative change threshold that ends the outer loop.
    pub epsilon: f64,
    /// Outer iteration cap.
    pub max_iterations: usize,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            epsilon: 1e-4,
            max_iterations: 100,
        }
    }
}

/// What an iterative solve did: per-iteration objective values (nondecreasing
/// up to roundoff), the final relative step, and whether the stopping rule
/// fired before the iteration cap.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub converged: bool,
    pub objective_trace: Vec<f64>,
    pub relative_step: f64,
}

/// Receive-side processing attached to a solution.
#[derive(Debug, Clone)]
pub enum ReceiveCombiner {
    /// DC combining rectifies per antenna; there is no RF combiner.
    None,
    /// One unit-norm combiner per tone.
    PerTone(Vec<CVector>),
    /// A single phase-shifter vector shared by every tone, entries of
    /// modulus 1/sqrt(Q).
    Common(CVector),
}

/// A transmit waveform plus receive combining and the achieved objective.
///
/// For DC combining the objective is the sum of per-antenna rectifier
/// voltages; for RF combining it is the rectifier voltage after combining.
#[derive(Debug, Clone)]
pub struct CombinerSolution {
    pub scheme: Scheme,
    pub waveform: Waveform,
    pub receive: ReceiveCombiner,
    pub objective: f64,
    pub report: SolveReport,
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::str::FromStr;

    #[test]
    fn scheme_names_round_trip() {
        for scheme in Scheme::ALL {
            let parsed = Scheme::from_str(scheme.as_str()).unwrap();
            assert_eq!(parsed, scheme);
            let json = serde_json::to_string(&scheme).unwrap();
            assert_eq!(json, format!("\"{}\"", scheme.as_str()));
        }
        assert!(Scheme::from_str("dc_opt").is_err());
    }

    #[test]
    fn default_opts_match_documented_values() {
        let opts = SolverOpts::default();
        assert_eq!(opts.epsilon, 1e-4);
        assert_eq!(opts.max_iterations, 100);
    }
}
