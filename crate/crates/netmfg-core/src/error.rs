//! Error type shared by all modules.

use alloc::string::String;
use core::fmt;

/// Errors raised by construction, validation and solver routines.
#[derive(Debug, Clone, PartialEq)]
pub enum CoreError {
    /// The network description violates a structural invariant.
    InvalidNetwork(String),
    /// A point does not lie on the network.
    PointOffNetwork(String),
    /// A vertex or edge id is out of range.
    UnknownId(String),
    /// A configuration value violates a precondition.
    InvalidConfig(String),
    /// A trajectory is not admissible on the network.
    InadmissibleTrajectory(String),
    /// One time step can overshoot an edge or the truncation margin.
    CflViolation(String),
    /// The Bellman argmin saturated the control grid; the configured speed
    /// bound is too small.
    SaturatedControl(String),
    /// A target velocity is not a convex combination of ray atoms.
    Infeasible(String),
    /// Measures passed to a transport routine carry different total mass.
    MassMismatch { left: f64, right: f64 },
    /// A marginal is not a probability measure.
    NotProbability(String),
}

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidNetwork(m) => write!(f, "invalid network: {m}"),
            CoreError::PointOffNetwork(m) => write!(f, "point off network: {m}"),
            CoreError::UnknownId(m) => write!(f, "unknown id: {m}"),
            CoreError::InvalidConfig(m) => write!(f, "invalid configuration: {m}"),
            CoreError::InadmissibleTrajectory(m) => write!(f, "inadmissible trajectory: {m}"),
            CoreError::CflViolation(m) => write!(f, "CFL violation: {m}"),
            CoreError::SaturatedControl(m) => write!(f, "saturated control: {m}"),
            CoreError::Infeasible(m) => write!(f, "infeasible: {m}"),
            CoreError::MassMismatch { left, right } => {
                write!(f, "mass mismatch: {left} vs {right}")
            }
            CoreError::NotProbability(m) => write!(f, "not a probability measure: {m}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for CoreError {}
