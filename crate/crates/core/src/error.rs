//! Errors shared by every module.

use thiserror::Error;

/// Errors raised by the analysis, optimization and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A numeric argument fell outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration failed validation.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The Markov chain would be larger than the dense representation allows.
    #[error("{users} users exceed the supported maximum of {max}")]
    TooManyUsers { users: usize, max: usize },

    /// A transition row did not sum to one; signals a transition enumeration bug.
    #[error("row {state} of the transition matrix sums to {sum}")]
    RowSum { state: usize, sum: f64 },

    /// The stationary linear solve failed or left too large a residual.
    #[error("stationary solve failed (residual {residual:e}): {reason}")]
    Stationary { residual: f64, reason: String },

    /// No blocklength up to the cap met the target error rate.
    #[error("infeasible at this SNR: best max PER {best_per:e} at n = {best_n} (cap {cap})")]
    Infeasible { best_per: f64, best_n: u32, cap: u32 },

    /// A user position lies outside the cell.
    #[error("distance {distance} m is outside the cell radius {r_outer} m")]
    OutOfCell { distance: f64, r_outer: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
