//! Uplink NOMA with Chase-combining HARQ and short packets.
//!
//! [`markov::analyze`] gives each user's packet error rate, first-attempt
//! success probability and throughput. [`optimizer`] searches the power
//! splitting ratios, [`montecarlo`] simulates the protocol slot by slot, and
//! [`cellplan`] assigns ratios by position when users are not coordinated.
//! The guide in `book/` walks through all of it.

// `!(x > 0.0)` is the NaN-rejecting range check used throughout
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cellplan;
pub mod error;
pub mod fbl;
pub mod markov;
pub mod montecarlo;
pub mod optimizer;
pub mod presets;
pub mod sic;

pub use error::{Error, Result};

/// `10^(db/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

#[cfg(doctest)]
mod guide {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/analysis.md")]
    mod analysis {}
    #[doc = include_str!("../../../book/src/optimization.md")]
    mod optimization {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
}
