//! Published reference allocations for `n = 100`.
//!
//! Each row gives the optimized ratios at one total received power together
//! with the worst-user PER they achieve. The first row of every
//! `(users, rate)` block targets a PER of about `1e-2` and is what the
//! throughput and cell planning experiments use.

use crate::error::{Error, Result};
use crate::fbl::CodeParams;
use crate::sic::SystemConfig;
use crate::db_to_linear;

/// Codeword length of every reference row.
pub const REFERENCE_BLOCKLENGTH: u32 = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRow {
    pub users: usize,
    pub rate: f64,
    pub max_per: f64,
    /// Ratios as published, rounded to two decimals.
    pub alphas: &'static [f64],
    pub p0_db: f64,
}

impl ReferenceRow {
    pub fn code(&self) -> CodeParams {
        CodeParams::from_rate(REFERENCE_BLOCKLENGTH, self.rate).expect("reference rates are valid")
    }

    /// Ratios rescaled to sum to one; rounding leaves some rows slightly off.
    pub fn normalized_alphas(&self) -> Vec<f64> {
        let total: f64 = self.alphas.iter().sum();
        self.alphas.iter().map(|a| a / total).collect()
    }

    /// The row's configuration at its own `P0`.
    pub fn system(&self) -> SystemConfig {
        self.system_at(self.p0_db)
    }

    /// The row's ratios and code at another `P0`.
    pub fn system_at(&self, p0_db: f64) -> SystemConfig {
        SystemConfig::new(self.normalized_alphas(), db_to_linear(p0_db), self.code()).expect("reference rows are valid")
    }
}

macro_rules! row {
    ($users:expr, $rate:expr, $per:expr, [$($a:expr),+], $p0:expr) => {
        ReferenceRow { users: $users, rate: $rate, max_per: $per, alphas: &[$($a),+], p0_db: $p0 }
    };
}

pub const REFERENCE_ROWS: [ReferenceRow; 24] = [
    row!(3, 0.25, 7.5e-3, [0.29, 0.35, 0.36], -2.02),
    row!(3, 0.25, 1e-3, [0.29, 0.35, 0.36], -0.77),
    row!(3, 0.25, 1e-4, [0.28, 0.34, 0.38], -0.07),
    row!(3, 0.25, 8.85e-6, [0.27, 0.34, 0.39], 0.69),
    row!(3, 0.5, 1e-2, [0.27, 0.32, 0.41], 1.85),
    row!(3, 0.5, 1e-3, [0.25, 0.33, 0.42], 2.85),
    row!(3, 0.5, 1e-4, [0.24, 0.33, 0.43], 3.63),
    row!(3, 0.5, 8.97e-6, [0.23, 0.32, 0.45], 4.38),
    row!(4, 0.25, 1e-2, [0.20, 0.24, 0.25, 0.31], 0.0),
    row!(4, 0.25, 9e-4, [0.20, 0.23, 0.25, 0.32], 1.36),
    row!(4, 0.25, 9.24e-5, [0.19, 0.22, 0.26, 0.33], 2.24),
    row!(4, 0.25, 8.97e-6, [0.18, 0.22, 0.25, 0.35], 3.18),
    row!(4, 0.5, 1e-2, [0.17, 0.21, 0.27, 0.34], 4.33),
    row!(4, 0.5, 8.8e-4, [0.15, 0.22, 0.28, 0.35], 5.59),
    row!(4, 0.5, 9.974e-5, [0.14, 0.21, 0.28, 0.37], 6.57),
    row!(4, 0.5, 1e-5, [0.13, 0.21, 0.28, 0.38], 7.66),
    row!(5, 0.25, 9.8e-3, [0.15, 0.17, 0.19, 0.23, 0.26], 1.76),
    row!(5, 0.25, 9.3e-4, [0.14, 0.16, 0.19, 0.24, 0.27], 3.09),
    row!(5, 0.25, 1e-4, [0.13, 0.16, 0.2, 0.24, 0.27], 4.04),
    row!(5, 0.25, 9.596e-6, [0.13, 0.15, 0.19, 0.24, 0.29], 5.12),
    row!(5, 0.5, 1e-2, [0.11, 0.15, 0.2, 0.24, 0.3], 6.78),
    row!(5, 0.5, 9.1e-4, [0.1, 0.14, 0.21, 0.24, 0.31], 8.54),
    row!(5, 0.5, 9.5e-5, [0.07, 0.09, 0.15, 0.18, 0.51], 9.83),
    row!(5, 0.5, 9.55e-6, [0.07, 0.1, 0.14, 0.18, 0.51], 11.22),
];

/// Rows for `users` at code rate `rate`, in order of decreasing PER.
pub fn reference_rows(users: usize, rate: f64) -> impl Iterator<Item = &'static ReferenceRow> {
    REFERENCE_ROWS.iter().filter(move |r| r.users == users && (r.rate - rate).abs() < 1e-9)
}

/// The `1e-2` allocation for `users` at `rate`.
pub fn reference_allocation(users: usize, rate: f64) -> Result<&'static ReferenceRow> {
    reference_rows(users, rate)
        .next()
        .ok_or_else(|| Error::InvalidConfig(format!("no reference allocation for N = {users}, R = {rate}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_rows_per_block() {
        for users in 3..=5 {
            for rate in [0.25, 0.5] {
                assert_eq!(reference_rows(users, rate).count(), 4);
                let first = reference_allocation(users, rate).unwrap();
                assert!(first.max_per > 5e-3);
            }
        }
        assert!(reference_allocation(2, 0.25).is_err());
    }

    #[test]
    fn rows_are_near_the_simplex() {
        for r in &REFERENCE_ROWS {
            let total: f64 = r.alphas.iter().sum();
            assert!((total - 1.0).abs() <= 0.0100001, "{total}");
            let s: f64 = r.normalized_alphas().iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert_eq!(r.system().code.n, 100);
        }
    }
}
