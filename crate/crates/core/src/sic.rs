//! SINR bookkeeping for successive interference cancellation with MRC.
//!
//! Noise power is fixed to one, so received powers are SNRs. A user in phase
//! `R` has two copies of its packet at the base station: the retransmission,
//! interfered by every user not yet decoded, and the original copy from the
//! previous slot, interfered only by users in `F` and by users in `R` that are
//! not yet decoded. The two SINRs add under maximum ratio combining.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbl::CodeParams;

/// Maximum number of transmissions per packet (one retransmission).
pub const MAX_TRANSMISSIONS: usize = 2;

const SIMPLEX_TOLERANCE: f64 = 1e-9;

/// HARQ phase of a single user at the start of a slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum UserPhase {
    /// Last packet delivered; a new packet goes out next.
    S,
    /// Last attempt failed; the packet is retransmitted next.
    R,
    /// Packet dropped after both transmissions; a new packet goes out next.
    F,
}

impl UserPhase {
    pub const ALL: [UserPhase; 3] = [UserPhase::S, UserPhase::R, UserPhase::F];

    pub fn digit(self) -> usize {
        match self {
            UserPhase::S => 0,
            UserPhase::R => 1,
            UserPhase::F => 2,
        }
    }

    pub fn from_digit(digit: usize) -> Option<Self> {
        Self::ALL.get(digit).copied()
    }

    /// Whether the user sends a fresh packet in the coming slot.
    pub fn sends_new_packet(self) -> bool {
        self != UserPhase::R
    }

    /// Phase after a failed decoding attempt.
    pub fn after_failure(self) -> Self {
        match self {
            UserPhase::R => UserPhase::F,
            UserPhase::S | UserPhase::F => UserPhase::R,
        }
    }
}

impl fmt::Display for UserPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let c = match self {
            UserPhase::S => "S",
            UserPhase::R => "R",
            UserPhase::F => "F",
        };
        f.write_str(c)
    }
}

/// Joint phase vector of all users, one Markov state.
///
/// States are numbered base 3 with user 0 as the least significant digit.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SystemState {
    phases: Vec<UserPhase>,
}

impl SystemState {
    pub fn new(phases: Vec<UserPhase>) -> Self {
        Self { phases }
    }

    pub fn all_success(users: usize) -> Self {
        Self { phases: vec![UserPhase::S; users] }
    }

    /// Inverse of [`SystemState::index`].
    pub fn from_index(mut index: usize, users: usize) -> Self {
        let mut phases = Vec::with_capacity(users);
        for _ in 0..users {
            phases.push(UserPhase::ALL[index % 3]);
            index /= 3;
        }
        Self { phases }
    }

    /// Base-3 index with `S = 0, R = 1, F = 2`; user 0 is the least significant digit.
    pub fn index(&self) -> usize {
        self.phases.iter().rev().fold(0, |acc, p| acc * 3 + p.digit())
    }

    pub fn phases(&self) -> &[UserPhase] {
        &self.phases
    }

    pub fn users(&self) -> usize {
        self.phases.len()
    }

    /// Iterates over all `3^users` states in index order.
    pub fn all(users: usize) -> impl Iterator<Item = SystemState> {
        (0..state_count(users)).map(move |i| SystemState::from_index(i, users))
    }
}

impl fmt::Display for SystemState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for p in &self.phases {
            write!(f, "{p}")?;
        }
        Ok(())
    }
}

pub fn state_count(users: usize) -> usize {
    3usize.pow(users as u32)
}

/// Power-domain NOMA configuration shared by all users.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemConfig {
    /// Power splitting ratios; user `i` is received at `alphas[i] * p0`.
    pub alphas: Vec<f64>,
    /// Total received power at the base station (linear, noise = 1).
    pub p0: f64,
    pub code: CodeParams,
}

impl SystemConfig {
    pub fn new(alphas: Vec<f64>, p0: f64, code: CodeParams) -> Result<Self> {
        let cfg = Self { alphas, p0, code };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() {
            return Err(Error::InvalidConfig("at least one user is required".into()));
        }
        if let Some(a) = self.alphas.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(Error::InvalidConfig(format!("power ratios must be positive, got {a}")));
        }
        let total: f64 = self.alphas.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::InvalidConfig(format!("power ratios must sum to 1, got {total}")));
        }
        if !(self.p0.is_finite() && self.p0 > 0.0) {
            return Err(Error::InvalidConfig(format!("P0 must be positive, got {}", self.p0)));
        }
        if self.code.k == 0 || self.code.n == 0 {
            return Err(Error::InvalidConfig("code parameters must be positive".into()));
        }
        Ok(())
    }

    pub fn users(&self) -> usize {
        self.alphas.len()
    }

    pub fn received_powers(&self) -> PowerProfile {
        PowerProfile(self.alphas.iter().map(|a| a * self.p0).collect())
    }
}

/// Received powers `P_i` of all users, linear.
///
/// Unlike [`SystemConfig`] the powers need not come from a ratio vector on the
/// simplex; uncoordinated users may pick the same level.
#[derive(Debug, Clone, PartialEq)]
pub struct PowerProfile(Vec<f64>);

impl PowerProfile {
    pub fn new(powers: Vec<f64>) -> Result<Self> {
        if let Some(p) = powers.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
            return Err(Error::InvalidConfig(format!("received powers must be finite and non-negative, got {p}")));
        }
        Ok(Self(powers))
    }

    pub fn powers(&self) -> &[f64] {
        &self.0
    }

    pub fn users(&self) -> usize {
        self.0.len()
    }

    /// SINR of every user before any cancellation.
    pub fn initial_sinr(&self, phases: &[UserPhase]) -> Vec<f64> {
        let decoded = vec![false; self.users()];
        (0..self.users()).map(|j| self.sinr_unchecked(phases, &decoded, j)).collect()
    }

    /// SINR of user `j` once the users flagged in `decoded` were cancelled.
    pub fn stage_sinr(&self, phases: &[UserPhase], decoded: &[bool], j: usize) -> Result<f64> {
        if decoded[j] {
            return Err(Error::Domain(format!("user {j} is already decoded")));
        }
        Ok(self.sinr_unchecked(phases, decoded, j))
    }

    fn sinr_unchecked(&self, phases: &[UserPhase], decoded: &[bool], j: usize) -> f64 {
        let own = self.0[j];
        // Interference sums are formed as (set total - own power) so users with
        // equal powers see bit-identical SINRs and ties break by index.
        let remaining: f64 = self.0.iter().zip(decoded).filter(|(_, d)| !**d).map(|(p, _)| p).sum();
        let mut sinr = own / ((remaining - own).max(0.0) + 1.0);
        if phases[j] == UserPhase::R {
            let original: f64 = self
                .0
                .iter()
                .zip(phases.iter().zip(decoded))
                .filter(|(_, (ph, d))| **ph == UserPhase::F || (**ph == UserPhase::R && !**d))
                .map(|(p, _)| p)
                .sum();
            sinr += own / ((original - own).max(0.0) + 1.0);
        }
        sinr
    }

    /// Greedy SIC order: at each stage decode the remaining user with the
    /// highest SINR, lowest index on ties.
    pub fn decoding_order(&self, phases: &[UserPhase]) -> DecodingOrder {
        let users = self.users();
        let mut decoded = vec![false; users];
        let mut order = Vec::with_capacity(users);
        let mut stage_sinrs = Vec::with_capacity(users);
        for _ in 0..users {
            let mut best: Option<(usize, f64)> = None;
            for j in (0..users).filter(|&j| !decoded[j]) {
                let sinr = self.sinr_unchecked(phases, &decoded, j);
                if best.is_none_or(|(_, b)| sinr > b) {
                    best = Some((j, sinr));
                }
            }
            let (j, sinr) = best.expect("at least one undecoded user");
            decoded[j] = true;
            order.push(j);
            stage_sinrs.push(sinr);
        }
        DecodingOrder { order, stage_sinrs }
    }
}

/// SIC order `[I_1, …, I_N]` of a state together with the SINR each user
/// sees at its own stage, assuming all earlier stages succeeded.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodingOrder {
    pub order: Vec<usize>,
    pub stage_sinrs: Vec<f64>,
}

pub fn initial_sinr(state: &SystemState, cfg: &SystemConfig) -> Vec<f64> {
    cfg.received_powers().initial_sinr(state.phases())
}

/// SINR of user `j` after the users in `decoded` have been cancelled.
pub fn stage_sinr(state: &SystemState, decoded: &[usize], j: usize, cfg: &SystemConfig) -> Result<f64> {
    let mut mask = vec![false; cfg.users()];
    for &d in decoded {
        mask[d] = true;
    }
    cfg.received_powers().stage_sinr(state.phases(), &mask, j)
}

pub fn decoding_order(state: &SystemState, cfg: &SystemConfig) -> DecodingOrder {
    cfg.received_powers().decoding_order(state.phases())
}
