//! Markov chain of the joint HARQ phases of all users.
//!
//! A state is the phase vector `J ∈ {S, R, F}^N`. In every slot the base
//! station runs SIC in the order fixed by `J`; the first failed stage ends the
//! slot and every user from that stage on is NACKed. Users that sent a fresh
//! packet move to `R`, users that were retransmitting move to `F`. Each row of
//! the transition matrix therefore has at most `N + 1` non-zero entries.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbl::{CodeParams, PacketErrorModel};
use crate::sic::{state_count, PowerProfile, SystemConfig, SystemState, UserPhase};

/// Largest user count for which the dense `3^N × 3^N` matrix is built.
pub const MAX_USERS: usize = 8;

const ROW_SUM_TOLERANCE: f64 = 1e-6;
const STATIONARY_RESIDUAL: f64 = 1e-10;

/// Dense row-major state transition matrix.
///
/// The `N + 1` candidate successors of every row are also kept as a flat
/// list so that the analysis passes do not scan dense rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    users: usize,
    dim: usize,
    entries: Vec<f64>,
    successors: Vec<(usize, f64)>,
}

impl TransitionMatrix {
    pub fn users(&self) -> usize {
        self.users
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, from: usize, to: usize) -> f64 {
        self.entries[from * self.dim + to]
    }

    pub fn row(&self, from: usize) -> &[f64] {
        &self.entries[from * self.dim..(from + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.entries.chunks(self.dim)
    }

    /// Non-zero entries of one row as `(to, probability)`.
    pub fn successors(&self, from: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let width = self.users + 1;
        self.successors[from * width..(from + 1) * width].iter().copied().filter(|(_, p)| *p != 0.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationaryDistribution {
    pub probs: Vec<f64>,
    /// `max |Π^T p - p|` of the returned vector.
    pub residual: f64,
}

/// Long-run metrics of a single user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserMetrics {
    /// Packet error rate `e_i`.
    pub per: f64,
    /// Probability `p_s` that a fresh packet is delivered at the first attempt.
    pub success_prob: f64,
    /// Throughput `η_i` in information bits per channel use.
    pub throughput: f64,
}

impl UserMetrics {
    pub fn new(per: f64, success_prob: f64, code: &CodeParams) -> Self {
        Self { per, success_prob, throughput: throughput(per, success_prob, code) }
    }
}

/// Stage-by-stage outcome of one slot for a given starting state.
struct SlotModel {
    order: Vec<usize>,
    stage_per: Vec<f64>,
}

impl SlotModel {
    fn new(profile: &PowerProfile, phases: &[UserPhase], model: &dyn PacketErrorModel) -> Self {
        let d = profile.decoding_order(phases);
        let stage_per = d.stage_sinrs.iter().map(|&g| model.per(g).clamp(0.0, 1.0)).collect();
        Self { order: d.order, stage_per }
    }

    /// Visits the `N + 1` possible successors, keyed by the first failed stage
    /// (`N` meaning every stage succeeded).
    fn for_each_successor(&self, phases: &[UserPhase], mut visit: impl FnMut(usize, f64)) {
        let n = self.order.len();
        let place = |u: usize| 3usize.pow(u as u32);
        // start from the successor where the very first stage fails
        let mut index: usize = phases.iter().enumerate().map(|(u, p)| p.after_failure().digit() * place(u)).sum();
        let mut survive = 1.0;
        for m in 0..=n {
            let p = if m < n { survive * self.stage_per[m] } else { survive };
            visit(index, p);
            if m < n {
                survive *= 1.0 - self.stage_per[m];
                let u = self.order[m];
                index -= phases[u].after_failure().digit() * place(u);
            }
        }
    }
}

/// Transition probability `π(J → J')` for the chain defined by `cfg`.
pub fn transition_prob(from: &SystemState, to: &SystemState, cfg: &SystemConfig) -> f64 {
    transition_prob_with(from, to, &cfg.received_powers(), &cfg.code)
}

/// Transition probability evaluated case by case:
///
/// * zero if a user goes from `S` or `F` straight to `F`, or from `R` to `R`;
/// * zero if a user decodes after an earlier SIC stage failed;
/// * otherwise the product of stage outcomes up to the first failure.
pub fn transition_prob_with(
    from: &SystemState,
    to: &SystemState,
    profile: &PowerProfile,
    model: &dyn PacketErrorModel,
) -> f64 {
    let (j, j2) = (from.phases(), to.phases());
    let structurally_blocked = j.iter().zip(j2).any(|(a, b)| {
        matches!((a, b), (UserPhase::S | UserPhase::F, UserPhase::F) | (UserPhase::R, UserPhase::R))
    });
    if structurally_blocked {
        return 0.0;
    }
    let slot = SlotModel::new(profile, j, model);
    let first_failure = slot.order.iter().position(|&u| j2[u] != UserPhase::S);
    if let Some(m) = first_failure {
        if slot.order[m..].iter().any(|&u| j2[u] == UserPhase::S) {
            return 0.0;
        }
    }
    let m = first_failure.unwrap_or(slot.order.len());
    let mut prob: f64 = slot.stage_per[..m].iter().map(|e| 1.0 - e).product();
    if m < slot.order.len() {
        prob *= slot.stage_per[m];
    }
    prob
}

pub fn build_transition_matrix(cfg: &SystemConfig) -> Result<TransitionMatrix> {
    cfg.validate()?;
    build_transition_matrix_with(&cfg.received_powers(), &cfg.code)
}

/// Builds the full matrix row by row; rows are independent and filled in parallel.
pub fn build_transition_matrix_with(profile: &PowerProfile, model: &dyn PacketErrorModel) -> Result<TransitionMatrix> {
    let users = profile.users();
    if users == 0 {
        return Err(Error::InvalidConfig("at least one user is required".into()));
    }
    if users > MAX_USERS {
        return Err(Error::TooManyUsers { users, max: MAX_USERS });
    }
    let dim = state_count(users);
    let width = users + 1;
    let mut successors = vec![(0usize, 0.0f64); dim * width];
    successors.par_chunks_mut(width).enumerate().try_for_each(|(from, out)| {
        let state = SystemState::from_index(from, users);
        let slot = SlotModel::new(profile, state.phases(), model);
        let mut slot_index = 0;
        slot.for_each_successor(state.phases(), |to, p| {
            out[slot_index] = (to, p);
            slot_index += 1;
        });
        let sum: f64 = out.iter().map(|(_, p)| p).sum();
        if (sum - 1.0).abs() > ROW_SUM_TOLERANCE || !sum.is_finite() {
            return Err(Error::RowSum { state: from, sum });
        }
        out.iter_mut().for_each(|(_, p)| *p /= sum);
        Ok(())
    })?;
    let mut entries = vec![0.0; dim * dim];
    for (from, row) in successors.chunks(width).enumerate() {
        for &(to, p) in row {
            entries[from * dim + to] += p;
        }
    }
    Ok(TransitionMatrix { users, dim, entries, successors })
}

/// Solves `Π^T p = p`, `Σ p = 1` by direct elimination.
///
/// The primary route is GTH state reduction, which works on the transition
/// probabilities without subtractions and so keeps tiny failure-state masses
/// accurate. Zero entries are skipped, which matters because each row has at
/// most `N + 1` successors. If a censored state stops leaking mass (a chain
/// with an absorbing or periodic block), the balance equations are solved by
/// pivoted LU instead.
pub fn stationary_distribution(pi: &TransitionMatrix) -> Result<StationaryDistribution> {
    let probs = match gth(pi) {
        Some(p) => p,
        None => lu_stationary(pi)?,
    };
    let residual = stationarity_residual(pi, &probs);
    if residual > STATIONARY_RESIDUAL {
        return Err(Error::Stationary { residual, reason: "residual above tolerance".into() });
    }
    Ok(StationaryDistribution { probs, residual })
}

fn gth(pi: &TransitionMatrix) -> Option<Vec<f64>> {
    let dim = pi.dim;
    let mut a = pi.entries.clone();
    let mut cols = Vec::with_capacity(dim);
    let mut row = Vec::with_capacity(dim);
    for k in (1..dim).rev() {
        row.clear();
        row.extend((0..k).filter(|&j| a[k * dim + j] != 0.0));
        let leak: f64 = row.iter().map(|&j| a[k * dim + j]).sum();
        if !(leak > 0.0) {
            return None;
        }
        cols.clear();
        cols.extend((0..k).filter(|&i| a[i * dim + k] != 0.0));
        for &i in &cols {
            let f = a[i * dim + k] / leak;
            a[i * dim + k] = f;
            for &j in &row {
                a[i * dim + j] += f * a[k * dim + j];
            }
        }
    }
    let mut p = vec![0.0; dim];
    p[0] = 1.0;
    for j in 1..dim {
        p[j] = (0..j).map(|i| p[i] * a[i * dim + j]).sum();
    }
    let total: f64 = p.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return None;
    }
    p.iter_mut().for_each(|x| *x /= total);
    Some(p)
}

/// Balance equations with the last one replaced by `Σ p = 1`, solved by LU
/// with one step of iterative refinement.
fn lu_stationary(pi: &TransitionMatrix) -> Result<Vec<f64>> {
    let dim = pi.dim;
    let mut a = DMatrix::<f64>::zeros(dim, dim);
    for from in 0..dim {
        for (to, p) in pi.successors(from) {
            a[(to, from)] += p;
        }
    }
    for i in 0..dim {
        a[(i, i)] -= 1.0;
    }
    for j in 0..dim {
        a[(dim - 1, j)] = 1.0;
    }
    let mut b = DVector::<f64>::zeros(dim);
    b[dim - 1] = 1.0;

    let lu = a.clone().lu();
    let mut p = lu.solve(&b).ok_or_else(|| Error::Stationary {
        residual: f64::INFINITY,
        reason: "singular balance equations; the chain is not ergodic (for example every packet fails)".into(),
    })?;
    let correction = lu.solve(&(&b - &a * &p)).unwrap_or_else(|| DVector::zeros(dim));
    p += correction;

    let mut probs: Vec<f64> = p.iter().map(|&x| x.max(0.0)).collect();
    let total: f64 = probs.iter().sum();
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::Stationary { residual: f64::INFINITY, reason: format!("degenerate solution, mass {total}") });
    }
    probs.iter_mut().for_each(|x| *x /= total);
    Ok(probs)
}

/// `max_j |Σ_i p_i π_ij - p_j|`.
pub fn stationarity_residual(pi: &TransitionMatrix, probs: &[f64]) -> f64 {
    let mut next = vec![0.0; pi.dim];
    for (from, &mass) in probs.iter().enumerate() {
        if mass == 0.0 {
            continue;
        }
        for (to, p) in pi.successors(from) {
            next[to] += mass * p;
        }
    }
    next.iter().zip(probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
}

fn phase_of(state: usize, user: usize) -> UserPhase {
    UserPhase::ALL[(state / 3usize.pow(user as u32)) % 3]
}

/// Packet error rate of `user`: mass of the states where it sits in `F`,
/// plus the flow from its `R` states into its `F` states.
pub fn per_user(user: usize, p: &StationaryDistribution, pi: &TransitionMatrix) -> f64 {
    let mut e = 0.0;
    for (w, &mass) in p.probs.iter().enumerate() {
        match phase_of(w, user) {
            UserPhase::F => e += mass,
            UserPhase::R => {
                let to_f: f64 = pi.successors(w).filter(|(j, _)| phase_of(*j, user) == UserPhase::F).map(|(_, x)| x).sum();
                e += mass * to_f;
            }
            UserPhase::S => {}
        }
    }
    e.clamp(0.0, 1.0)
}

/// Probability that `user` sends a fresh packet and it is decoded at once.
pub fn success_prob(user: usize, p: &StationaryDistribution, pi: &TransitionMatrix) -> f64 {
    let mut ps = 0.0;
    for (w, &mass) in p.probs.iter().enumerate() {
        if phase_of(w, user).sends_new_packet() {
            let to_s: f64 = pi.successors(w).filter(|(j, _)| phase_of(*j, user) == UserPhase::S).map(|(_, x)| x).sum();
            ps += mass * to_s;
        }
    }
    ps.clamp(0.0, 1.0)
}

/// Throughput `R (1 - e) / (p_s + 2 (1 - p_s))`.
pub fn throughput(per: f64, success_prob: f64, code: &CodeParams) -> f64 {
    code.rate() * (1.0 - per) / (success_prob + 2.0 * (1.0 - success_prob))
}

/// Distribution of the number of transmissions `D` needed for `M` packets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelayPmf {
    pub packets: u64,
    /// `probs[d - M] = Prob{D = d}` for `d = M..=2M`.
    pub probs: Vec<f64>,
}

impl DelayPmf {
    pub fn prob(&self, transmissions: u64) -> f64 {
        transmissions
            .checked_sub(self.packets)
            .and_then(|i| self.probs.get(i as usize))
            .copied()
            .unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.probs.iter().enumerate().map(|(i, p)| (self.packets + i as u64) as f64 * p).sum()
    }
}

/// `Prob{D = 2M - j} = C(M, j) p_s^j (1 - p_s)^(M - j)`, evaluated in log space.
pub fn delay_pmf(success_prob: f64, packets: u64) -> Result<DelayPmf> {
    if !(0.0..=1.0).contains(&success_prob) {
        return Err(Error::Domain(format!("success probability must lie in [0, 1], got {success_prob}")));
    }
    if packets == 0 {
        return Err(Error::Domain("at least one packet is required".into()));
    }
    let m = packets as f64;
    let ln_m_fact = libm::lgamma(m + 1.0);
    let mut probs = vec![0.0; packets as usize + 1];
    for j in 0..=packets {
        let jf = j as f64;
        let log_succ = log_pow(success_prob, jf);
        let log_fail = log_pow(1.0 - success_prob, m - jf);
        let ln_binom = ln_m_fact - libm::lgamma(jf + 1.0) - libm::lgamma(m - jf + 1.0);
        probs[(packets - j) as usize] = (ln_binom + log_succ + log_fail).exp();
    }
    // lgamma rounding grows with M; the terms are renormalized to absorb it
    let total: f64 = probs.iter().sum();
    probs.iter_mut().for_each(|p| *p /= total);
    Ok(DelayPmf { packets, probs })
}

/// `exponent * ln(base)` with `0 * ln 0 = 0`.
fn log_pow(base: f64, exponent: f64) -> f64 {
    if exponent == 0.0 {
        0.0
    } else {
        exponent * base.ln()
    }
}

/// Transition matrix, stationary distribution and per-user metrics of one configuration.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub matrix: TransitionMatrix,
    pub stationary: StationaryDistribution,
    pub users: Vec<UserMetrics>,
}

impl Analysis {
    pub fn max_per(&self) -> f64 {
        self.users.iter().map(|u| u.per).fold(0.0, f64::max)
    }

    pub fn mean_per(&self) -> f64 {
        self.users.iter().map(|u| u.per).sum::<f64>() / self.users.len() as f64
    }
}

pub fn analyze(cfg: &SystemConfig) -> Result<Analysis> {
    cfg.validate()?;
    analyze_with(&cfg.received_powers(), &cfg.code, &cfg.code)
}

/// Analysis with an arbitrary error model; `code` only sets the rate used for throughput.
pub fn analyze_with(profile: &PowerProfile, model: &dyn PacketErrorModel, code: &CodeParams) -> Result<Analysis> {
    let matrix = build_transition_matrix_with(profile, model)?;
    let stationary = stationary_distribution(&matrix)?;
    let users = (0..profile.users())
        .map(|i| UserMetrics::new(per_user(i, &stationary, &matrix), success_prob(i, &stationary, &matrix), code))
        .collect();
    Ok(Analysis { matrix, stationary, users })
}
