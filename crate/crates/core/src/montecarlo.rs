//! Slot-level Monte Carlo simulation.
//!
//! Decoding is abstracted exactly as in the Markov analysis: every SIC stage
//! succeeds with probability `1 - ε(γ)` at its stage SINR, and the first
//! failure ends the slot. The coordinated simulator is therefore an
//! independent check of the analytical chain, while the uncoordinated one
//! adds random placement, location-based power selection and fading.
//!
//! # Seeding
//!
//! Replication `r` draws decoding outcomes from ChaCha8 stream `2r` and
//! geometry and fading from stream `2r + 1`, both keyed by the master seed.
//! Replications run in parallel and are merged in index order, so results
//! do not depend on the thread count.
//!
//! # Estimators
//!
//! Per-user PER and first-attempt success probability are slot averages of
//! the same events the chain analysis counts: "in `F`, or in `R` and moving
//! to `F`" and "sending a fresh packet and moving to `S`". Throughput is the
//! plug-in `R (1 - e) / (2 - p_s)` with a delta-method standard error. The packet loss ratio and goodput
//! (delivered bits per channel use) are reported alongside.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::cellplan::{CellPlan, UserPosition};
use crate::error::{Error, Result};
use crate::fbl::{CodeParams, ConstantPer, PacketErrorModel};
use crate::markov::{analyze, analyze_with};
use crate::sic::{state_count, PowerProfile, SystemConfig, SystemState, UserPhase};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scenario {
    Coordinated,
    Uncoordinated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Slots simulated per replication, warm-up included.
    pub slots: u64,
    /// Slots discarded at the start of each replication.
    pub warmup: u64,
    pub seed: u64,
    pub scenario: Scenario,
    /// Number of active users `N`.
    pub n_actual: usize,
    /// Load estimate `N̂` used for cell planning (uncoordinated only).
    pub n_hat: usize,
    /// Path loss exponent `ρ`.
    pub path_loss_exp: f64,
    /// Cell radius `R_o` in meters.
    pub r_outer: f64,
    /// Coordinated: ratios of the `N` users. Uncoordinated: the `N̂` ratios
    /// handed out by the cell plan.
    pub system: SystemConfig,
    pub replications: usize,
    /// Uncoordinated: users are re-placed every this many slots.
    pub episode_slots: u64,
    /// Transmit power cap as a multiple of the mean-channel power `α P0 d^ρ`.
    /// A capped transmission reaches the base station proportionally weaker.
    /// `None` means ideal channel inversion.
    pub tx_cap_factor: Option<f64>,
    /// Replaces the normal approximation by a constant error rate.
    pub per_override: Option<f64>,
    /// Stride between the state samples used for the goodness-of-fit test.
    pub thin: u64,
    /// Length, in a user's own slots, of the batches behind the batch-means
    /// standard errors.
    pub batch_slots: u64,
}

impl SimConfig {
    pub fn coordinated(system: SystemConfig, slots: u64, seed: u64) -> Self {
        let users = system.users();
        Self {
            slots,
            warmup: 1_000.min(slots / 10),
            seed,
            scenario: Scenario::Coordinated,
            n_actual: users,
            n_hat: users,
            path_loss_exp: 3.0,
            r_outer: 1500.0,
            system,
            replications: 1,
            episode_slots: 1_000,
            tx_cap_factor: Some(1e3),
            per_override: None,
            thin: 10,
            batch_slots: 10_000,
        }
    }

    /// `plan` carries the `N̂` ratios of the cell plan.
    pub fn uncoordinated(plan: SystemConfig, n_actual: usize, slots: u64, seed: u64) -> Self {
        let n_hat = plan.users();
        Self { scenario: Scenario::Uncoordinated, n_actual, n_hat, ..Self::coordinated(plan, slots, seed) }
    }

    pub fn validate(&self) -> Result<()> {
        self.system.validate()?;
        if self.slots <= self.warmup {
            return Err(Error::InvalidConfig(format!("slots ({}) must exceed warmup ({})", self.slots, self.warmup)));
        }
        if !(self.path_loss_exp > 0.0) {
            return Err(Error::InvalidConfig("path loss exponent must be positive".into()));
        }
        if !(self.r_outer > 0.0) {
            return Err(Error::InvalidConfig("cell radius must be positive".into()));
        }
        if self.replications == 0 || self.episode_slots == 0 || self.thin == 0 || self.batch_slots == 0 {
            return Err(Error::InvalidConfig("replications, episode, thinning and batch lengths must be positive".into()));
        }
        if self.n_actual == 0 {
            return Err(Error::InvalidConfig("at least one active user is required".into()));
        }
        if let Some(c) = self.tx_cap_factor {
            if !(c > 0.0) {
                return Err(Error::InvalidConfig(format!("transmit power cap factor must be positive, got {c}")));
            }
        }
        if let Some(e) = self.per_override {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::InvalidConfig(format!("PER override must lie in [0, 1], got {e}")));
            }
        }
        match self.scenario {
            Scenario::Coordinated if self.system.users() != self.n_actual => Err(Error::InvalidConfig(format!(
                "coordinated run with {} users but {} ratios",
                self.n_actual,
                self.system.users()
            ))),
            Scenario::Uncoordinated if self.system.users() != self.n_hat => Err(Error::InvalidConfig(format!(
                "cell plan for N̂ = {} needs {} ratios, got {}",
                self.n_hat,
                self.n_hat,
                self.system.users()
            ))),
            _ => Ok(()),
        }
    }

    fn error_model(&self) -> Box<dyn PacketErrorModel> {
        match self.per_override {
            Some(e) => Box::new(ConstantPer(e)),
            None => Box::new(self.system.code),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UserSimStats {
    pub per: f64,
    pub per_stderr: f64,
    pub success_prob: f64,
    pub success_stderr: f64,
    pub throughput: f64,
    pub throughput_stderr: f64,
    /// Dropped packets over completed packets.
    pub packet_loss: f64,
    /// Delivered information bits per channel use.
    pub goodput: f64,
    /// Mean transmit power per transmission; geometry-based scenarios only.
    pub mean_tx_power: Option<f64>,
    /// Batch-means errors, robust to the correlation between slots. `None`
    /// with fewer than [`MIN_BATCHES`] complete batches.
    pub batch_stderr: Option<BatchStderr>,
}

/// Standard errors from the spread of per-batch estimates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchStderr {
    pub batches: usize,
    pub per: f64,
    pub success_prob: f64,
    pub throughput: f64,
}

pub const MIN_BATCHES: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub scenario: Scenario,
    /// Slots that contributed statistics, summed over replications.
    pub slots: u64,
    pub users: Vec<UserSimStats>,
    /// Average over users and slots of the PER event.
    pub average_per: f64,
    pub average_per_stderr: f64,
    /// Empirical state occupancy (coordinated only).
    pub state_visits: Option<Vec<f64>>,
    /// State counts sampled every `thin` slots (coordinated only).
    pub thinned_state_counts: Option<Vec<u64>>,
    /// Fraction of transmissions that hit the power cap.
    pub cap_fraction: f64,
}

#[derive(Debug, Clone, Default)]
struct UserCounters {
    slots: u64,
    per_events: u64,
    success_events: u64,
    delivered: u64,
    dropped: u64,
    tx_power_sum: f64,
    transmissions: u64,
    batch_per: u64,
    batch_success: u64,
    /// `(PER events, success events)` of every complete batch.
    batches: Vec<(u64, u64)>,
}

impl UserCounters {
    fn merge(&mut self, o: &UserCounters) {
        self.slots += o.slots;
        self.per_events += o.per_events;
        self.success_events += o.success_events;
        self.delivered += o.delivered;
        self.dropped += o.dropped;
        self.tx_power_sum += o.tx_power_sum;
        self.transmissions += o.transmissions;
        self.batches.extend_from_slice(&o.batches);
    }

    /// Records one step of the user's own phase chain.
    fn record(&mut self, before: UserPhase, after: UserPhase, batch_slots: u64) {
        self.slots += 1;
        if before == UserPhase::F || (before == UserPhase::R && after == UserPhase::F) {
            self.per_events += 1;
            self.batch_per += 1;
        }
        if before.sends_new_packet() && after == UserPhase::S {
            self.success_events += 1;
            self.batch_success += 1;
        }
        match after {
            UserPhase::S => self.delivered += 1,
            UserPhase::F => self.dropped += 1,
            UserPhase::R => {}
        }
        if self.slots.is_multiple_of(batch_slots) {
            self.batches.push((self.batch_per, self.batch_success));
            self.batch_per = 0;
            self.batch_success = 0;
        }
    }

    fn batch_stderr(&self, rate: f64, waiting: f64, batch_slots: u64) -> Option<BatchStderr> {
        let b = self.batches.len();
        if b < MIN_BATCHES {
            return None;
        }
        let len = batch_slots as f64;
        let xs: Vec<(f64, f64)> = self.batches.iter().map(|&(e, s)| (e as f64 / len, s as f64 / len)).collect();
        let bf = b as f64;
        let (mx, my) = xs.iter().fold((0.0, 0.0), |(a, c), (x, y)| (a + x / bf, c + y / bf));
        let (mut vxx, mut vyy, mut vxy) = (0.0, 0.0, 0.0);
        for (x, y) in &xs {
            vxx += (x - mx) * (x - mx);
            vyy += (y - my) * (y - my);
            vxy += (x - mx) * (y - my);
        }
        let norm = (bf - 1.0) * bf;
        let (vxx, vyy, vxy) = (vxx / norm, vyy / norm, vxy / norm);
        // gradient of R (1 - e) / ((2 - p_s) w)
        let denom = (2.0 - my) * waiting;
        let ge = -rate / denom;
        let gs = rate * (1.0 - mx) * waiting / (denom * denom);
        let var_eta = ge * ge * vxx + gs * gs * vyy + 2.0 * ge * gs * vxy;
        Some(BatchStderr { batches: b, per: vxx.sqrt(), success_prob: vyy.sqrt(), throughput: var_eta.max(0.0).sqrt() })
    }

    fn stats(&self, code: &CodeParams, total_slots: u64, waiting: f64, geometric: bool, batch_slots: u64) -> UserSimStats {
        let n = self.slots.max(1) as f64;
        let per = self.per_events as f64 / n;
        let ps = self.success_events as f64 / n;
        let per_stderr = per_stderr(per, n);
        let success_stderr = binomial_stderr(ps, n);
        let rate = code.rate();
        let denom = (2.0 - ps) * waiting;
        let throughput = rate * (1.0 - per) / denom;
        let d_per = rate / denom;
        let d_ps = rate * (1.0 - per) * waiting / (denom * denom);
        let throughput_stderr = ((d_per * per_stderr).powi(2) + (d_ps * success_stderr).powi(2)).sqrt();
        let completed = self.delivered + self.dropped;
        UserSimStats {
            per,
            per_stderr,
            success_prob: ps,
            success_stderr,
            throughput,
            throughput_stderr,
            packet_loss: if completed == 0 { 0.0 } else { self.dropped as f64 / completed as f64 },
            goodput: rate * self.delivered as f64 / total_slots.max(1) as f64,
            mean_tx_power: (geometric && self.transmissions > 0).then(|| self.tx_power_sum / self.transmissions as f64),
            batch_stderr: self.batch_stderr(rate, waiting, batch_slots),
        }
    }
}

#[derive(Debug, Clone, Default)]
struct RunCounters {
    users: Vec<UserCounters>,
    slots: u64,
    visits: Vec<u64>,
    thinned: Vec<u64>,
    capped: u64,
    transmissions: u64,
}

impl RunCounters {
    fn new(users: usize, states: usize) -> Self {
        Self { users: vec![UserCounters::default(); users], visits: vec![0; states], thinned: vec![0; states], ..Default::default() }
    }

    fn merge(&mut self, o: &RunCounters) {
        for (a, b) in self.users.iter_mut().zip(&o.users) {
            a.merge(b);
        }
        self.slots += o.slots;
        for (a, b) in self.visits.iter_mut().zip(&o.visits) {
            *a += b;
        }
        for (a, b) in self.thinned.iter_mut().zip(&o.thinned) {
            *a += b;
        }
        self.capped += o.capped;
        self.transmissions += o.transmissions;
    }
}

pub fn binomial_stderr(p: f64, n: f64) -> f64 {
    (p * (1.0 - p) / n).sqrt()
}

/// Standard error of the slot-averaged PER indicator.
///
/// A dropped packet shows up in two consecutive slots (the `R → F` step and
/// the slot spent in `F`), so the indicator rate is twice the drop rate `q`
/// and its error is propagated from the binomial error of `q`.
pub fn per_stderr(per: f64, n: f64) -> f64 {
    2.0 * binomial_stderr(per / 2.0, n)
}

fn streams(seed: u64, replication: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut decode = ChaCha8Rng::seed_from_u64(seed);
    decode.set_stream(2 * replication as u64);
    let mut geometry = ChaCha8Rng::seed_from_u64(seed);
    geometry.set_stream(2 * replication as u64 + 1);
    (decode, geometry)
}

/// Runs SIC for one slot and updates `phases` in place.
fn decode_slot(
    phases: &mut [UserPhase],
    order: &[usize],
    stage_per: &[f64],
    rng: &mut ChaCha8Rng,
) {
    let mut failed = false;
    for (&u, &e) in order.iter().zip(stage_per) {
        if !failed && rng.gen::<f64>() < e {
            failed = true;
        }
        phases[u] = if failed { phases[u].after_failure() } else { UserPhase::S };
    }
}

fn stage_pers(profile: &PowerProfile, phases: &[UserPhase], model: &dyn PacketErrorModel) -> (Vec<usize>, Vec<f64>) {
    let d = profile.decoding_order(phases);
    let e = d.stage_sinrs.iter().map(|&g| model.per(g).clamp(0.0, 1.0)).collect();
    (d.order, e)
}

/// Coordinated NOMA-HARQ: fixed ratios, ideal power control, no geometry.
pub fn simulate_coordinated(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    if cfg.scenario != Scenario::Coordinated {
        return Err(Error::InvalidConfig("expected a coordinated scenario".into()));
    }
    let users = cfg.n_actual;
    if users > crate::markov::MAX_USERS {
        return Err(Error::TooManyUsers { users, max: crate::markov::MAX_USERS });
    }
    let profile = cfg.system.received_powers();
    let model = cfg.error_model();
    let states = state_count(users);
    // per-state SIC order and stage error rates, shared by all replications
    let table: Vec<(Vec<usize>, Vec<f64>)> =
        (0..states).map(|s| stage_pers(&profile, SystemState::from_index(s, users).phases(), model.as_ref())).collect();

    let runs: Vec<RunCounters> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let (mut rng, _) = streams(cfg.seed, r);
            let mut counters = RunCounters::new(users, states);
            let mut phases = vec![UserPhase::S; users];
            let mut index = 0usize;
            for slot in 0..cfg.slots {
                let before = phases.clone();
                let (order, stage_per) = &table[index];
                decode_slot(&mut phases, order, stage_per, &mut rng);
                if slot >= cfg.warmup {
                    counters.slots += 1;
                    counters.visits[index] += 1;
                    if (slot - cfg.warmup).is_multiple_of(cfg.thin) {
                        counters.thinned[index] += 1;
                    }
                    for (c, (b, a)) in counters.users.iter_mut().zip(before.iter().zip(&phases)) {
                        c.record(*b, *a, cfg.batch_slots);
                    }
                }
                index = SystemState::new(phases.clone()).index();
            }
            counters
        })
        .collect();
    let total = merge_runs(runs, users, states);
    Ok(finish(cfg, Scenario::Coordinated, total, 1.0, false, true))
}

fn merge_runs(runs: Vec<RunCounters>, users: usize, states: usize) -> RunCounters {
    let mut total = RunCounters::new(users, states);
    for r in &runs {
        total.merge(r);
    }
    total
}

fn finish(cfg: &SimConfig, scenario: Scenario, c: RunCounters, waiting: f64, geometric: bool, with_states: bool) -> SimResult {
    let code = cfg.system.code;
    let users: Vec<UserSimStats> = c.users.iter().map(|u| u.stats(&code, c.slots, waiting, geometric, cfg.batch_slots)).collect();
    let user_slots: u64 = c.users.iter().map(|u| u.slots).sum();
    let per_events: u64 = c.users.iter().map(|u| u.per_events).sum();
    let average_per = per_events as f64 / user_slots.max(1) as f64;
    let state_visits = with_states.then(|| {
        let n = c.slots.max(1) as f64;
        c.visits.iter().map(|&v| v as f64 / n).collect()
    });
    SimResult {
        scenario,
        slots: c.slots,
        users,
        average_per,
        average_per_stderr: per_stderr(average_per, user_slots.max(1) as f64),
        state_visits,
        thinned_state_counts: with_states.then(|| c.thinned.clone()),
        cap_fraction: if c.transmissions == 0 { 0.0 } else { c.capped as f64 / c.transmissions as f64 },
    }
}

/// Uniform point on the disk of radius `r_outer`.
pub fn sample_position<R: Rng + ?Sized>(rng: &mut R, r_outer: f64) -> UserPosition {
    let u: f64 = 1.0 - rng.gen::<f64>();
    UserPosition { distance: r_outer * u.sqrt(), angle: rng.gen::<f64>() * std::f64::consts::TAU }
}

/// Uncoordinated NOMA-HARQ with dynamic cell planning.
///
/// Every episode places the `N` users uniformly over the cell. Each slot a
/// user takes the ratio its segment holds under the current plan rotation,
/// which advances by one per slot; users sharing a segment pick the same
/// level. Power control inverts path loss and Rayleigh fading, so reception
/// sees `α P0` unless the transmit power cap is hit. HARQ phases carry over
/// between episodes.
pub fn simulate_uncoordinated(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    if cfg.scenario != Scenario::Uncoordinated {
        return Err(Error::InvalidConfig("expected an uncoordinated scenario".into()));
    }
    let users = cfg.n_actual;
    let plan = CellPlan::new(cfg.n_hat, cfg.r_outer, &cfg.system.alphas, 0)?;
    let model = cfg.error_model();
    let p0 = cfg.system.p0;

    let runs: Vec<RunCounters> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| -> Result<RunCounters> {
            let (mut rng, mut geo) = streams(cfg.seed, r);
            let mut counters = RunCounters::new(users, 0);
            let mut phases = vec![UserPhase::S; users];
            let mut segments = Vec::with_capacity(users);
            let mut path_gain = Vec::with_capacity(users);
            let mut received = vec![0.0; users];
            let mut tx = vec![0.0; users];
            for slot in 0..cfg.slots {
                if slot % cfg.episode_slots == 0 {
                    segments.clear();
                    path_gain.clear();
                    for _ in 0..users {
                        let pos = sample_position(&mut geo, cfg.r_outer);
                        let seg = plan.locate(&pos)?;
                        segments.push((seg.ring, seg.sector));
                        path_gain.push(pos.distance.powf(cfg.path_loss_exp));
                    }
                }
                let rotation = (slot % cfg.n_hat as u64) as usize;
                let mut capped = 0;
                for u in 0..users {
                    let (ring, sector) = segments[u];
                    let alpha = plan.alphas[(ring + sector + rotation) % cfg.n_hat];
                    let target = alpha * p0;
                    let fading: f64 = Exp1.sample(&mut geo);
                    let mean_channel = target * path_gain[u];
                    match cfg.tx_cap_factor {
                        Some(factor) if fading * factor < 1.0 => {
                            tx[u] = factor * mean_channel;
                            received[u] = target * fading * factor;
                            capped += 1;
                        }
                        _ => {
                            tx[u] = mean_channel / fading;
                            received[u] = target;
                        }
                    }
                }
                let profile = PowerProfile::new(received.clone())?;
                let (order, stage_per) = stage_pers(&profile, &phases, model.as_ref());
                let before = phases.clone();
                decode_slot(&mut phases, &order, &stage_per, &mut rng);
                if slot >= cfg.warmup {
                    counters.slots += 1;
                    counters.capped += capped;
                    counters.transmissions += users as u64;
                    for (u, c) in counters.users.iter_mut().enumerate() {
                        c.record(before[u], phases[u], cfg.batch_slots);
                        c.tx_power_sum += tx[u];
                        c.transmissions += 1;
                    }
                }
            }
            Ok(counters)
        })
        .collect::<Result<_>>()?;
    let total = merge_runs(runs, users, 0);
    Ok(finish(cfg, Scenario::Uncoordinated, total, 1.0, true, false))
}

/// Analytical OMA-HARQ reference for a NOMA configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmaAnalysis {
    /// Received power of an OMA transmission (linear).
    pub power: f64,
    pub per: f64,
    pub success_prob: f64,
    /// Per-user throughput including the wait for the other users' turns.
    pub throughput: f64,
}

/// Mean transmissions per packet, `p_s + 2 (1 - p_s)`.
fn transmissions_per_packet(success_prob: f64) -> f64 {
    2.0 - success_prob
}

/// OMA-HARQ with the same average received power per information packet as
/// the NOMA configuration `cfg`.
///
/// Every user transmits alone, so an OMA user is a single-user chain at power
/// `P_oma`. The power solves the fixed point
/// `P_oma = P0 · T_noma / T_oma(P_oma)`, where `T = 2 - p_s` is the mean number
/// of transmissions per information packet and `T_noma` is averaged over the
/// NOMA users. Throughput divides by the whole round-robin cycle
/// `Σ_users T_oma`.
pub fn oma_analysis(cfg: &SystemConfig) -> Result<OmaAnalysis> {
    let noma = analyze(cfg)?;
    let users = cfg.users();
    let t_noma = noma.users.iter().map(|u| transmissions_per_packet(u.success_prob)).sum::<f64>() / users as f64;
    let single = |power: f64| -> Result<(f64, f64)> {
        let a = analyze_with(&PowerProfile::new(vec![power])?, &cfg.code, &cfg.code)?;
        Ok((a.users[0].per, a.users[0].success_prob))
    };
    let mut power = cfg.p0 * t_noma;
    for _ in 0..200 {
        let (_, ps) = single(power)?;
        let next = cfg.p0 * t_noma / transmissions_per_packet(ps);
        let converged = (next - power).abs() <= 1e-13 * power;
        power = next;
        if converged {
            break;
        }
    }
    let (per, success_prob) = single(power)?;
    let cycle = users as f64 * transmissions_per_packet(success_prob);
    Ok(OmaAnalysis { power, per, success_prob, throughput: cfg.code.rate() * (1.0 - per) / cycle })
}

/// Round-robin OMA-HARQ: each user's turn is a fresh transmission and, if it
/// fails, an immediate Chase-combined retransmission. Transmissions use the
/// fair power of [`oma_analysis`].
pub fn simulate_oma_baseline(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    if cfg.scenario != Scenario::Coordinated {
        return Err(Error::InvalidConfig("the OMA baseline uses the coordinated configuration".into()));
    }
    let users = cfg.n_actual;
    let power = oma_analysis(&cfg.system)?.power;
    let model = cfg.error_model();
    let fresh_per = model.per(power).clamp(0.0, 1.0);
    let combined_per = model.per(2.0 * power).clamp(0.0, 1.0);

    let runs: Vec<RunCounters> = (0..cfg.replications)
        .into_par_iter()
        .map(|r| {
            let (mut rng, _) = streams(cfg.seed, r);
            let mut counters = RunCounters::new(users, 0);
            let mut phases = vec![UserPhase::S; users];
            let mut slot = 0u64;
            let mut turn = 0usize;
            while slot < cfg.slots {
                let u = turn % users;
                turn += 1;
                loop {
                    let before = phases[u];
                    let e = if before == UserPhase::R { combined_per } else { fresh_per };
                    phases[u] = if rng.gen::<f64>() < e { before.after_failure() } else { UserPhase::S };
                    if slot >= cfg.warmup {
                        counters.slots += 1;
                        counters.users[u].record(before, phases[u], cfg.batch_slots);
                    }
                    slot += 1;
                    if phases[u] != UserPhase::R || slot >= cfg.slots {
                        break;
                    }
                }
            }
            counters
        })
        .collect();
    let total = merge_runs(runs, users, 0);
    // a user's chain only advances on its own turns; throughput waits for
    // the whole cycle and goodput is per slot of the shared channel
    Ok(finish(cfg, Scenario::Coordinated, total, users as f64, false, false))
}

/// Pearson goodness-of-fit test of observed counts against probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Cells with an expected count below five are pooled into one cell.
pub fn chi_square_gof(observed: &[u64], probs: &[f64]) -> Result<ChiSquareTest> {
    if observed.len() != probs.len() {
        return Err(Error::InvalidConfig("observed and expected lengths differ".into()));
    }
    let total: u64 = observed.iter().sum();
    let n = total as f64;
    let mut cells: Vec<(f64, f64)> = Vec::new();
    let mut pooled = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(probs) {
        let e = p * n;
        if e < 5.0 {
            pooled.0 += o as f64;
            pooled.1 += e;
        } else {
            cells.push((o as f64, e));
        }
    }
    if pooled.1 > 0.0 {
        cells.push(pooled);
    } else if pooled.0 > 0.0 {
        // events the model deems impossible
        return Ok(ChiSquareTest { statistic: f64::INFINITY, dof: cells.len(), p_value: 0.0 });
    }
    if cells.len() < 2 {
        return Ok(ChiSquareTest { statistic: 0.0, dof: 0, p_value: 1.0 });
    }
    let statistic: f64 = cells.iter().map(|(o, e)| (o - e) * (o - e) / e).sum();
    let dof = cells.len() - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::Domain(e.to_string()))?;
    Ok(ChiSquareTest { statistic, dof, p_value: dist.sf(statistic) })
}
