//! Packet error rates in the finite blocklength regime.
//!
//! Everything here uses the normal approximation of the maximal coding rate
//! with binary logarithms. SINRs are linear.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `log2(e)^2`, the dispersion of a saturated channel.
pub const LOG2E_SQUARED: f64 = std::f64::consts::LOG2_E * std::f64::consts::LOG2_E;

/// Information bits `k` and codeword length `n` (channel uses) of every packet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeParams {
    pub k: u32,
    pub n: u32,
}

impl CodeParams {
    pub fn new(k: u32, n: u32) -> Result<Self> {
        if k == 0 || n == 0 {
            return Err(Error::Domain(format!("code parameters must be positive, got k={k}, n={n}")));
        }
        Ok(Self { k, n })
    }

    /// Code rate `k/n`. Rates above one are allowed; they simply fail to decode.
    pub fn rate(&self) -> f64 {
        f64::from(self.k) / f64::from(self.n)
    }

    /// Code with `n = round(k / rate)`.
    pub fn from_rate(n: u32, rate: f64) -> Result<Self> {
        if !(rate.is_finite() && rate > 0.0) {
            return Err(Error::Domain(format!("code rate must be positive, got {rate}")));
        }
        Self::new((f64::from(n) * rate).round() as u32, n)
    }
}

/// Maps the SINR of a decoding attempt to its packet error probability.
pub trait PacketErrorModel: Sync {
    fn per(&self, sinr: f64) -> f64;
}

impl PacketErrorModel for CodeParams {
    fn per(&self, sinr: f64) -> f64 {
        per_cc_raw(sinr, self)
    }
}

/// Error model that ignores the SINR. Useful for testing chain structure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPer(pub f64);

impl PacketErrorModel for ConstantPer {
    fn per(&self, _sinr: f64) -> f64 {
        self.0
    }
}

/// Gaussian tail probability `Q(x) = erfc(x/sqrt 2)/2`.
pub fn q_function(x: f64) -> Result<f64> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("Q-function argument must be finite, got {x}")));
    }
    Ok(q_raw(x))
}

fn q_raw(x: f64) -> f64 {
    (0.5 * libm::erfc(x * std::f64::consts::FRAC_1_SQRT_2)).clamp(0.0, 1.0)
}

/// Channel dispersion `V(γ) = (1 - (1+γ)^-2) log2(e)^2`.
///
/// `γ = +∞` is accepted and yields the saturated value [`LOG2E_SQUARED`].
pub fn channel_dispersion(gamma: f64) -> Result<f64> {
    check_sinr(gamma)?;
    Ok(dispersion_raw(gamma))
}

fn dispersion_raw(gamma: f64) -> f64 {
    if gamma.is_infinite() {
        return LOG2E_SQUARED;
    }
    let inv = 1.0 / (1.0 + gamma);
    (1.0 - inv * inv) * LOG2E_SQUARED
}

fn check_sinr(gamma: f64) -> Result<()> {
    if gamma.is_nan() || gamma < 0.0 {
        return Err(Error::Domain(format!("SINR must be non-negative, got {gamma}")));
    }
    Ok(())
}

/// Packet error rate of Chase combining for the MRC-combined SINR `gamma_cc`:
///
/// `Q((n log2(1+γ) - k + log2 n) / sqrt(n V(γ)))`
///
/// The correction term is the full `log2 n`, not `(log2 n)/2`.
pub fn per_cc(gamma_cc: f64, code: &CodeParams) -> Result<f64> {
    check_sinr(gamma_cc)?;
    Ok(per_cc_raw(gamma_cc, code))
}

pub(crate) fn per_cc_raw(gamma: f64, code: &CodeParams) -> f64 {
    let n = f64::from(code.n);
    let v = dispersion_raw(gamma);
    if v <= 0.0 {
        // zero SINR carries no information
        return 1.0;
    }
    if gamma.is_infinite() {
        return 0.0;
    }
    let numerator = n * gamma.ln_1p() * std::f64::consts::LOG2_E - f64::from(code.k) + n.log2();
    q_raw(numerator / (n * v).sqrt())
}

/// Packet error rate of incremental redundancy over the per-copy SINRs.
pub fn per_ir(gammas: &[f64], code: &CodeParams) -> Result<f64> {
    if gammas.is_empty() {
        return Err(Error::Domain("incremental redundancy needs at least one copy".into()));
    }
    for &g in gammas {
        check_sinr(g)?;
    }
    let n = f64::from(code.n);
    let m = gammas.len() as f64;
    let v: f64 = gammas.iter().map(|&g| dispersion_raw(g)).sum();
    if v <= 0.0 {
        return Ok(1.0);
    }
    if gammas.iter().any(|g| g.is_infinite()) {
        return Ok(0.0);
    }
    let info: f64 = gammas.iter().map(|g| g.ln_1p() * std::f64::consts::LOG2_E).sum();
    let numerator = n * info - f64::from(code.k) + (m * n).log2();
    Ok(q_raw(numerator / (n * v).sqrt()))
}
