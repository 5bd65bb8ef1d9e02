//! Power splitting ratio optimization.
//!
//! Two formulations are supported. The power-constrained problem trades the
//! worst user's PER against the total received power `P0`; it is scalarized
//! by sweeping `P0` and minimizing the worst PER at each grid point. The
//! reliability-constrained problem looks for the shortest codeword that lets
//! every user meet a target PER at a fixed SNR.
//!
//! Objective values are symmetric under permuting the users, so returned
//! ratio vectors are sorted ascending.

mod ga;

pub use ga::{ga_minimize, ga_minimize_from, GaOutcome, GaParams};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fbl::CodeParams;
use crate::markov::analyze_with;
use crate::sic::PowerProfile;
use crate::db_to_linear;

/// Worst-user PER for ratios `alphas` at total received power `p0` (linear).
///
/// Returns `+∞` when the analysis fails, which the GA treats as worst fitness.
pub fn max_per(alphas: &[f64], p0: f64, code: &CodeParams) -> f64 {
    let profile = match PowerProfile::new(alphas.iter().map(|a| a * p0).collect()) {
        Ok(p) => p,
        Err(_) => return f64::INFINITY,
    };
    analyze_with(&profile, code, code).map(|a| a.max_per()).unwrap_or(f64::INFINITY)
}

fn sorted(mut alphas: Vec<f64>) -> Vec<f64> {
    alphas.sort_by(f64::total_cmp);
    alphas
}

/// Worst-user PER minimized at one `P0`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub max_per: f64,
    pub p0_db: f64,
    pub alphas: Vec<f64>,
}

impl ParetoPoint {
    /// No worse in both objectives and strictly better in one.
    pub fn dominates(&self, other: &ParetoPoint) -> bool {
        self.max_per <= other.max_per
            && self.p0_db <= other.p0_db
            && (self.max_per < other.max_per || self.p0_db < other.p0_db)
    }
}

/// Minimizes the worst PER at every `P0` in `p0_grid_db` and keeps the
/// non-dominated points, sorted by `P0`.
pub fn pareto_front(users: usize, code: CodeParams, p0_grid_db: &[f64], params: &GaParams) -> Result<Vec<ParetoPoint>> {
    if p0_grid_db.is_empty() {
        return Err(Error::InvalidConfig("the P0 grid is empty".into()));
    }
    let mut grid = p0_grid_db.to_vec();
    grid.sort_by(f64::total_cmp);
    let mut points = Vec::with_capacity(grid.len());
    let mut warm: Vec<Vec<f64>> = Vec::new();
    for &p0_db in &grid {
        let p0 = db_to_linear(p0_db);
        let out = ga_minimize_from(|a| max_per(a, p0, &code), users, params, &warm)?;
        warm = vec![out.alphas.clone()];
        points.push(ParetoPoint { max_per: out.value, p0_db, alphas: sorted(out.alphas) });
    }
    let front = points
        .iter()
        .filter(|p| !points.iter().any(|q| q.dominates(p)))
        .cloned()
        .collect();
    Ok(front)
}

/// Scan settings for [`min_blocklength`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlocklengthSearch {
    /// Largest codeword length tried before giving up.
    pub n_cap: u32,
    /// Coarse step of the scan; the last coarse interval is then walked one by one.
    pub stride: u32,
}

impl Default for BlocklengthSearch {
    fn default() -> Self {
        Self { n_cap: 4096, stride: 8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinBlocklength {
    pub n: u32,
    pub alphas: Vec<f64>,
    pub max_per: f64,
    /// Every `(n, optimized max PER)` pair evaluated, in evaluation order.
    pub trace: Vec<(u32, f64)>,
}

/// Shortest codeword length `n > k` for which optimized ratios give every
/// user a PER of at most `target` at the given SNR.
///
/// The scan starts at `n = k + 1`. It steps by `search.stride` until the
/// target is met, then walks the last interval upward one length at a time,
/// which returns the same `n` as a unit-step scan whenever the optimized
/// PER is monotone in `n`.
pub fn min_blocklength(
    k: u32,
    snr_db: f64,
    users: usize,
    target: f64,
    params: &GaParams,
    search: &BlocklengthSearch,
) -> Result<MinBlocklength> {
    if !(target > 0.0 && target < 1.0) {
        return Err(Error::Domain(format!("target PER must lie in (0, 1), got {target}")));
    }
    if k == 0 || users == 0 || search.stride == 0 {
        return Err(Error::InvalidConfig("k, users and stride must be positive".into()));
    }
    let start = k.checked_add(1).ok_or_else(|| Error::InvalidConfig("k too large".into()))?;
    if search.n_cap < start {
        return Err(Error::InvalidConfig(format!("n cap {} is below k + 1 = {start}", search.n_cap)));
    }
    let p0 = db_to_linear(snr_db);
    let mut trace = Vec::new();
    let mut warm: Vec<Vec<f64>> = Vec::new();
    let mut best: Option<(u32, f64)> = None;

    let mut solve = |n: u32, warm: &mut Vec<Vec<f64>>| -> Result<GaOutcome> {
        let code = CodeParams::new(k, n)?;
        let run = GaParams { seed: params.seed.wrapping_add(u64::from(n)), ..params.clone() };
        let out = ga_minimize_from(|a| max_per(a, p0, &code), users, &run, warm)?;
        *warm = vec![out.alphas.clone()];
        trace.push((n, out.value));
        if best.is_none_or(|(_, v)| out.value < v) {
            best = Some((n, out.value));
        }
        Ok(out)
    };

    let mut previous = start - 1;
    let mut n = start;
    let (hit_n, hit) = loop {
        let out = solve(n, &mut warm)?;
        if out.value <= target {
            break (n, out);
        }
        if n >= search.n_cap {
            let (best_n, best_per) = best.expect("at least one evaluation");
            return Err(Error::Infeasible { best_per, best_n, cap: search.n_cap });
        }
        previous = n;
        n = n.saturating_add(search.stride).min(search.n_cap);
    };

    let mut result = (hit_n, hit);
    for m in previous + 1..hit_n {
        if m == start {
            continue;
        }
        let out = solve(m, &mut warm)?;
        if out.value <= target {
            result = (m, out);
            break;
        }
    }
    let (n, out) = result;
    Ok(MinBlocklength { n, alphas: sorted(out.alphas), max_per: out.value, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fbl::per_cc;

    fn small_ga() -> GaParams {
        GaParams { population_size: 24, generations: 40, ..Default::default() }
    }

    // single user: e = 2 f1 f2 / (1 + f1) with f1, f2 the error rates of the
    // fresh and the combined copy
    fn single_user_per(k: u32, n: u32, p0: f64) -> f64 {
        let code = CodeParams::new(k, n).unwrap();
        let f1 = per_cc(p0, &code).unwrap();
        let f2 = per_cc(2.0 * p0, &code).unwrap();
        2.0 * f1 * f2 / (1.0 + f1)
    }

    #[test]
    fn single_user_max_per_matches_closed_form() {
        for (k, n, db) in [(50, 100, 0.0), (25, 100, -2.0), (50, 200, 3.0)] {
            let p0 = db_to_linear(db);
            let got = max_per(&[1.0], p0, &CodeParams::new(k, n).unwrap());
            let want = single_user_per(k, n, p0);
            assert!((got - want).abs() <= 1e-12 * want.max(1e-300), "{got} vs {want}");
        }
    }

    #[test]
    fn single_user_min_blocklength_matches_scan() {
        for (snr_db, target) in [(0.0, 1e-2), (0.0, 1e-4), (2.0, 1e-3)] {
            let p0 = db_to_linear(snr_db);
            let want = (51..).find(|&n| single_user_per(50, n, p0) <= target).unwrap();
            let got = min_blocklength(50, snr_db, 1, target, &small_ga(), &BlocklengthSearch::default()).unwrap();
            assert_eq!(got.n, want);
            assert_eq!(got.alphas, vec![1.0]);
        }
    }

    #[test]
    fn min_blocklength_reports_infeasible_at_cap() {
        let search = BlocklengthSearch { n_cap: 60, stride: 8 };
        match min_blocklength(50, -10.0, 1, 1e-6, &small_ga(), &search) {
            Err(Error::Infeasible { cap, best_n, .. }) => {
                assert_eq!(cap, 60);
                assert!(best_n <= 60);
            }
            other => panic!("{other:?}"),
        }
        assert!(min_blocklength(50, 0.0, 1, 1.5, &small_ga(), &search).is_err());
    }

    #[test]
    fn min_blocklength_is_monotone_in_target() {
        let loose = min_blocklength(50, 0.0, 2, 1e-2, &small_ga(), &BlocklengthSearch::default()).unwrap();
        let tight = min_blocklength(50, 0.0, 2, 1e-3, &small_ga(), &BlocklengthSearch::default()).unwrap();
        assert!(tight.n > loose.n);
        assert!(loose.max_per <= 1e-2 && tight.max_per <= 1e-3);
        assert!(loose.alphas.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn pareto_single_point() {
        let code = CodeParams::new(25, 100).unwrap();
        let front = pareto_front(3, code, &[-2.02], &small_ga()).unwrap();
        assert_eq!(front.len(), 1);
        assert_eq!(front[0].p0_db, -2.02);
        assert!((front[0].alphas.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(pareto_front(3, code, &[], &small_ga()).is_err());
    }

    #[test]
    fn pareto_points_do_not_dominate_each_other() {
        let code = CodeParams::new(25, 100).unwrap();
        let front = pareto_front(2, code, &[0.0, -3.0, 3.0, -1.5, 1.5], &small_ga()).unwrap();
        assert!(front.len() >= 2);
        assert!(front.windows(2).all(|w| w[0].p0_db < w[1].p0_db && w[0].max_per > w[1].max_per));
        for a in &front {
            assert!(front.iter().all(|b| !a.dominates(b)));
        }
    }

    #[test]
    fn dominance() {
        let p = |max_per, p0_db| ParetoPoint { max_per, p0_db, alphas: vec![] };
        assert!(p(1e-3, 0.0).dominates(&p(1e-2, 0.0)));
        assert!(p(1e-3, 0.0).dominates(&p(1e-3, 1.0)));
        assert!(!p(1e-3, 0.0).dominates(&p(1e-3, 0.0)));
        assert!(!p(1e-3, 1.0).dominates(&p(1e-2, 0.0)));
    }
}
