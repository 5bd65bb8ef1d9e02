use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use noma_harq::cellplan::CellPlan;
use noma_harq::markov::{self, Analysis};
use noma_harq::montecarlo::{self, Scenario, SimConfig, SimResult};
use noma_harq::optimizer::{self, BlocklengthSearch};
use noma_harq::sic::{SystemConfig, SystemState};
use noma_harq::db_to_linear;
use serde_json::{json, Value};

use crate::config::{Format, RunConfig, ScenarioArg, UsageError};
use crate::output::{num, nums, write_json, Sink};

pub const ANALYZE_COLUMNS: [&str; 9] = ["user", "e_i", "p_s", "eta", "P0_dB", "R", "n", "N", "alphas"];

pub const MONTECARLO_COLUMNS: [&str; 14] = [
    "scenario",
    "N",
    "n_hat",
    "snr_db",
    "R",
    "n",
    "user",
    "per",
    "per_stderr",
    "p_s",
    "eta",
    "mean_tx_power",
    "cap_fraction",
    "seed",
];

pub struct Output {
    pub format: Format,
    pub path: Option<PathBuf>,
    pub verbose: bool,
}

impl Output {
    fn sink(&self, cfg: &RunConfig, columns: &[&str]) -> anyhow::Result<Sink> {
        Sink::new(self.format, self.path.as_deref(), cfg, columns)
    }

    fn progress(&self, msg: impl FnOnce() -> String) {
        if self.verbose {
            eprintln!("{}", msg());
        }
    }
}

fn single_snr(cfg: &RunConfig) -> anyhow::Result<f64> {
    match cfg.snr_db[..] {
        [db] => Ok(db),
        _ => bail!(UsageError(format!("this command takes one SNR value, got {}", cfg.snr_db.len()))),
    }
}

fn nonempty_grid(cfg: &RunConfig) -> anyhow::Result<()> {
    if cfg.snr_db.is_empty() {
        bail!(UsageError("the SNR grid is empty".into()));
    }
    Ok(())
}

fn system(cfg: &RunConfig, snr_db: f64) -> anyhow::Result<SystemConfig> {
    Ok(SystemConfig::new(cfg.alphas.clone(), db_to_linear(snr_db), cfg.code()?)?)
}

fn analysis_row(user: Value, m: (f64, f64, f64), cfg: &RunConfig, snr_db: f64) -> anyhow::Result<Vec<Value>> {
    let code = cfg.code()?;
    Ok(vec![
        user,
        num(m.0),
        num(m.1),
        num(m.2),
        num(snr_db),
        num(code.rate()),
        code.n.into(),
        cfg.alphas.len().into(),
        nums(&cfg.alphas),
    ])
}

fn analysis_rows(a: &Analysis, cfg: &RunConfig, snr_db: f64) -> anyhow::Result<Vec<Vec<Value>>> {
    a.users
        .iter()
        .enumerate()
        .map(|(i, u)| analysis_row(i.into(), (u.per, u.success_prob, u.throughput), cfg, snr_db))
        .collect()
}

pub fn analyze(cfg: &RunConfig, out: &Output, emit_matrix: Option<&Path>, emit_states: Option<&Path>) -> anyhow::Result<()> {
    let snr_db = single_snr(cfg)?;
    let analysis = markov::analyze(&system(cfg, snr_db)?)?;
    let mut sink = out.sink(cfg, &ANALYZE_COLUMNS)?;
    for row in analysis_rows(&analysis, cfg, snr_db)? {
        sink.row(row)?;
    }
    sink.finish()?;
    if let Some(path) = emit_matrix {
        write_matrix(path, &analysis)?;
    }
    if let Some(path) = emit_states {
        write_states(path, &analysis)?;
    }
    Ok(())
}

fn labels(users: usize) -> Vec<String> {
    SystemState::all(users).map(|s| s.to_string()).collect()
}

/// Transition matrix as CSV: a `state` column, then one column per target state.
fn write_matrix(path: &Path, a: &Analysis) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    let names = labels(a.matrix.users());
    w.write_record(std::iter::once("state".to_string()).chain(names.iter().cloned()))?;
    for (name, row) in names.iter().zip(a.matrix.rows()) {
        w.write_record(std::iter::once(name.clone()).chain(row.iter().map(|p| p.to_string())))?;
    }
    w.flush()?;
    Ok(())
}

fn write_states(path: &Path, a: &Analysis) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = csv::Writer::from_writer(BufWriter::new(file));
    w.write_record(["index", "state", "stationary_prob"])?;
    for (i, (name, p)) in labels(a.matrix.users()).iter().zip(&a.stationary.probs).enumerate() {
        w.write_record([i.to_string(), name.clone(), p.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Coordinated sweeps are analytical; uncoordinated ones are simulated.
pub fn sweep(cfg: &RunConfig, out: &Output) -> anyhow::Result<()> {
    nonempty_grid(cfg)?;
    match cfg.scenario {
        ScenarioArg::Coordinated => {}
        ScenarioArg::Uncoordinated => return simulate(cfg, out),
        ScenarioArg::Oma => bail!(UsageError("use --oma to add the OMA baseline to a coordinated sweep".into())),
    }
    let columns: Vec<&str> = std::iter::once("scheme").chain(ANALYZE_COLUMNS).collect();
    let mut sink = out.sink(cfg, &columns)?;
    let result = (|| -> anyhow::Result<()> {
        for &snr_db in &cfg.snr_db {
            out.progress(|| format!("sweep: {snr_db} dB"));
            let sys = system(cfg, snr_db)?;
            let analysis = markov::analyze(&sys).with_context(|| format!("at {snr_db} dB"))?;
            for row in analysis_rows(&analysis, cfg, snr_db)? {
                sink.row(std::iter::once("noma".into()).chain(row).collect())?;
            }
            if cfg.oma {
                let oma = montecarlo::oma_analysis(&sys).with_context(|| format!("OMA at {snr_db} dB"))?;
                let row = analysis_row("all".into(), (oma.per, oma.success_prob, oma.throughput), cfg, snr_db)?;
                sink.row(std::iter::once("oma".into()).chain(row).collect())?;
            }
        }
        Ok(())
    })();
    // completed grid points are kept even if a later one fails
    sink.finish()?;
    result
}

fn sim_config(cfg: &RunConfig, snr_db: f64) -> anyhow::Result<SimConfig> {
    let system = system(cfg, snr_db)?;
    let mut sim = match cfg.scenario {
        ScenarioArg::Uncoordinated => SimConfig::uncoordinated(system, cfg.users, cfg.slots, cfg.seed),
        _ => SimConfig::coordinated(system, cfg.slots, cfg.seed),
    };
    sim.warmup = cfg.warmup;
    sim.replications = cfg.replications;
    sim.r_outer = cfg.r_outer;
    sim.path_loss_exp = cfg.path_loss_exp;
    sim.episode_slots = cfg.episode_slots;
    sim.tx_cap_factor = cfg.tx_cap_factor;
    Ok(sim)
}

fn montecarlo_rows(cfg: &RunConfig, sim: &SimConfig, snr_db: f64, r: &SimResult) -> Vec<Vec<Value>> {
    let code = sim.system.code;
    let scenario = match (cfg.scenario, r.scenario) {
        (ScenarioArg::Oma, _) => "oma",
        (_, Scenario::Coordinated) => "coordinated",
        (_, Scenario::Uncoordinated) => "uncoordinated",
    };
    let row = |user: Value, per: f64, se: f64, ps: f64, eta: f64, power: Option<f64>| {
        vec![
            scenario.into(),
            sim.n_actual.into(),
            sim.n_hat.into(),
            num(snr_db),
            num(code.rate()),
            code.n.into(),
            user,
            num(per),
            num(se),
            num(ps),
            num(eta),
            power.map_or(Value::Null, num),
            num(r.cap_fraction),
            sim.seed.into(),
        ]
    };
    let mut rows: Vec<Vec<Value>> = r
        .users
        .iter()
        .enumerate()
        .map(|(i, u)| row(i.into(), u.per, u.per_stderr, u.success_prob, u.throughput, u.mean_tx_power))
        .collect();
    let n = r.users.len() as f64;
    let mean = |f: fn(&montecarlo::UserSimStats) -> f64| r.users.iter().map(f).sum::<f64>() / n;
    let power = r.users.iter().map(|u| u.mean_tx_power).sum::<Option<f64>>().map(|p| p / n);
    rows.push(row("all".into(), r.average_per, r.average_per_stderr, mean(|u| u.success_prob), mean(|u| u.throughput), power));
    rows
}

/// Slot-level simulation over the SNR grid; one row per user plus an `all` row.
pub fn simulate(cfg: &RunConfig, out: &Output) -> anyhow::Result<()> {
    nonempty_grid(cfg)?;
    let mut sink = out.sink(cfg, &MONTECARLO_COLUMNS)?;
    let result = (|| -> anyhow::Result<()> {
        for &snr_db in &cfg.snr_db {
            out.progress(|| format!("simulate: {snr_db} dB"));
            let sim = sim_config(cfg, snr_db)?;
            let r = match cfg.scenario {
                ScenarioArg::Coordinated => montecarlo::simulate_coordinated(&sim),
                ScenarioArg::Uncoordinated => montecarlo::simulate_uncoordinated(&sim),
                ScenarioArg::Oma => montecarlo::simulate_oma_baseline(&sim),
            }
            .with_context(|| format!("at {snr_db} dB"))?;
            for row in montecarlo_rows(cfg, &sim, snr_db, &r) {
                sink.row(row)?;
            }
        }
        Ok(())
    })();
    sink.finish()?;
    result
}

pub fn optimize_pareto(cfg: &RunConfig, out: &Output) -> anyhow::Result<()> {
    nonempty_grid(cfg)?;
    out.progress(|| format!("pareto: {} grid points", cfg.snr_db.len()));
    let front = optimizer::pareto_front(cfg.users, cfg.code()?, &cfg.snr_db, &cfg.ga)?;
    let columns: Vec<String> =
        ["p0_db".to_string(), "max_per".into()].into_iter().chain((1..=cfg.users).map(|i| format!("alpha_{i}"))).collect();
    let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut sink = out.sink(cfg, &columns)?;
    for p in front {
        sink.row([num(p.p0_db), num(p.max_per)].into_iter().chain(p.alphas.iter().map(|&a| num(a))).collect())?;
    }
    sink.finish()
}

pub fn min_blocklength(cfg: &RunConfig, out: &Output) -> anyhow::Result<()> {
    let snr_db = single_snr(cfg)?;
    let search = BlocklengthSearch { n_cap: cfg.n_cap, stride: cfg.stride };
    out.progress(|| format!("min-blocklength: N = {}, k = {}, target {}", cfg.users, cfg.info_bits, cfg.target_per));
    let res = optimizer::min_blocklength(cfg.info_bits, snr_db, cfg.users, cfg.target_per, &cfg.ga, &search)?;
    let columns: Vec<String> = ["N", "k", "snr_db", "target_per", "n_min", "max_per"]
        .into_iter()
        .map(String::from)
        .chain((1..=cfg.users).map(|i| format!("alpha_{i}")))
        .collect();
    let columns: Vec<&str> = columns.iter().map(String::as_str).collect();
    let mut sink = out.sink(cfg, &columns)?;
    let head = [
        cfg.users.into(),
        cfg.info_bits.into(),
        num(snr_db),
        num(cfg.target_per),
        res.n.into(),
        num(res.max_per),
    ];
    sink.row(head.into_iter().chain(res.alphas.iter().map(|&a| num(a))).collect())?;
    sink.finish()
}

pub fn cellplan(cfg: &RunConfig, out: &Output) -> anyhow::Result<()> {
    let n_hat = cfg.n_hat.unwrap_or(cfg.users);
    let plan = CellPlan::new(n_hat, cfg.r_outer, &cfg.alphas, cfg.rotation)?;
    match out.format {
        Format::Json => write_json(
            out.path.as_deref(),
            cfg,
            json!({
                "n_hat": plan.n_hat,
                "r_outer": plan.r_outer,
                "ring_radii": plan.ring_radii,
                "assignment": plan.assignment,
                "rotation": plan.rotation,
                "alphas": plan.alphas,
            }),
        ),
        Format::Csv => {
            let columns = ["ring", "sector", "r_inner", "r_outer", "angle_from", "angle_to", "ratio_index", "alpha"];
            let mut sink = out.sink(cfg, &columns)?;
            let width = std::f64::consts::TAU / n_hat as f64;
            for ring in 0..n_hat {
                let inner = if ring == 0 { 0.0 } else { plan.ring_radii[ring - 1] };
                for sector in 0..n_hat {
                    sink.row(vec![
                        ring.into(),
                        sector.into(),
                        num(inner),
                        num(plan.ring_radii[ring]),
                        num(width * sector as f64),
                        num(width * (sector + 1) as f64),
                        plan.ratio_index(ring, sector).into(),
                        num(plan.alpha(ring, sector)),
                    ])?;
                }
            }
            sink.finish()
        }
    }
}
