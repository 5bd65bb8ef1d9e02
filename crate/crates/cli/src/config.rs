use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, ValueEnum};
use noma_harq::optimizer::GaParams;
use noma_harq::presets::{reference_allocation, REFERENCE_BLOCKLENGTH};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandName {
    Analyze,
    Sweep,
    OptimizePareto,
    MinBlocklength,
    Simulate,
    Cellplan,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioArg {
    Coordinated,
    Uncoordinated,
    Oma,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Everything a run depends on. Written into every output header, and
/// accepted back through `--config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub command: CommandName,
    pub users: usize,
    /// Power splitting ratios. Empty means the reference allocation for
    /// `users` (or `n_hat` when planning cells) at `rate`, else equal split.
    pub alphas: Vec<f64>,
    /// Total received SNR `P0` in dB. One value for `analyze`, a grid otherwise.
    pub snr_db: Vec<f64>,
    pub rate: f64,
    pub blocklength: u32,
    /// Information bits `k` for `min-blocklength`.
    pub info_bits: u32,
    pub target_per: f64,
    pub n_hat: Option<usize>,
    pub scenario: ScenarioArg,
    pub slots: u64,
    pub warmup: u64,
    pub replications: usize,
    pub seed: u64,
    pub r_outer: f64,
    pub path_loss_exp: f64,
    pub episode_slots: u64,
    pub tx_cap_factor: Option<f64>,
    pub rotation: usize,
    pub oma: bool,
    pub n_cap: u32,
    pub stride: u32,
    pub ga: GaParams,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: CommandName::Analyze,
            users: 3,
            alphas: Vec::new(),
            snr_db: vec![0.0],
            rate: 0.25,
            blocklength: REFERENCE_BLOCKLENGTH,
            info_bits: 50,
            target_per: 1e-2,
            n_hat: None,
            scenario: ScenarioArg::Coordinated,
            slots: 1_000_000,
            warmup: 1_000,
            replications: 1,
            seed: 1,
            r_outer: 1500.0,
            path_loss_exp: 3.0,
            episode_slots: 1_000,
            tx_cap_factor: Some(1e3),
            rotation: 0,
            oma: false,
            n_cap: 4096,
            stride: 8,
            ga: GaParams::default(),
        }
    }
}

/// Flags shared by all commands; each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// JSON config, or an earlier output file whose `# config:` header is re-read.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; stdout if omitted.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// SNR in dB: a value, a comma list, or `from:to:step`.
    #[arg(long, global = true, allow_hyphen_values = true, value_parser = parse_grid)]
    pub snr_db: Option<Grid>,
    #[arg(long, global = true)]
    pub users: Option<usize>,
    /// Comma-separated power splitting ratios, summing to one.
    #[arg(long, global = true, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Code rate `k / n`.
    #[arg(long, global = true)]
    pub rate: Option<f64>,
    /// Codeword length `n`.
    #[arg(long, global = true)]
    pub blocklength: Option<u32>,
    #[arg(long, global = true)]
    pub target_per: Option<f64>,
    #[arg(long, global = true)]
    pub n_hat: Option<usize>,
    #[arg(long, global = true)]
    pub slots: Option<u64>,
    /// Information bits `k` (min-blocklength).
    #[arg(long, global = true)]
    pub info_bits: Option<u32>,
    #[arg(long, global = true, value_enum)]
    pub scenario: Option<ScenarioArg>,
    #[arg(long, global = true)]
    pub warmup: Option<u64>,
    #[arg(long, global = true)]
    pub replications: Option<usize>,
    /// Transmit power cap as a multiple of the mean-channel power; 0 disables it.
    #[arg(long, global = true)]
    pub tx_cap_factor: Option<f64>,
    #[arg(long, global = true)]
    pub episode_slots: Option<u64>,
    #[arg(long, global = true)]
    pub r_outer: Option<f64>,
    #[arg(long, global = true)]
    pub rotation: Option<usize>,
    /// Add the OMA-HARQ baseline to `sweep`.
    #[arg(long, global = true)]
    pub oma: bool,
    #[arg(long, global = true)]
    pub population: Option<usize>,
    #[arg(long, global = true)]
    pub generations: Option<usize>,
    /// Largest codeword length tried by min-blocklength.
    #[arg(long, global = true)]
    pub n_cap: Option<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid(pub Vec<f64>);

pub fn parse_grid(s: &str) -> Result<Grid, String> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{t}`: {e}"));
    if s.contains(':') {
        let parts: Vec<&str> = s.split(':').collect();
        let [from, to, step] = parts[..] else {
            return Err("a range is written from:to:step".into());
        };
        let (from, to, step) = (num(from)?, num(to)?, num(step)?);
        if step.is_nan() || step <= 0.0 || to < from {
            return Err("a range needs from <= to and a positive step".into());
        }
        let count = ((to - from) / step + 1e-9).floor() as usize + 1;
        return Ok(Grid((0..count).map(|i| from + step * i as f64).collect()));
    }
    s.split(',').map(num).collect::<Result<Vec<_>, _>>().map(Grid)
}

/// Reads a JSON config, or the `# config:` line of an earlier output.
pub fn load(path: &Path) -> anyhow::Result<RunConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(line) = text.lines().find_map(|l| l.strip_prefix("# config: ")) {
        return serde_json::from_str(line).context("parsing the config header");
    }
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    // JSON outputs carry the config under "config"
    let value = match value {
        serde_json::Value::Object(mut map) if map.contains_key("rows") => map.remove("config").unwrap_or_default(),
        other => other,
    };
    serde_json::from_value(value).context("parsing the config")
}

impl RunConfig {
    pub fn apply(&mut self, o: &Overrides) {
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = &o.$field {
                    self.$field = v.clone();
                }
            )*};
        }
        set!(seed, users, alphas, rate, blocklength, target_per, slots, info_bits, scenario, warmup, replications);
        set!(episode_slots, r_outer, rotation, n_cap);
        if let Some(g) = &o.snr_db {
            self.snr_db = g.0.clone();
        }
        if o.n_hat.is_some() {
            self.n_hat = o.n_hat;
        }
        if let Some(c) = o.tx_cap_factor {
            self.tx_cap_factor = (c > 0.0).then_some(c);
        }
        if let Some(p) = o.population {
            self.ga.population_size = p;
        }
        if let Some(g) = o.generations {
            self.ga.generations = g;
        }
        if let Some(s) = o.seed {
            self.ga.seed = s;
        }
        self.oma |= o.oma;
    }

    /// Codeword length and information bits implied by `rate` and `blocklength`.
    pub fn code(&self) -> noma_harq::Result<noma_harq::fbl::CodeParams> {
        noma_harq::fbl::CodeParams::from_rate(self.blocklength, self.rate)
    }

    /// Fills in default ratios for `count` users so the header records them.
    pub fn resolve_alphas(&mut self, count: usize) -> anyhow::Result<()> {
        if self.alphas.is_empty() {
            self.alphas = match reference_allocation(count, self.rate) {
                Ok(row) if self.blocklength == REFERENCE_BLOCKLENGTH => row.normalized_alphas(),
                _ => vec![1.0 / count as f64; count],
            };
        }
        if self.alphas.len() != count {
            bail!(UsageError(format!("expected {count} ratios, got {}", self.alphas.len())));
        }
        Ok(())
    }
}

/// Bad input; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grids() {
        assert_eq!(parse_grid("1.5").unwrap(), Grid(vec![1.5]));
        assert_eq!(parse_grid("-2,0,2").unwrap(), Grid(vec![-2.0, 0.0, 2.0]));
        assert_eq!(parse_grid("0:1:0.25").unwrap().0.len(), 5);
        assert!(parse_grid("1:0:1").is_err());
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("a").is_err());
    }

    #[test]
    fn config_roundtrips_through_json() {
        let cfg = RunConfig { alphas: vec![0.2, 0.8], users: 2, ..Default::default() };
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        assert!(serde_json::from_str::<RunConfig>(r#"{"bogus": 1}"#).is_err());
        let partial: RunConfig = serde_json::from_str(r#"{"users": 4}"#).unwrap();
        assert_eq!(partial.users, 4);
        assert_eq!(partial.rate, 0.25);
    }
}
