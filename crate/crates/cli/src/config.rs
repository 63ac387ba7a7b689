//! Run configuration: TOML files with one table per command, overridden by
//! command-line flags. Every output file starts with the resolved
//! configuration as `# `-prefixed TOML, and such a file can be passed back
//! through `--config` to reproduce it.

use std::path::Path;

use ddlab_core::covariance::{profile_with_condition, ProfileKind, Spectrum};
use ddlab_core::{RegressionProblem, Vector};
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const HEADER_PREFIX: &str = "# ";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Monte Carlo trials; the starting count for adaptive runs. Each
    /// command has its own default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    pub curve: CurveConfig,
    pub discrepancy: DiscrepancyConfig,
    pub dp_verify: DpConfig,
    pub sample: SampleConfig,
}

impl RunConfig {
    /// Resolved trial count; commands run after [`RunConfig::resolve_trials`].
    pub fn trials(&self) -> usize {
        self.trials.expect("trial count resolved before running")
    }

    pub fn resolve_trials(&mut self, default: usize) {
        self.trials.get_or_insert(default);
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            trials: None,
            curve: CurveConfig::default(),
            discrepancy: DiscrepancyConfig::default(),
            dp_verify: DpConfig::default(),
            sample: SampleConfig::default(),
        }
    }
}

/// Either `"uniform"` (`w* ∝ ones` with `||w*||^2 = snr * sigma2`) or an
/// explicit list in eigenbasis coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WeightSpec {
    Named(String),
    Explicit(Vec<f64>),
}

impl Default for WeightSpec {
    fn default() -> Self {
        WeightSpec::Named("uniform".to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Vary `n` at fixed `d`.
    N,
    /// Vary `d` at fixed `n`.
    D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurveConfig {
    pub mode: SweepMode,
    pub profile: String,
    /// One output file per condition number.
    pub kappa: Vec<f64>,
    pub d: usize,
    pub n: usize,
    /// `[start, stop, step]`, inclusive; used when `values` is empty.
    pub range: [usize; 3],
    pub values: Vec<usize>,
    pub sigma2: f64,
    pub snr: f64,
    pub w_star: WeightSpec,
    pub mc: bool,
}

impl Default for CurveConfig {
    fn default() -> Self {
        Self {
            mode: SweepMode::N,
            profile: "diag_exp".to_string(),
            kappa: vec![1.0, 1e2, 1e4],
            d: 100,
            n: 100,
            range: [10, 190, 10],
            values: Vec::new(),
            sigma2: 1.0,
            snr: 1.0,
            w_star: WeightSpec::default(),
            mc: true,
        }
    }
}

impl CurveConfig {
    pub fn grid(&self) -> Result<Vec<usize>, CliError> {
        if !self.values.is_empty() {
            return Ok(self.values.clone());
        }
        let [start, stop, step] = self.range;
        if step == 0 || start == 0 || start > stop {
            return Err(CliError::Invalid(format!(
                "range must be [start >= 1, stop >= start, step >= 1], got {:?}",
                self.range
            )));
        }
        Ok((start..=stop).step_by(step).collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiscrepancyConfig {
    pub kind: String,
    pub profile: String,
    pub kappa: f64,
    pub aspects: Vec<f64>,
    pub dims: Vec<usize>,
    /// Relative CI half-width at which trial doubling stops.
    pub target: f64,
    pub cap: usize,
    /// Bias points above this dimension run once at the starting trial count
    /// and are flagged.
    pub bias_max_d: usize,
}

impl Default for DiscrepancyConfig {
    fn default() -> Self {
        Self {
            kind: "variance".to_string(),
            profile: "identity".to_string(),
            kappa: 1e4,
            aspects: vec![0.25, 0.5, 0.75],
            dims: vec![10, 20, 40, 80, 160],
            target: 0.125,
            cap: 64_000,
            bias_max_d: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DpConfig {
    pub scenario: String,
    pub d: usize,
    pub gamma: f64,
    pub profile: String,
    pub kappa: f64,
    /// Explicit covariance eigenvalues; overrides `profile` when non-empty.
    pub eigenvalues: Vec<f64>,
}

impl Default for DpConfig {
    fn default() -> Self {
        Self {
            scenario: "gaussian_entries".to_string(),
            d: 3,
            gamma: 1.0,
            profile: "identity".to_string(),
            kappa: 1.0,
            eigenvalues: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SampleConfig {
    pub profile: String,
    pub kappa: f64,
    pub d: usize,
    pub n: usize,
    pub law: String,
    /// Chain steps per draw; `0` means `100 k`.
    pub chain_steps: usize,
    pub sigma2: f64,
    pub snr: f64,
    pub w_star: WeightSpec,
    /// Independent draws; only the first design is written out.
    pub repeat: usize,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            profile: "identity".to_string(),
            kappa: 1.0,
            d: 10,
            n: 5,
            law: "gaussian".to_string(),
            chain_steps: 0,
            sigma2: 1.0,
            snr: 1.0,
            w_star: WeightSpec::default(),
            repeat: 1,
        }
    }
}

/// First line of every output header.
const HEADER_TAG: &str = "# ddlab ";

/// Reads a config file. Files starting with an output header are treated as
/// previous outputs and only their header block is parsed.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Invalid(format!("cannot read {}: {e}", path.display())))?;
    parse(&text).map_err(|e| CliError::Invalid(format!("{}: {e}", path.display())))
}

pub fn parse(text: &str) -> Result<RunConfig, String> {
    let body = if text.starts_with(HEADER_TAG) {
        text.lines()
            .take_while(|l| l.starts_with('#'))
            .map(|l| l.strip_prefix('#').unwrap_or(l).strip_prefix(' ').unwrap_or(""))
            .filter(|l| !l.starts_with("ddlab "))
            .collect::<Vec<_>>()
            .join("\n")
    } else {
        text.to_string()
    };
    toml::from_str(&body).map_err(|e| e.to_string())
}

/// The resolved configuration of one command, as header lines.
pub fn header(command: &str, cfg: &RunConfig) -> String {
    let section = match command {
        "curve" => toml::Value::try_from(&cfg.curve),
        "discrepancy" => toml::Value::try_from(&cfg.discrepancy),
        "dp-verify" => toml::Value::try_from(&cfg.dp_verify),
        _ => toml::Value::try_from(&cfg.sample),
    }
    .expect("config serializes");
    let mut root = toml::map::Map::new();
    root.insert("seed".into(), toml::Value::Integer(cfg.seed as i64));
    if let (Some(t), false) = (cfg.trials, command == "sample") {
        root.insert("trials".into(), toml::Value::Integer(t as i64));
    }
    root.insert(command.replace('-', "_"), section);
    let body = toml::to_string(&toml::Value::Table(root)).expect("config serializes");
    let mut out = format!("{HEADER_TAG}{command}\n");
    for line in body.lines() {
        if line.is_empty() {
            out.push_str("#\n");
        } else {
            out.push_str(HEADER_PREFIX);
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

/// `"identity"` or a decay profile with condition number `kappa`.
pub fn spectrum(profile: &str, d: usize, kappa: f64) -> Result<Spectrum, CliError> {
    if profile == "identity" {
        return Ok(Spectrum::isotropic(d, 1.0)?);
    }
    let kind: ProfileKind = profile.parse()?;
    Ok(profile_with_condition(kind, d, kappa)?)
}

pub fn problem(
    s: Spectrum,
    sigma2: f64,
    snr: f64,
    w: &WeightSpec,
) -> Result<RegressionProblem, CliError> {
    let d = s.dim();
    let w_star = match w {
        WeightSpec::Named(name) if name == "uniform" => {
            if !(snr >= 0.0 && snr.is_finite()) {
                return Err(CliError::Invalid(format!("snr must be >= 0, got {snr}")));
            }
            Vector::from_element(d, (snr * sigma2 / d as f64).sqrt())
        }
        WeightSpec::Named(other) => {
            return Err(CliError::Invalid(format!(
                "unknown w_star {other:?} (expected \"uniform\" or a list)"
            )))
        }
        WeightSpec::Explicit(v) => Vector::from_vec(v.clone()),
    };
    Ok(RegressionProblem::new(s, w_star, sigma2)?)
}
