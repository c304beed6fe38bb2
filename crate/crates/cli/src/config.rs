//! The run specification: one structured config file describes one run.

use crate::error::{CliError, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub command: CommandKind,
    /// Root seed; there is no wall-clock fallback.
    pub seed: u64,
    pub output: PathBuf,
    pub base: BaseConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub predictors: Option<Vec<PredictorSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<AlphaSweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<TrainSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub looptab: Option<LooptabSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theory: Option<TheorySpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandKind {
    Curve,
    AlphaSweep,
    Train,
    Looptab,
    TheoryTable,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Curve => "curve",
            CommandKind::AlphaSweep => "alpha_sweep",
            CommandKind::Train => "train",
            CommandKind::Looptab => "looptab",
            CommandKind::TheoryTable => "theory_table",
        }
    }
}

/// Shared experiment parameters; sweeps override one of them per point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BaseConfig {
    pub d: usize,
    pub sigma: f64,
    pub n: usize,
    pub p: f64,
    pub trials: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub parameter: SweepParameter,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParameter {
    /// Expected labeled count; sets `p = value / n`.
    Np,
    /// Total samples at a fixed expected labeled count; sets `p = n0 p0 / value`.
    N,
    P,
    Sigma,
    D,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredictorSpec {
    Spi,
    SspiK { k: usize, alpha: AlphaChoice },
    SspiInf { alpha: AlphaChoice },
    Attn(StackSpec),
    Poly { coeffs: Vec<f64> },
}

impl PredictorSpec {
    /// Stable label used in the curve CSV.
    pub fn label(&self) -> String {
        match self {
            PredictorSpec::Spi => "spi".into(),
            PredictorSpec::SspiK { k, .. } => format!("sspi_{k}"),
            PredictorSpec::SspiInf { .. } => "sspi_inf".into(),
            PredictorSpec::Attn(spec) => match spec.looped {
                Some(depth) => format!("attn_looped_l{depth}"),
                None => format!("attn_l{}", spec.layers.len()),
            },
            PredictorSpec::Poly { coeffs } => format!("poly_deg{}", coeffs.len() - 1),
        }
    }
}

/// A fixed mixing weight or `"auto"` to tune it per sweep point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AlphaChoice {
    Fixed(f64),
    Auto(AutoKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutoKeyword {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackSpec {
    pub layers: Vec<LayerSpec>,
    pub head_scale: f64,
    /// Loop count: reuse a single layer this many times. Requires exactly one
    /// entry in `layers`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub looped: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub a: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaSweepSpec {
    pub k: OrderSpec,
    /// Tasks per objective evaluation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub search_trials: Option<usize>,
}

/// A finite covariance power or `"inf"`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OrderSpec {
    Finite(usize),
    Infinite(InfKeyword),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfKeyword {
    Inf,
}

impl OrderSpec {
    pub fn to_order(self) -> ssicl_core::experiments::SspiOrder {
        match self {
            OrderSpec::Finite(k) => ssicl_core::experiments::SspiOrder::Power(k),
            OrderSpec::Infinite(_) => ssicl_core::experiments::SspiOrder::Infinity,
        }
    }

    pub fn label(self) -> String {
        match self {
            OrderSpec::Finite(k) => k.to_string(),
            OrderSpec::Infinite(_) => "inf".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSpec {
    pub layers: usize,
    #[serde(default)]
    pub looped: bool,
    pub restarts: usize,
    pub steps: usize,
    /// Trials for the final Monte-Carlo evaluation; defaults to `base.trials`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_trials: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LooptabSpec {
    pub csv: PathBuf,
    pub label_column: String,
    #[serde(default)]
    pub missing_token: String,
    #[serde(default)]
    pub test_fraction: f64,
    pub loops: usize,
    pub base: LooptabBaseSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LooptabBaseSpec {
    SspiInf {
        alpha: f64,
        #[serde(default)]
        sigma: f64,
    },
    Attn(StackSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TheorySpec {
    /// Inner Monte-Carlo trials for the analytic error column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_trials: Option<usize>,
}

pub fn load(path: &Path) -> Result<RunSpec> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::config(format!("invalid config: {e}")))
}

/// Structural checks beyond what serde enforces.
pub fn validate(spec: &RunSpec) -> Result<()> {
    let base = &spec.base;
    if base.d == 0 || base.n == 0 {
        return Err(CliError::config("base.d and base.n must be at least 1"));
    }
    if !(0.0..=1.0).contains(&base.p) {
        return Err(CliError::config("base.p must lie in [0, 1]"));
    }
    if base.sigma < 0.0 {
        return Err(CliError::config("base.sigma must be nonnegative"));
    }
    if base.trials == 0 {
        return Err(CliError::config("base.trials must be at least 1"));
    }
    match spec.command {
        CommandKind::Curve => {
            let sweep = require(&spec.sweep, "curve", "sweep")?;
            if sweep.values.is_empty() {
                return Err(CliError::config("sweep.values must be nonempty"));
            }
            let predictors = require(&spec.predictors, "curve", "predictors")?;
            if predictors.is_empty() {
                return Err(CliError::config("predictors must be nonempty"));
            }
            for pred in predictors {
                if let PredictorSpec::Attn(stack) = pred {
                    if stack.layers.is_empty() {
                        return Err(CliError::config("attn predictor needs at least one layer"));
                    }
                }
                if let PredictorSpec::Poly { coeffs } = pred {
                    if coeffs.is_empty() {
                        return Err(CliError::config("poly predictor needs coefficients"));
                    }
                }
            }
        }
        CommandKind::AlphaSweep => {
            let sweep = require(&spec.sweep, "alpha_sweep", "sweep")?;
            if sweep.values.is_empty() {
                return Err(CliError::config("sweep.values must be nonempty"));
            }
            require(&spec.alpha, "alpha_sweep", "alpha")?;
        }
        CommandKind::Train => {
            let train = require(&spec.train, "train", "train")?;
            if train.layers == 0 || train.restarts == 0 {
                return Err(CliError::config(
                    "train.layers and train.restarts must be at least 1",
                ));
            }
        }
        CommandKind::Looptab => {
            let looptab = require(&spec.looptab, "looptab", "looptab")?;
            if !(0.0..1.0).contains(&looptab.test_fraction) {
                return Err(CliError::config("looptab.test_fraction must lie in [0, 1)"));
            }
        }
        CommandKind::TheoryTable => {
            // An empty sweep is allowed here: it emits an empty table.
            require(&spec.sweep, "theory_table", "sweep")?;
        }
    }
    Ok(())
}

fn require<'a, T>(field: &'a Option<T>, command: &str, name: &str) -> Result<&'a T> {
    field
        .as_ref()
        .ok_or_else(|| CliError::config(format!("`{command}` requires the `{name}` section")))
}

/// One sweep point resolved against the base configuration.
#[derive(Debug, Clone, Copy)]
pub struct Scenario {
    pub d: usize,
    pub sigma: f64,
    pub n: usize,
    pub p: f64,
}

pub fn apply_sweep(base: &BaseConfig, parameter: SweepParameter, value: f64) -> Result<Scenario> {
    let mut scenario = Scenario {
        d: base.d,
        sigma: base.sigma,
        n: base.n,
        p: base.p,
    };
    match parameter {
        SweepParameter::Np => {
            let p = value / base.n as f64;
            if !(p > 0.0 && p <= 1.0) {
                return Err(CliError::config(format!(
                    "np = {value} needs p in (0, 1] at n = {}",
                    base.n
                )));
            }
            scenario.p = p;
        }
        SweepParameter::N => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(CliError::config(format!(
                    "n = {value} is not a positive integer"
                )));
            }
            let np = base.n as f64 * base.p;
            let p = np / value;
            if !(p > 0.0 && p <= 1.0) {
                return Err(CliError::config(format!(
                    "n = {value} makes p = {p}, outside (0, 1]"
                )));
            }
            scenario.n = value as usize;
            scenario.p = p;
        }
        SweepParameter::P => {
            if !(0.0..=1.0).contains(&value) {
                return Err(CliError::config(format!("p = {value} outside [0, 1]")));
            }
            scenario.p = value;
        }
        SweepParameter::Sigma => {
            if value < 0.0 {
                return Err(CliError::config(format!("sigma = {value} is negative")));
            }
            scenario.sigma = value;
        }
        SweepParameter::D => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(CliError::config(format!(
                    "d = {value} is not a positive integer"
                )));
            }
            scenario.d = value as usize;
        }
    }
    Ok(scenario)
}
