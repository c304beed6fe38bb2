//! Command implementations: each resolves sweep points against the base
//! configuration, derives per-point seeds, and writes one CSV or JSON file.

use crate::config::{
    apply_sweep, AlphaChoice, CommandKind, LooptabBaseSpec, PredictorSpec, RunSpec, Scenario,
    StackSpec,
};
use crate::error::{CliError, Result};
use serde::Serialize;
use ssicl_core::attention::{AttnLayerParams, AttnStack};
use ssicl_core::estimators::PolyCoeffs;
use ssicl_core::experiments::{
    mc_accuracy, optimize_alpha, train_stack, ExperimentConfig, Predictor, SspiOrder,
    DEFAULT_ALPHA_TRIALS,
};
use ssicl_core::looptab::{load_csv, loop_tab_fm, AttnStackBase, CsvOptions, SspiInfBase};
use ssicl_core::rng::{substream, Stream};
use ssicl_core::theory::{
    oracle_error, spi_error, spi_error_upper, w_star_scalar, ErrorEstimate, DEFAULT_ERROR_TRIALS,
};
use std::path::Path;

/// Derives an independent 64-bit seed for a namespaced point of the run.
fn derive_seed(seed: u64, lane: u64, index: u64) -> u64 {
    ssicl_core::rng::derive_seed(seed, (lane << 32) | index)
}

/// Auxiliary stream far away from the per-trial substream range.
fn aux_stream(seed: u64, tag: u64) -> Stream {
    substream(seed, (1 << 63) | tag)
}

fn build_stack(spec: &StackSpec) -> Result<AttnStack<f64>> {
    let layers: Vec<AttnLayerParams<f64>> = spec
        .layers
        .iter()
        .map(|l| AttnLayerParams { a: l.a, b: l.b })
        .collect();
    let stack = match spec.looped {
        Some(depth) => {
            if layers.len() != 1 {
                return Err(CliError::config(
                    "a looped stack takes exactly one layer entry plus the loop count",
                ));
            }
            AttnStack::looped(layers[0], depth, spec.head_scale)
        }
        None => AttnStack::new(layers, spec.head_scale),
    };
    stack.map_err(CliError::from)
}

fn resolve_alpha(
    choice: AlphaChoice,
    order: SspiOrder,
    scenario: &Scenario,
    search_trials: usize,
    rng: &mut Stream,
) -> Result<f64> {
    match choice {
        AlphaChoice::Fixed(alpha) => {
            if !(0.0..=1.0).contains(&alpha) {
                return Err(CliError::config(format!("alpha = {alpha} outside [0, 1]")));
            }
            Ok(alpha)
        }
        AlphaChoice::Auto(_) => Ok(optimize_alpha(
            scenario.d,
            scenario.sigma,
            scenario.n,
            scenario.p,
            order,
            search_trials,
            rng,
        )?),
    }
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .map_err(|e| CliError::io(format!("cannot create {}: {e}", parent.display())))?;
        }
    }
    std::fs::write(path, bytes)
        .map_err(|e| CliError::io(format!("cannot write {}: {e}", path.display())))
}

#[derive(Debug, Serialize)]
struct CurveRow<'a> {
    sweep_value: f64,
    predictor: &'a str,
    accuracy: f64,
    std_err: f64,
    analytic_reference: Option<f64>,
}

pub fn run_curve(spec: &RunSpec) -> Result<()> {
    let sweep = spec.sweep.as_ref().expect("validated");
    let predictors = spec.predictors.as_ref().expect("validated");
    let error_trials = spec
        .theory
        .as_ref()
        .and_then(|t| t.error_trials)
        .unwrap_or(DEFAULT_ERROR_TRIALS);

    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    for (pred_idx, pred) in predictors.iter().enumerate() {
        let label = pred.label();
        for (value_idx, &value) in sweep.values.iter().enumerate() {
            let scenario = apply_sweep(&spec.base, sweep.parameter, value)?;
            let point_seed = derive_seed(spec.seed, pred_idx as u64, value_idx as u64);
            let predictor = match pred {
                PredictorSpec::Spi => Predictor::Spi,
                PredictorSpec::SspiK { k, alpha } => Predictor::SspiK {
                    k: *k,
                    alpha: resolve_alpha(
                        *alpha,
                        SspiOrder::Power(*k),
                        &scenario,
                        DEFAULT_ALPHA_TRIALS,
                        &mut aux_stream(point_seed, 1),
                    )?,
                },
                PredictorSpec::SspiInf { alpha } => Predictor::SspiInf {
                    alpha: resolve_alpha(
                        *alpha,
                        SspiOrder::Infinity,
                        &scenario,
                        DEFAULT_ALPHA_TRIALS,
                        &mut aux_stream(point_seed, 1),
                    )?,
                },
                PredictorSpec::Attn(stack_spec) => Predictor::Attn(build_stack(stack_spec)?),
                PredictorSpec::Poly { coeffs } => Predictor::Poly(PolyCoeffs::new(coeffs.clone())?),
            };
            let point = mc_accuracy(&ExperimentConfig {
                d: scenario.d,
                sigma: scenario.sigma,
                n: scenario.n,
                p: scenario.p,
                trials: spec.base.trials,
                seed: point_seed,
                predictor,
            })?;
            let analytic_reference = match pred {
                PredictorSpec::Spi => Some(
                    1.0 - spi_error(
                        scenario.n,
                        scenario.p,
                        scenario.sigma,
                        scenario.d,
                        error_trials,
                        &mut aux_stream(point_seed, 2),
                    )?
                    .value,
                ),
                PredictorSpec::SspiInf { .. } => {
                    Some(1.0 - oracle_error(scenario.n as f64 * scenario.p, scenario.sigma))
                }
                _ => None,
            };
            writer
                .serialize(CurveRow {
                    sweep_value: value,
                    predictor: &label,
                    accuracy: point.accuracy,
                    std_err: point.std_err,
                    analytic_reference,
                })
                .map_err(|e| CliError::io(e.to_string()))?;
        }
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::io(e.to_string()))?;
    write_output(&spec.output, &bytes)
}

#[derive(Debug, Serialize)]
struct AlphaRow {
    sweep_value: f64,
    k: String,
    alpha_star: f64,
}

pub fn run_alpha_sweep(spec: &RunSpec) -> Result<()> {
    let sweep = spec.sweep.as_ref().expect("validated");
    let alpha_spec = spec.alpha.as_ref().expect("validated");
    let trials = alpha_spec.search_trials.unwrap_or(DEFAULT_ALPHA_TRIALS);
    let order = alpha_spec.k.to_order();

    let mut writer = csv::WriterBuilder::new().from_writer(Vec::new());
    for (value_idx, &value) in sweep.values.iter().enumerate() {
        let scenario = apply_sweep(&spec.base, sweep.parameter, value)?;
        let point_seed = derive_seed(spec.seed, 0, value_idx as u64);
        let alpha_star = optimize_alpha(
            scenario.d,
            scenario.sigma,
            scenario.n,
            scenario.p,
            order,
            trials,
            &mut aux_stream(point_seed, 1),
        )?;
        writer
            .serialize(AlphaRow {
                sweep_value: value,
                k: alpha_spec.k.label(),
                alpha_star,
            })
            .map_err(|e| CliError::io(e.to_string()))?;
    }
    let bytes = writer
        .into_inner()
        .map_err(|e| CliError::io(e.to_string()))?;
    write_output(&spec.output, &bytes)
}

#[derive(Debug, Serialize)]
struct TrainReport {
    stack: AttnStack<f64>,
    best_restart: usize,
    restarts: Vec<ssicl_core::experiments::RestartReport<f64>>,
    holdout_best_accuracy: f64,
    holdout_mean_accuracy: f64,
    evaluation: EvalReport,
}

#[derive(Debug, Serialize)]
struct EvalReport {
    accuracy: f64,
    std_err: f64,
    trials: usize,
}

pub fn run_train(spec: &RunSpec) -> Result<()> {
    let train = spec.train.as_ref().expect("validated");
    let outcome = train_stack(
        train.layers,
        train.looped,
        spec.base.d,
        spec.base.sigma,
        spec.base.n,
        spec.base.p,
        train.restarts,
        train.steps,
        &mut substream(spec.seed, 0),
    )?;
    let (holdout_best, holdout_mean) = outcome.holdout_summary();

    let eval_trials = train.eval_trials.unwrap_or(spec.base.trials);
    let point = mc_accuracy(&ExperimentConfig {
        d: spec.base.d,
        sigma: spec.base.sigma,
        n: spec.base.n,
        p: spec.base.p,
        trials: eval_trials,
        seed: derive_seed(spec.seed, 1, 0),
        predictor: Predictor::Attn(outcome.stack.clone()),
    })?;

    let report = TrainReport {
        stack: outcome.stack,
        best_restart: outcome.best_restart,
        restarts: outcome.restarts,
        holdout_best_accuracy: holdout_best,
        holdout_mean_accuracy: holdout_mean,
        evaluation: EvalReport {
            accuracy: point.accuracy,
            std_err: point.std_err,
            trials: eval_trials,
        },
    };
    let json = serde_json::to_vec_pretty(&report).map_err(|e| CliError::io(e.to_string()))?;
    write_output(&spec.output, &json)
}

#[derive(Debug, Serialize)]
struct LooptabReport {
    per_iteration: Vec<ssicl_core::looptab::LoopIteration<f64>>,
    best_iteration: usize,
    best_val_risk: f64,
    best_test_accuracy: Option<f64>,
}

pub fn run_looptab(spec: &RunSpec) -> Result<()> {
    let looptab = spec.looptab.as_ref().expect("validated");
    let mut options = CsvOptions::new(looptab.label_column.clone());
    options.missing_label_token = looptab.missing_token.clone();
    options.test_fraction = looptab.test_fraction;
    options.seed = spec.seed;
    let split = load_csv::<f64>(&looptab.csv, &options)?;

    let result = match &looptab.base {
        LooptabBaseSpec::SspiInf { alpha, sigma } => loop_tab_fm(
            &split,
            looptab.loops,
            &SspiInfBase {
                alpha: *alpha,
                sigma: *sigma,
            },
        )?,
        LooptabBaseSpec::Attn(stack_spec) => loop_tab_fm(
            &split,
            looptab.loops,
            &AttnStackBase {
                stack: build_stack(stack_spec)?,
            },
        )?,
    };

    let report = LooptabReport {
        best_test_accuracy: result.best_test_accuracy(),
        best_iteration: result.best_iteration,
        best_val_risk: result.best_val_risk,
        per_iteration: result.per_iteration,
    };
    let json = serde_json::to_vec_pretty(&report).map_err(|e| CliError::io(e.to_string()))?;
    write_output(&spec.output, &json)
}

#[derive(Debug, Serialize)]
struct TheoryInputs {
    d: usize,
    sigma: f64,
    n: usize,
    p: f64,
    np: f64,
}

#[derive(Debug, Serialize)]
struct TheoryRecord {
    inputs: TheoryInputs,
    spi_error: ErrorEstimate<f64>,
    spi_error_upper: f64,
    oracle_error: f64,
    w_star: f64,
}

pub fn run_theory_table(spec: &RunSpec) -> Result<()> {
    let sweep = spec.sweep.as_ref().expect("validated");
    let error_trials = spec
        .theory
        .as_ref()
        .and_then(|t| t.error_trials)
        .unwrap_or(DEFAULT_ERROR_TRIALS);

    let mut records = Vec::new();
    for (value_idx, &value) in sweep.values.iter().enumerate() {
        let scenario = apply_sweep(&spec.base, sweep.parameter, value)?;
        let point_seed = derive_seed(spec.seed, 0, value_idx as u64);
        let np = scenario.n as f64 * scenario.p;
        records.push(TheoryRecord {
            inputs: TheoryInputs {
                d: scenario.d,
                sigma: scenario.sigma,
                n: scenario.n,
                p: scenario.p,
                np,
            },
            spi_error: spi_error(
                scenario.n,
                scenario.p,
                scenario.sigma,
                scenario.d,
                error_trials,
                &mut aux_stream(point_seed, 1),
            )?,
            spi_error_upper: spi_error_upper(scenario.n, scenario.p, scenario.sigma, scenario.d),
            oracle_error: oracle_error(np, scenario.sigma),
            w_star: w_star_scalar(scenario.n, scenario.p, scenario.sigma, scenario.d)?,
        });
    }
    let json = serde_json::to_vec_pretty(&records).map_err(|e| CliError::io(e.to_string()))?;
    write_output(&spec.output, &json)
}

pub fn dispatch(spec: &RunSpec) -> Result<()> {
    match spec.command {
        CommandKind::Curve => run_curve(spec),
        CommandKind::AlphaSweep => run_alpha_sweep(spec),
        CommandKind::Train => run_train(spec),
        CommandKind::Looptab => run_looptab(spec),
        CommandKind::TheoryTable => run_theory_table(spec),
    }
}
