//! Monte-Carlo accuracy harness, mixing-weight search, and low-dimensional
//! training of attention stacks.
//!
//! Every entry point is deterministic in its seed: trials, restarts, and
//! minibatches each own a ChaCha substream and reductions happen in a fixed
//! order, so outputs do not depend on the rayon thread count.

use crate::attention::{stack_forward_stats, AttnLayerParams, AttnStack, ContextStats};
use crate::error::{Error, Result};
use crate::estimators::{
    poly_predict, spi, sspi_inf, sspi_k, PolyCoeffs, POWER_MAX_ITER, POWER_TOL,
};
use crate::gmm::{generate_dataset, sample_example, sample_task};
use crate::optim::{fd_gradient, golden_section, Adam, FD_REL_STEP};
use crate::rng::{substream, Stream};
use crate::scalar::Real;
use ndarray::Array1;
use rand::{Rng, RngCore};
use rayon::prelude::*;
use serde::Serialize;

/// Minibatch size used by [`train_stack`].
pub const TRAIN_BATCH: usize = 512;
/// Held-out prompts scored to pick the best restart.
pub const TRAIN_HOLDOUT: usize = 8192;
/// Adam learning rate used by [`train_stack`].
pub const TRAIN_LEARNING_RATE: f64 = 1e-2;
/// Default task count for [`optimize_alpha`].
pub const DEFAULT_ALPHA_TRIALS: usize = 200;

// Substream layout inside a train_stack call. Holdout prompts use ids below
// 2^40; per-restart init and per-step minibatches get disjoint ranges above.
const STREAM_INIT_BASE: u64 = 1 << 40;
const STREAM_BATCH_BASE: u64 = 1 << 41;
const STREAM_BATCH_PER_RESTART: u64 = 1 << 24;

/// Order of the covariance term in the semi-supervised estimator family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SspiOrder {
    Power(usize),
    Infinity,
}

/// The classifier evaluated by the Monte-Carlo harness. Prediction is the
/// sign of the predictor's score, with sign(0) = +1.
#[derive(Debug, Clone, Serialize)]
pub enum Predictor<F> {
    Spi,
    SspiK { k: usize, alpha: F },
    SspiInf { alpha: F },
    Attn(AttnStack<F>),
    Poly(PolyCoeffs<F>),
}

/// One Monte-Carlo accuracy run.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig<F> {
    pub d: usize,
    pub sigma: F,
    pub n: usize,
    pub p: F,
    pub trials: usize,
    pub seed: u64,
    pub predictor: Predictor<F>,
}

/// A measured point on an accuracy curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint<F> {
    pub x_value: F,
    pub accuracy: F,
    pub std_err: F,
}

/// Empirical accuracy of the configured predictor over independent
/// (task, dataset, query) draws, conditioned on a nonempty labeled set.
///
/// `x_value` is the expected labeled count `n * p`; `std_err` is the binomial
/// standard error of the accuracy.
pub fn mc_accuracy<F: Real>(config: &ExperimentConfig<F>) -> Result<CurvePoint<F>> {
    if config.trials == 0 {
        return Err(Error::param("trials", "need at least one trial"));
    }
    if config.d == 0 {
        return Err(Error::InvalidDimension);
    }
    if config.p == F::zero() {
        return Err(Error::NoLabeledData);
    }
    let correct = (0..config.trials)
        .into_par_iter()
        .map(|trial| {
            let mut rng = substream(config.seed, trial as u64);
            trial_is_correct(config, &mut rng).map(usize::from)
        })
        .sum::<Result<usize>>()?;
    let trials = F::cast_usize(config.trials);
    let accuracy = F::cast_usize(correct) / trials;
    let std_err = (accuracy * (F::one() - accuracy) / trials).sqrt();
    Ok(CurvePoint {
        x_value: F::cast_usize(config.n) * config.p,
        accuracy,
        std_err,
    })
}

fn trial_is_correct<F: Real>(config: &ExperimentConfig<F>, rng: &mut Stream) -> Result<bool> {
    let task = sample_task(config.d, config.sigma, rng)?;
    let data = generate_dataset(&task, config.n, config.p, rng, true)?;
    let (query_x, query_y) = sample_example(&task, rng);
    let score = match &config.predictor {
        Predictor::Spi => query_x.dot(&spi(&data)?),
        Predictor::SspiK { k, alpha } => query_x.dot(&sspi_k(&data, config.sigma, *k, *alpha)?),
        Predictor::SspiInf { alpha } => {
            let out = sspi_inf(
                &data,
                config.sigma,
                *alpha,
                F::cast(POWER_TOL),
                POWER_MAX_ITER,
            )?;
            query_x.dot(&out.estimate)
        }
        Predictor::Attn(stack) => {
            let ctx = ContextStats::new(data.x(), data.y_obs());
            stack_forward_stats(&ctx, &query_x, stack)
        }
        Predictor::Poly(coeffs) => poly_predict(&query_x, &data, coeffs),
    };
    let predicted_positive = score >= F::zero();
    Ok(predicted_positive == (query_y > F::zero()))
}

/// Minimizes `1 - E[cos(alpha mu_s + (1 - alpha) semi, mu)]` over the mixing
/// weight by golden-section search after a coarse bracketing scan.
///
/// One batch of tasks is generated up front and shared across every alpha
/// evaluation (common random numbers), which makes the empirical objective a
/// deterministic function of alpha. Order zero is independent of alpha; the
/// tie breaks toward the fully supervised weight 1.
pub fn optimize_alpha<F: Real>(
    d: usize,
    sigma: F,
    n: usize,
    p: F,
    order: SspiOrder,
    trials: usize,
    rng: &mut Stream,
) -> Result<F> {
    if let SspiOrder::Power(0) = order {
        return Ok(F::one());
    }
    if trials == 0 {
        return Err(Error::param("trials", "need at least one trial"));
    }
    let base = rng.next_u64();

    struct AlphaContext<F> {
        mu: Array1<F>,
        mu_hat: Array1<F>,
        semi: Array1<F>,
    }
    let contexts: Vec<AlphaContext<F>> = (0..trials)
        .into_par_iter()
        .map(|trial| -> Result<AlphaContext<F>> {
            let mut rng = substream(base, trial as u64);
            let task = sample_task(d, sigma, &mut rng)?;
            let data = generate_dataset(&task, n, p, &mut rng, true)?;
            let mu_hat = spi(&data)?;
            let semi = match order {
                SspiOrder::Power(k) => sspi_k(&data, sigma, k, F::zero())?,
                SspiOrder::Infinity => {
                    sspi_inf(&data, sigma, F::zero(), F::cast(POWER_TOL), POWER_MAX_ITER)?.estimate
                }
            };
            Ok(AlphaContext {
                mu: task.mu().clone(),
                mu_hat,
                semi,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let objective = |alpha: F| -> F {
        let mut acc = F::zero();
        for ctx in &contexts {
            let blended = &ctx.mu_hat * alpha + &(&ctx.semi * (F::one() - alpha));
            let norm = blended.dot(&blended).sqrt();
            let cos = if norm > F::zero() {
                blended.dot(&ctx.mu) / norm
            } else {
                F::zero()
            };
            acc += cos;
        }
        F::one() - acc / F::cast_usize(contexts.len())
    };

    // Coarse scan to bracket the global minimum, then golden-section refine.
    let grid = 32usize;
    let mut best = 0usize;
    let mut best_val = F::infinity();
    for i in 0..=grid {
        let alpha = F::cast_usize(i) / F::cast_usize(grid);
        let val = objective(alpha);
        if val < best_val {
            best_val = val;
            best = i;
        }
    }
    let lo = F::cast_usize(best.saturating_sub(1)) / F::cast_usize(grid);
    let hi = F::cast_usize((best + 1).min(grid)) / F::cast_usize(grid);
    Ok(golden_section(objective, lo, hi, 60))
}

/// Diagnostics for one training restart.
#[derive(Debug, Clone, Serialize)]
pub struct RestartReport<F> {
    pub holdout_accuracy: Option<F>,
    pub final_loss: Option<F>,
    pub diverged: bool,
}

/// A trained stack plus per-restart statistics.
#[derive(Debug, Clone, Serialize)]
pub struct TrainOutcome<F> {
    pub stack: AttnStack<F>,
    pub best_restart: usize,
    pub restarts: Vec<RestartReport<F>>,
}

impl<F: Real> TrainOutcome<F> {
    /// Best and mean held-out accuracy over the non-diverged restarts.
    pub fn holdout_summary(&self) -> (F, F) {
        let accs: Vec<F> = self
            .restarts
            .iter()
            .filter_map(|r| r.holdout_accuracy)
            .collect();
        let best = accs.iter().cloned().fold(F::neg_infinity(), F::max);
        let mean = accs.iter().cloned().sum::<F>() / F::cast_usize(accs.len().max(1));
        (best, mean)
    }
}

struct TrainPrompt<F> {
    ctx: ContextStats<F>,
    query_x: Array1<F>,
    query_y: F,
}

fn sample_train_prompt<F: Real>(
    d: usize,
    sigma: F,
    n: usize,
    p: F,
    rng: &mut Stream,
) -> Result<TrainPrompt<F>> {
    let task = sample_task(d, sigma, rng)?;
    let data = generate_dataset(&task, n, p, rng, true)?;
    let (query_x, query_y) = sample_example(&task, rng);
    Ok(TrainPrompt {
        ctx: ContextStats::new(data.x(), data.y_obs()),
        query_x,
        query_y,
    })
}

/// Numerically stable `ln(1 + e^(-margin))`.
fn logistic_loss<F: Real>(margin: F) -> F {
    let neg = -margin;
    neg.max(F::zero()) + (-neg.abs()).exp().ln_1p()
}

/// Maps optimizer coordinates to stack parameters. The layer gains are
/// trained in units of the expected top Gram eigenvalue `n (1 + sigma^2)`,
/// which keeps each layer's map O(1) at initialization; the head scale is
/// taken as is.
fn params_to_stack<F: Real>(
    theta: &[F],
    layers: usize,
    looped: bool,
    gram_scale: F,
) -> AttnStack<F> {
    if looped {
        AttnStack::looped(
            AttnLayerParams {
                a: theta[0] / gram_scale,
                b: theta[1] / gram_scale,
            },
            layers,
            theta[2],
        )
        .expect("finite looped parameters")
    } else {
        let per_layer: Vec<AttnLayerParams<F>> = (0..layers)
            .map(|l| AttnLayerParams {
                a: theta[l] / gram_scale,
                b: theta[layers + l] / gram_scale,
            })
            .collect();
        AttnStack::new(per_layer, theta[2 * layers]).expect("finite parameters")
    }
}

fn batch_loss<F: Real>(
    theta: &[F],
    layers: usize,
    looped: bool,
    gram_scale: F,
    batch: &[TrainPrompt<F>],
) -> F {
    let stack = params_to_stack(theta, layers, looped, gram_scale);
    let mut acc = F::zero();
    for prompt in batch {
        let f = stack_forward_stats(&prompt.ctx, &prompt.query_x, &stack);
        acc += logistic_loss(prompt.query_y * f);
    }
    acc / F::cast_usize(batch.len())
}

/// Trains the stack parameters (`a_l`, `b_l` per layer plus the head scale,
/// or just three values when looped) on the logistic loss over fresh
/// minibatches, using central-difference gradients fed to Adam.
///
/// Runs `restarts` independent initializations and returns the one with the
/// best accuracy on a shared held-out prompt set. Restarts whose loss turns
/// non-finite are discarded; if every restart diverges the call fails.
/// `steps = 0` skips the updates and returns the best raw initialization.
#[allow(clippy::too_many_arguments)]
pub fn train_stack<F: Real>(
    layers: usize,
    looped: bool,
    d: usize,
    sigma: F,
    n: usize,
    p: F,
    restarts: usize,
    steps: usize,
    rng: &mut Stream,
) -> Result<TrainOutcome<F>> {
    if layers == 0 {
        return Err(Error::param("layers", "need at least one layer"));
    }
    if restarts == 0 {
        return Err(Error::param("restarts", "need at least one restart"));
    }
    let base = rng.next_u64();
    let gram_scale = F::cast_usize(n) * (F::one() + sigma * sigma);

    let holdout: Vec<TrainPrompt<F>> = (0..TRAIN_HOLDOUT)
        .into_par_iter()
        .map(|i| sample_train_prompt(d, sigma, n, p, &mut substream(base, i as u64)))
        .collect::<Result<Vec<_>>>()?;

    let param_count = if looped { 3 } else { 2 * layers + 1 };
    let outcomes: Vec<(Vec<F>, RestartReport<F>)> = (0..restarts)
        .into_par_iter()
        .map(|restart| -> Result<(Vec<F>, RestartReport<F>)> {
            let mut init_rng = substream(base, STREAM_INIT_BASE + restart as u64);
            let mut theta: Vec<F> = (0..param_count)
                .map(|_| F::cast(init_rng.gen_range(-0.5..0.5)))
                .collect();

            let mut adam = Adam::new(F::cast(TRAIN_LEARNING_RATE), param_count);
            let mut diverged = false;
            let mut last_loss = None;
            for step in 0..steps {
                let stream_id =
                    STREAM_BATCH_BASE + restart as u64 * STREAM_BATCH_PER_RESTART + step as u64;
                let mut batch_rng = substream(base, stream_id);
                let batch: Vec<TrainPrompt<F>> = (0..TRAIN_BATCH)
                    .map(|_| sample_train_prompt(d, sigma, n, p, &mut batch_rng))
                    .collect::<Result<Vec<_>>>()?;
                let loss_fn = |t: &[F]| batch_loss(t, layers, looped, gram_scale, &batch);
                let loss = loss_fn(&theta);
                if !loss.is_finite() {
                    diverged = true;
                    break;
                }
                last_loss = Some(loss);
                let grad = fd_gradient(loss_fn, &theta, F::cast(FD_REL_STEP));
                adam.step(&mut theta, &grad);
            }
            if theta.iter().any(|t| !t.is_finite()) {
                diverged = true;
            }

            let report = if diverged {
                RestartReport {
                    holdout_accuracy: None,
                    final_loss: None,
                    diverged: true,
                }
            } else {
                let stack = params_to_stack(&theta, layers, looped, gram_scale);
                let correct = holdout
                    .iter()
                    .filter(|pr| {
                        let f = stack_forward_stats(&pr.ctx, &pr.query_x, &stack);
                        (f >= F::zero()) == (pr.query_y > F::zero())
                    })
                    .count();
                RestartReport {
                    holdout_accuracy: Some(F::cast_usize(correct) / F::cast_usize(holdout.len())),
                    final_loss: last_loss,
                    diverged: false,
                }
            };
            Ok((theta, report))
        })
        .collect::<Result<Vec<_>>>()?;

    let best_restart = outcomes
        .iter()
        .enumerate()
        .filter_map(|(i, (_, r))| r.holdout_accuracy.map(|a| (i, a)))
        .max_by(|(ia, a), (ib, b)| {
            a.partial_cmp(b).unwrap().then_with(|| ib.cmp(ia)) // stable: prefer the lower index on ties
        })
        .map(|(i, _)| i)
        .ok_or(Error::TrainingFailed { restarts })?;

    let stack = params_to_stack(&outcomes[best_restart].0, layers, looped, gram_scale);
    Ok(TrainOutcome {
        stack,
        best_restart,
        restarts: outcomes.into_iter().map(|(_, r)| r).collect(),
    })
}
