//! Analytic error expressions for the plug-in classifiers and their
//! Monte-Carlo evaluation.

use crate::error::{Error, Result};
use crate::rng::{substream, Stream};
use crate::scalar::Real;
use ndarray::Array2;
use rand::RngCore;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

/// Default trial count for Monte-Carlo error evaluations.
pub const DEFAULT_ERROR_TRIALS: usize = 1_000_000;

/// Fixed shard layout for parallel Monte-Carlo loops. Each shard owns a
/// substream and partial sums are reduced in shard order, so results are
/// bit-identical for any thread count.
const MC_SHARDS: usize = 256;

/// How an [`ErrorEstimate`] was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorMethod {
    Analytic,
    Quadrature,
    MonteCarlo,
}

/// A classification error in [0, 1] with its sampling uncertainty.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ErrorEstimate<F> {
    pub value: F,
    pub std_err: F,
    pub method: ErrorMethod,
}

/// Right tail of the standard normal distribution, `P(N(0,1) > x)`.
pub fn q_function<F: Real>(x: F) -> F {
    F::cast(0.5) * (x / F::cast(std::f64::consts::SQRT_2)).erfc()
}

/// Mean and second moment of a Binomial(n, p) labeled count.
fn binomial_moments<F: Real>(n: usize, p: F) -> (F, F) {
    let np = F::cast_usize(n) * p;
    (np, np * (F::one() - p) + np * np)
}

/// Monte-Carlo evaluation of the supervised plug-in classifier's error.
///
/// Each trial draws the labeled count `m` from Binomial(n, p) conditioned on
/// `m >= 1` (matching datasets generated with a guaranteed nonempty labeled
/// set), then draws `g ~ N(0,1)`, `h ~ chi^2(d-1)` and scores the Gaussian
/// tail expression with `eps = sigma / sqrt(m)`:
///
/// `Q((1 + eps g) / (sigma sqrt((1 + eps g)^2 + eps^2 h)))`
pub fn spi_error<F: Real>(
    n: usize,
    p: F,
    sigma: F,
    d: usize,
    trials: usize,
    rng: &mut Stream,
) -> Result<ErrorEstimate<F>> {
    if d == 0 {
        return Err(Error::InvalidDimension);
    }
    if !(p >= F::zero() && p <= F::one()) {
        return Err(Error::param("p", "reveal probability must lie in [0, 1]"));
    }
    if sigma < F::zero() || sigma.is_nan() {
        return Err(Error::param("sigma", "noise level must be nonnegative"));
    }
    if trials == 0 {
        return Err(Error::param("trials", "need at least one trial"));
    }
    if n == 0 || p == F::zero() {
        return Err(Error::UndefinedEstimator);
    }

    let base = rng.next_u64();
    let p_f64 = p.to_f64_lossy();
    let partials: Vec<(F, F)> = (0..MC_SHARDS)
        .into_par_iter()
        .map(|shard| {
            let mut rng = substream(base, shard as u64);
            let count = shard_len(trials, shard);
            let binom = Binomial::new(n as u64, p_f64).expect("validated probability");
            let mut sum = F::zero();
            let mut sum_sq = F::zero();
            for _ in 0..count {
                let m = loop {
                    let m = binom.sample(&mut rng);
                    if m > 0 {
                        break m;
                    }
                };
                let eps = sigma / F::cast_usize(m as usize).sqrt();
                let g = F::standard_normal(&mut rng);
                let h = F::chi_squared(&mut rng, d - 1);
                let num = F::one() + eps * g;
                let den = sigma * (num * num + eps * eps * h).sqrt();
                let q = q_function(num / den);
                sum += q;
                sum_sq += q * q;
            }
            (sum, sum_sq)
        })
        .collect();

    let (sum, sum_sq) = partials
        .iter()
        .fold((F::zero(), F::zero()), |(s, s2), &(a, b)| (s + a, s2 + b));
    let t = F::cast_usize(trials);
    let mean = sum / t;
    let var = ((sum_sq - t * mean * mean) / (t - F::one()).max(F::one())).max(F::zero());
    Ok(ErrorEstimate {
        value: mean,
        std_err: (var / t).sqrt(),
        method: ErrorMethod::MonteCarlo,
    })
}

fn shard_len(trials: usize, shard: usize) -> usize {
    let base = trials / MC_SHARDS;
    let extra = trials % MC_SHARDS;
    base + usize::from(shard < extra)
}

/// Closed-form upper bound on the plug-in error, clamped to [0, 1]:
/// `Q((1 - 10 d eps^2) / sigma) + e^(-d) + e^(-1 / (8 eps^2))` with
/// `eps^2 = sigma^2 / (n p)`.
pub fn spi_error_upper<F: Real>(n: usize, p: F, sigma: F, d: usize) -> F {
    let np = F::cast_usize(n) * p;
    let eps_sq = sigma * sigma / np;
    let ten_d = F::cast_usize(10 * d);
    let q = q_function((F::one() - ten_d * eps_sq) / sigma);
    let bound = q + (-F::cast_usize(d)).exp() + (-(F::cast(8.0) * eps_sq).recip()).exp();
    bound.min(F::one()).max(F::zero())
}

/// Exact error of the oracle rank-one predictor:
/// `Q(1/sigma) + Q(sqrt(np)/sigma) - 2 Q(1/sigma) Q(sqrt(np)/sigma)`.
///
/// Depends on the problem only through `np` and `sigma`. At `np = 0` it sits
/// at chance level 1/2 and for `np -> infinity` it falls to the Bayes error
/// `Q(1/sigma)`.
pub fn oracle_error<F: Real>(np: F, sigma: F) -> F {
    if sigma == F::zero() {
        return F::zero();
    }
    let q_bayes = q_function(sigma.recip());
    let q_m = q_function(np.sqrt() / sigma);
    q_bayes + q_m - F::cast(2.0) * q_bayes * q_m
}

/// The scalar `c` such that `c I` minimizes [`reduced_loss`]:
/// `1 / ((1 + sigma^2) E[m^2]/E[m] + sigma^2 + sigma^4 d)` with
/// `m ~ Binomial(n, p)`.
pub fn w_star_scalar<F: Real>(n: usize, p: F, sigma: F, d: usize) -> Result<F> {
    let (em, em2) = binomial_moments(n, p);
    if em <= F::zero() || em.is_nan() {
        return Err(Error::UndefinedEstimator);
    }
    let s2 = sigma * sigma;
    Ok(((F::one() + s2) * em2 / em + s2 + s2 * s2 * F::cast_usize(d)).recip())
}

/// Closed-form population loss of the preconditioned one-layer predictor,
/// as a function of the `d x d` preconditioner `w`:
///
/// ```text
/// E[m^2]/(d(d+2)) (tr(W)^2 + tr(W W^T) + tr(W^2))
///   + E[m + m^2]/d sigma^2 tr(W W^T) + E[m] sigma^4 tr(W W^T)
///   + 1 - 2 E[m]/d tr(W)
/// ```
pub fn reduced_loss<F: Real>(w: &Array2<F>, n: usize, p: F, sigma: F) -> F {
    let d = w.nrows();
    assert_eq!(d, w.ncols(), "preconditioner must be square");
    let (em, em2) = binomial_moments(n, p);
    let d_f = F::cast_usize(d);

    let tr_w = (0..d).map(|i| w[[i, i]]).fold(F::zero(), |a, b| a + b);
    let mut tr_wwt = F::zero();
    let mut tr_ww = F::zero();
    for i in 0..d {
        for j in 0..d {
            tr_wwt += w[[i, j]] * w[[i, j]];
            tr_ww += w[[i, j]] * w[[j, i]];
        }
    }

    let s2 = sigma * sigma;
    em2 / (d_f * (d_f + F::cast(2.0))) * (tr_w * tr_w + tr_wwt + tr_ww)
        + (em + em2) / d_f * s2 * tr_wwt
        + em * s2 * s2 * tr_wwt
        + F::one()
        - F::cast(2.0) * em / d_f * tr_w
}

/// Non-asymptotic error bound shape `Q((1 - C sqrt(d/n)) / sigma) + e^(-d)`
/// for a caller-supplied constant `C > 0`.
pub fn nonasymp_bound<F: Real>(n: usize, d: usize, sigma: F, c: F) -> F {
    assert!(n > 0, "need at least one sample");
    assert!(c > F::zero(), "the constant must be positive");
    let ratio = (F::cast_usize(d) / F::cast_usize(n)).sqrt();
    q_function((F::one() - c * ratio) / sigma) + (-F::cast_usize(d)).exp()
}
