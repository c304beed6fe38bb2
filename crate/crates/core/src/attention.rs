//! Residual linear attention stacks over prompt tokens.
//!
//! Each layer updates features and labels through the Gram matrix of the
//! current features: `X <- X + a X X^T X` and `y <- y + b X X^T y`, with the
//! query token attending to the demonstrations but masked out of keys and
//! values. The scalar read off the final layer's query label slot is a
//! polynomial in `X^T X` applied to `X^T y`, and [`extract_poly_coeffs`]
//! recovers that polynomial.

use crate::error::{Error, Result};
use crate::estimators::PolyCoeffs;
use crate::gmm::Prompt;
use crate::scalar::Real;
use ndarray::{array, Array1, Array2};
use serde::Serialize;

/// Gains of one layer: `a` scales the feature update, `b` the label update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AttnLayerParams<F> {
    pub a: F,
    pub b: F,
}

/// A stack of residual attention layers with a scalar prediction head.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttnStack<F> {
    layers: Vec<AttnLayerParams<F>>,
    head_scale: F,
    looped: bool,
}

impl<F: Real> AttnStack<F> {
    /// A stack with per-layer parameters.
    pub fn new(layers: Vec<AttnLayerParams<F>>, head_scale: F) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::param("layers", "need at least one layer"));
        }
        if !head_scale.is_finite() || layers.iter().any(|l| !l.a.is_finite() || !l.b.is_finite()) {
            return Err(Error::param("layers", "parameters must be finite"));
        }
        Ok(Self {
            layers,
            head_scale,
            looped: false,
        })
    }

    /// One layer's parameters reused for `depth` passes.
    pub fn looped(params: AttnLayerParams<F>, depth: usize, head_scale: F) -> Result<Self> {
        if depth == 0 {
            return Err(Error::param("depth", "need at least one pass"));
        }
        let mut stack = Self::new(vec![params; depth], head_scale)?;
        stack.looped = true;
        Ok(stack)
    }

    pub fn layers(&self) -> &[AttnLayerParams<F>] {
        &self.layers
    }

    pub fn head_scale(&self) -> F {
        self.head_scale
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn is_looped(&self) -> bool {
        self.looped
    }
}

/// Token state between layers: demonstration features and labels plus the
/// query feature and its label slot.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState<F> {
    pub x: Array2<F>,
    pub y: Array1<F>,
    pub query_x: Array1<F>,
    pub query_y: F,
}

impl<F: Real> LayerState<F> {
    /// Initial state of a prompt; the query label slot starts at zero.
    pub fn from_prompt(prompt: &Prompt<F>) -> Self {
        Self {
            x: prompt.features().to_owned(),
            y: prompt.labels().to_owned(),
            query_x: prompt.query_x().clone(),
            query_y: F::zero(),
        }
    }
}

/// One residual attention layer.
///
/// The demonstrations update as `X + a X X^T X` and `y + b X X^T y`; the query
/// slots update as `x + a X^T X x` and `yq + b x^T X^T y`. The query is
/// excluded from keys and values, so it influences nothing but itself.
pub fn attn_layer_forward<F: Real>(
    state: &LayerState<F>,
    params: &AttnLayerParams<F>,
) -> LayerState<F> {
    let gram = state.x.t().dot(&state.x);
    let xty = state.x.t().dot(&state.y);

    let mut x = state.x.clone();
    x.scaled_add(params.a, &state.x.dot(&gram));
    let mut y = state.y.clone();
    y.scaled_add(params.b, &state.x.dot(&xty));
    let mut query_x = state.query_x.clone();
    query_x.scaled_add(params.a, &gram.dot(&state.query_x));
    let query_y = state.query_y + params.b * state.query_x.dot(&xty);

    LayerState {
        x,
        y,
        query_x,
        query_y,
    }
}

/// Runs the stack on a prompt.
///
/// The first `L - 1` layers update the state residually; the returned scalar
/// is the head scale times the final layer's attention output at the query
/// label slot, `c * b_L * x_L^T X_L^T y_L`. The predicted class is its sign.
pub fn stack_forward<F: Real>(prompt: &Prompt<F>, stack: &AttnStack<F>) -> F {
    let mut state = LayerState::from_prompt(prompt);
    let layers = stack.layers();
    for params in &layers[..layers.len() - 1] {
        state = attn_layer_forward(&state, params);
    }
    let last = layers[layers.len() - 1];
    let xty = state.x.t().dot(&state.y);
    stack.head_scale() * last.b * state.query_x.dot(&xty)
}

/// Sufficient statistics of a demonstration set for stack evaluation: the Gram
/// matrix `X^T X` and the label-weighted feature sum `X^T y`.
#[derive(Debug, Clone)]
pub struct ContextStats<F> {
    pub gram: Array2<F>,
    pub xty: Array1<F>,
}

impl<F: Real> ContextStats<F> {
    pub fn new(x: &Array2<F>, y: &Array1<F>) -> Self {
        Self {
            gram: x.t().dot(x),
            xty: x.t().dot(y),
        }
    }

    pub fn from_prompt(prompt: &Prompt<F>) -> Self {
        let x = prompt.features();
        Self {
            gram: x.t().dot(&x),
            xty: x.t().dot(&prompt.labels()),
        }
    }
}

/// Same value as [`stack_forward`], computed from sufficient statistics.
///
/// Per layer this costs `O(d^3)` instead of `O(n d^2)`, which is what makes
/// training and large-n evaluation affordable: with `B = I + a G`,
/// `G <- B G B`, `X^T y <- B (I + b G) X^T y`, and `x <- B x`.
pub fn stack_forward_stats<F: Real>(
    ctx: &ContextStats<F>,
    query_x: &Array1<F>,
    stack: &AttnStack<F>,
) -> F {
    let layers = stack.layers();
    let mut gram = ctx.gram.clone();
    let mut xty = ctx.xty.clone();
    let mut q = query_x.clone();
    for params in &layers[..layers.len() - 1] {
        let (a, b) = (params.a, params.b);
        let mut v = xty.clone();
        v.scaled_add(b, &gram.dot(&xty));
        let mut v2 = v.clone();
        v2.scaled_add(a, &gram.dot(&v));
        xty = v2;

        let mut q2 = q.clone();
        q2.scaled_add(a, &gram.dot(&q));
        q = q2;

        // G' = (I + a G) G (I + a G), expanded with the old G throughout.
        let mut r = gram.clone();
        r.scaled_add(a, &gram.dot(&gram));
        let mut g2 = r.clone();
        g2.scaled_add(a, &gram.dot(&r));
        gram = g2;
    }
    let last = layers[layers.len() - 1];
    stack.head_scale() * last.b * q.dot(&xty)
}

const MAX_EXTRACT_LAYERS: usize = 6;

/// Highest covariance power an `layers`-deep stack can produce.
pub fn max_degree(layers: usize) -> usize {
    assert!((1..=20).contains(&layers), "unsupported depth {layers}");
    (3usize.pow(layers as u32) - 3) / 2
}

/// Recovers the polynomial the stack applies to the covariance.
///
/// On the one-dimensional single-sample instance (`X = sqrt(t)`, `y = 1`,
/// `x = 1`) the stack output is `sqrt(t) * q(t)` for the polynomial `q` being
/// recovered. The statistics recursion computes the quotient `q(t)` directly
/// when fed `gram = t`, `X^T y = 1`, `x = 1`, and that form extends to
/// negative `t`, so `q` is interpolated at Chebyshev-spaced points of the
/// symmetric interval [-2, 2], where monomial-coefficient recovery stays
/// well-conditioned. Newton divided differences do the interpolation. Depths
/// above 6 are rejected: the monomial conversion is too ill-conditioned there
/// to report coefficients honestly.
pub fn extract_poly_coeffs<F: Real>(stack: &AttnStack<F>) -> Result<PolyCoeffs<F>> {
    let layers = stack.depth();
    if layers > MAX_EXTRACT_LAYERS {
        return Err(Error::IllConditionedExtraction {
            layers,
            max: MAX_EXTRACT_LAYERS,
        });
    }
    extract_poly_coeffs_with_degree(stack, max_degree(layers))
}

/// Extraction with an explicit interpolation degree.
///
/// `degree` must be at least the stack's true degree; surplus coefficients
/// come out at roundoff level, which is how absent powers are verified.
pub fn extract_poly_coeffs_with_degree<F: Real>(
    stack: &AttnStack<F>,
    degree: usize,
) -> Result<PolyCoeffs<F>> {
    let k = degree;
    let points: Vec<F> = (0..=k)
        .map(|j| {
            let theta = std::f64::consts::PI * (2 * j + 1) as f64 / (2 * (k + 1)) as f64;
            F::cast(2.0 * theta.cos())
        })
        .collect();

    // With unit label and query statistics the readout is q(t) itself.
    let mut dd: Vec<F> = points
        .iter()
        .map(|&t| {
            let ctx = ContextStats {
                gram: array![[t]],
                xty: array![F::one()],
            };
            stack_forward_stats(&ctx, &array![F::one()], stack)
        })
        .collect();

    // Newton divided differences in place.
    for j in 1..=k {
        for i in (j..=k).rev() {
            dd[i] = (dd[i] - dd[i - 1]) / (points[i] - points[i - j]);
        }
    }

    // Expand the Newton form to monomial coefficients by Horner synthesis.
    let mut coeffs = vec![F::zero(); k + 1];
    coeffs[0] = dd[k];
    for i in (0..k).rev() {
        for j in (1..=k).rev() {
            coeffs[j] = coeffs[j - 1] - points[i] * coeffs[j];
        }
        coeffs[0] = dd[i] - points[i] * coeffs[0];
    }
    PolyCoeffs::new(coeffs)
}
