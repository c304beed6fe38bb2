//! Plug-in estimators of the task mean and the label-update iterations they
//! correspond to.
//!
//! The supervised estimate averages `y_i * x_i` over labeled rows. The
//! semi-supervised family sharpens it with powers of the debiased covariance
//! `X^T X / n - sigma^2 I`, up to the rank-one projection onto its top
//! eigenvector in the infinite-power limit.

use crate::error::{Error, Result};
use crate::gmm::SemiDataset;
use crate::scalar::Real;
use ndarray::{Array1, Array2};
use serde::Serialize;

/// Default tolerance on the successive-vector angle in the power iteration.
pub const POWER_TOL: f64 = 1e-10;
/// Default iteration cap for the power iteration.
pub const POWER_MAX_ITER: usize = 10_000;

/// Coefficients `a_0..a_K` of the estimator `sum_i a_i (X^T X)^i X^T y`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolyCoeffs<F> {
    coeffs: Vec<F>,
}

impl<F: Real> PolyCoeffs<F> {
    /// Wraps a nonempty list of finite coefficients.
    pub fn new(coeffs: Vec<F>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::param("coeffs", "need at least one coefficient"));
        }
        if coeffs.iter().any(|c| !c.is_finite()) {
            return Err(Error::param("coeffs", "coefficients must be finite"));
        }
        Ok(Self { coeffs })
    }

    pub fn coeffs(&self) -> &[F] {
        &self.coeffs
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }
}

/// Dominant eigenpair reported by [`top_eigenvector`].
///
/// `converged = false` after the iteration cap usually means the two largest
/// eigenvalues are nearly equal, so the direction should be treated as
/// ill-conditioned.
#[derive(Debug, Clone)]
pub struct EigenEstimate<F> {
    /// Unit-norm direction (within 1e-10 once converged).
    pub vector: Array1<F>,
    /// Rayleigh quotient of `vector` under the unshifted matrix.
    pub eigenvalue: F,
    pub iterations_used: usize,
    pub converged: bool,
}

/// Supervised plug-in estimate: the average of `y_i * x_i` over labeled rows.
pub fn spi<F: Real>(data: &SemiDataset<F>) -> Result<Array1<F>> {
    let idx = data.labeled_idx();
    if idx.is_empty() {
        return Err(Error::NoLabeledData);
    }
    let mut sum = Array1::zeros(data.dim());
    for &i in idx {
        sum.scaled_add(data.y_obs()[i], &data.x().row(i));
    }
    Ok(sum / F::cast_usize(idx.len()))
}

/// Applies `(X^T X / n - sigma^2 I)` to `v` without forming the matrix.
fn apply_debiased_cov<F: Real>(x: &Array2<F>, sigma: F, v: &Array1<F>) -> Array1<F> {
    let n = F::cast_usize(x.nrows());
    let t = x.dot(v);
    let mut out = x.t().dot(&t) / n;
    out.scaled_add(-sigma * sigma, v);
    out
}

/// Order-`k` semi-supervised plug-in estimate:
/// `alpha * mu_s + (1 - alpha) * (X^T X / n - sigma^2 I)^k mu_s`.
///
/// The covariance power is applied as `k` matrix-vector products, so the cost
/// is `O(k n d)` and no matrix power is materialized.
pub fn sspi_k<F: Real>(data: &SemiDataset<F>, sigma: F, k: usize, alpha: F) -> Result<Array1<F>> {
    let mu_s = spi(data)?;
    let mut w = mu_s.clone();
    for _ in 0..k {
        w = apply_debiased_cov(data.x(), sigma, &w);
    }
    Ok(&mu_s * alpha + &(w * (F::one() - alpha)))
}

/// Power iteration for the algebraically largest eigenpair of a symmetric
/// matrix.
///
/// The matrix is shifted by a 1-norm bound on its spectrum so the target
/// eigenvalue is also the largest in magnitude; the reported eigenvalue is for
/// the unshifted matrix. Convergence is measured by the component of each new
/// iterate orthogonal to the previous one, which resolves angles down to a few
/// machine epsilons.
pub fn top_eigenvector<F: Real>(
    m: &Array2<F>,
    start: Option<&Array1<F>>,
    tol: F,
    max_iter: usize,
) -> EigenEstimate<F> {
    let d = m.nrows();
    debug_assert_eq!(d, m.ncols(), "matrix must be square");
    let shift = (0..d)
        .map(|j| m.column(j).iter().fold(F::zero(), |acc, v| acc + v.abs()))
        .fold(F::zero(), F::max);

    let mut v = match start {
        Some(v0) => {
            let norm = v0.dot(v0).sqrt();
            if norm > F::zero() {
                v0 / norm
            } else {
                basis_vector(d)
            }
        }
        None => basis_vector(d),
    };

    let mut iterations = 0;
    let mut converged = false;
    for it in 1..=max_iter {
        let mut w = m.dot(&v);
        w.scaled_add(shift, &v);
        let norm = w.dot(&w).sqrt();
        if norm == F::zero() {
            // Start vector sits in the kernel of the shifted matrix.
            iterations = it;
            break;
        }
        w /= norm;
        let cos = w.dot(&v);
        let mut residual = w.clone();
        residual.scaled_add(-cos, &v);
        let sine = residual.dot(&residual).sqrt();
        v = w;
        iterations = it;
        if sine <= tol {
            converged = true;
            break;
        }
    }

    let eigenvalue = v.dot(&m.dot(&v));
    EigenEstimate {
        vector: v,
        eigenvalue,
        iterations_used: iterations,
        converged,
    }
}

fn basis_vector<F: Real>(d: usize) -> Array1<F> {
    let mut v = Array1::zeros(d);
    v[0] = F::one();
    v
}

/// SSPI estimate in the infinite-power limit plus the eigenpair diagnostics.
#[derive(Debug, Clone)]
pub struct SspiInfEstimate<F> {
    pub estimate: Array1<F>,
    pub eigen: EigenEstimate<F>,
}

/// Infinite-order semi-supervised plug-in estimate:
/// `alpha * mu_s + (1 - alpha) * (u^T mu_s) u` with `u` the top eigenvector of
/// the debiased covariance.
///
/// `u` enters quadratically, so its sign ambiguity cancels; the reported
/// vector is nevertheless aligned with the supervised estimate.
pub fn sspi_inf<F: Real>(
    data: &SemiDataset<F>,
    sigma: F,
    alpha: F,
    tol: F,
    max_iter: usize,
) -> Result<SspiInfEstimate<F>> {
    let mu_s = spi(data)?;
    let d = data.dim();
    let n = F::cast_usize(data.n());
    let mut m = data.x().t().dot(data.x()) / n;
    for i in 0..d {
        m[[i, i]] -= sigma * sigma;
    }
    let mut eigen = top_eigenvector(&m, Some(&mu_s), tol, max_iter);
    if eigen.vector.dot(&mu_s) < F::zero() {
        eigen.vector.mapv_inplace(|v| -v);
    }
    let proj = eigen.vector.dot(&mu_s);
    let estimate = &mu_s * alpha + &(&eigen.vector * (proj * (F::one() - alpha)));
    Ok(SspiInfEstimate { estimate, eigen })
}

/// Evaluates `x^T (sum_i a_i (X^T X)^i) X^T y` by a Horner recursion on
/// matrix-vector products; no matrix power is ever formed.
pub fn poly_predict<F: Real>(
    x_query: &Array1<F>,
    data: &SemiDataset<F>,
    coeffs: &PolyCoeffs<F>,
) -> F {
    debug_assert_eq!(x_query.len(), data.dim(), "query dimension mismatch");
    let v = data.x().t().dot(data.y_obs());
    let a = coeffs.coeffs();
    let mut w = &v * a[a.len() - 1];
    for &ai in a[..a.len() - 1].iter().rev() {
        let t = data.x().dot(&w);
        w = data.x().t().dot(&t);
        w.scaled_add(ai, &v);
    }
    x_query.dot(&w)
}

/// One linear label-update pass: `labels + c * X X^T labels`.
pub fn em_label_step<F: Real>(data: &SemiDataset<F>, labels: &Array1<F>, c: F) -> Array1<F> {
    assert_eq!(labels.len(), data.n(), "label vector length mismatch");
    let t = data.x().t().dot(labels);
    let mut out = labels.clone();
    out.scaled_add(c, &data.x().dot(&t));
    out
}

/// One similarity-weighted label-update pass: `labels + c * S labels` with `S`
/// the row-wise softmax of `X X^T`. Rows subtract their max before
/// exponentiating.
pub fn bp_label_step<F: Real>(data: &SemiDataset<F>, labels: &Array1<F>, c: F) -> Array1<F> {
    assert_eq!(labels.len(), data.n(), "label vector length mismatch");
    let x = data.x();
    let n = data.n();
    let mut out = labels.clone();
    let mut sims = vec![F::zero(); n];
    for i in 0..n {
        let xi = x.row(i);
        let mut mx = F::neg_infinity();
        for (j, sim) in sims.iter_mut().enumerate() {
            *sim = xi.dot(&x.row(j));
            mx = mx.max(*sim);
        }
        let mut total = F::zero();
        let mut acc = F::zero();
        for j in 0..n {
            let w = (sims[j] - mx).exp();
            total += w;
            acc += w * labels[j];
        }
        out[i] += c * acc / total;
    }
    out
}
