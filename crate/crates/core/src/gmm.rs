//! Binary Gaussian mixture tasks, semi-supervised datasets, and in-context
//! prompts.
//!
//! A task is a unit-norm mean direction together with an isotropic noise
//! level. Samples are `x = y * mu + noise` with `y` uniform on {-1, +1}, and
//! each label is revealed independently with probability `p`; hidden labels
//! are stored as 0. All types are immutable after construction and all
//! operations are pure given the random stream, so they can be used from many
//! threads with independent streams.

use crate::error::{Error, Result};
use crate::scalar::Real;
use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;

/// A sampled classification task: unit-norm mean `mu` and noise level `sigma`.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec<F> {
    mu: Array1<F>,
    sigma: F,
}

impl<F: Real> TaskSpec<F> {
    /// Builds a task, checking that `mu` has unit norm and `sigma >= 0`.
    ///
    /// The norm tolerance is 1e-12, widened to a few epsilons for scalar
    /// types that cannot represent that.
    pub fn new(mu: Array1<F>, sigma: F) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidDimension);
        }
        if sigma < F::zero() || sigma.is_nan() {
            return Err(Error::param("sigma", "noise level must be nonnegative"));
        }
        let norm = mu.dot(&mu).sqrt();
        let tol = F::cast(1e-12).max(F::epsilon() * F::cast(32.0));
        if (norm - F::one()).abs() > tol {
            return Err(Error::param(
                "mu",
                format!("mean must have unit norm, got {norm}"),
            ));
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> &Array1<F> {
        &self.mu
    }

    pub fn sigma(&self) -> F {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Features, true labels, observed labels, and the labeled index set.
///
/// `y_obs[i]` equals `y_true[i]` for labeled rows and 0 elsewhere;
/// `labeled_idx` lists exactly the nonzero rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SemiDataset<F> {
    x: Array2<F>,
    y_true: Array1<F>,
    y_obs: Array1<F>,
    labeled_idx: Vec<usize>,
    p: F,
}

impl<F: Real> SemiDataset<F> {
    /// Assembles a dataset from raw parts, validating the labeling invariants.
    pub fn from_parts(x: Array2<F>, y_true: Array1<F>, y_obs: Array1<F>, p: F) -> Result<Self> {
        let n = x.nrows();
        if n == 0 || x.ncols() == 0 {
            return Err(Error::InvalidDimension);
        }
        if y_true.len() != n || y_obs.len() != n {
            return Err(Error::param(
                "labels",
                "label vectors must match the number of rows",
            ));
        }
        if !(p >= F::zero() && p <= F::one()) {
            return Err(Error::param("p", "reveal probability must lie in [0, 1]"));
        }
        let mut labeled_idx = Vec::new();
        for i in 0..n {
            let yt = y_true[i];
            if yt != F::one() && yt != -F::one() {
                return Err(Error::param(
                    "y_true",
                    format!("row {i}: label must be +1 or -1"),
                ));
            }
            let yo = y_obs[i];
            if yo != F::zero() {
                if yo != yt {
                    return Err(Error::param(
                        "y_obs",
                        format!("row {i}: observed label disagrees with the true label"),
                    ));
                }
                labeled_idx.push(i);
            }
        }
        Ok(Self {
            x,
            y_true,
            y_obs,
            labeled_idx,
            p,
        })
    }

    pub fn x(&self) -> &Array2<F> {
        &self.x
    }

    pub fn y_true(&self) -> &Array1<F> {
        &self.y_true
    }

    pub fn y_obs(&self) -> &Array1<F> {
        &self.y_obs
    }

    pub fn labeled_idx(&self) -> &[usize] {
        &self.labeled_idx
    }

    pub fn labeled_count(&self) -> usize {
        self.labeled_idx.len()
    }

    pub fn p(&self) -> F {
        self.p
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn dim(&self) -> usize {
        self.x.ncols()
    }
}

/// The (n+1) x (d+1) token matrix: demonstration rows `[x_i, y_i]` followed by
/// the query row `[x, 0]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Prompt<F> {
    z: Array2<F>,
    query_x: Array1<F>,
    query_y_true: F,
}

impl<F: Real> Prompt<F> {
    pub fn z(&self) -> &Array2<F> {
        &self.z
    }

    pub fn query_x(&self) -> &Array1<F> {
        &self.query_x
    }

    /// The query's true class, kept outside the token matrix for scoring.
    pub fn query_y_true(&self) -> F {
        self.query_y_true
    }

    /// Number of demonstrations.
    pub fn n(&self) -> usize {
        self.z.nrows() - 1
    }

    /// Feature dimension.
    pub fn dim(&self) -> usize {
        self.z.ncols() - 1
    }

    /// Demonstration features: the first n rows and d columns of the tokens.
    pub fn features(&self) -> ArrayView2<'_, F> {
        self.z.slice(s![..self.n(), ..self.dim()])
    }

    /// Observed demonstration labels: the last column, first n rows.
    pub fn labels(&self) -> ArrayView1<'_, F> {
        self.z.slice(s![..self.n(), self.dim()])
    }
}

/// Draws a task mean uniformly from the unit sphere (normalized Gaussian).
pub fn sample_task<F: Real, R: Rng + ?Sized>(
    d: usize,
    sigma: F,
    rng: &mut R,
) -> Result<TaskSpec<F>> {
    if d == 0 {
        return Err(Error::InvalidDimension);
    }
    if sigma < F::zero() || sigma.is_nan() {
        return Err(Error::param("sigma", "noise level must be nonnegative"));
    }
    loop {
        let g = Array1::from_iter((0..d).map(|_| F::standard_normal(rng)));
        let norm = g.dot(&g).sqrt();
        if norm > F::zero() {
            return Ok(TaskSpec {
                mu: g / norm,
                sigma,
            });
        }
    }
}

/// One (feature, true label) pair from the task. The label is drawn first,
/// then the `d` noise coordinates.
pub fn sample_example<F: Real, R: Rng + ?Sized>(task: &TaskSpec<F>, rng: &mut R) -> (Array1<F>, F) {
    let y = if rng.gen::<bool>() {
        F::one()
    } else {
        -F::one()
    };
    let mut x = Array1::from_iter((0..task.dim()).map(|_| F::standard_normal(rng) * task.sigma()));
    x.scaled_add(y, &task.mu);
    (x, y)
}

/// Samples `n` examples and reveals each label independently with probability
/// `p`.
///
/// With `require_labeled` set, the reveal mask (and only the mask) is redrawn
/// until at least one label is visible, which conditions on a nonempty labeled
/// set without touching the feature distribution. That conditioning is
/// impossible at `p = 0`, which is reported as [`Error::NoLabeledData`].
pub fn generate_dataset<F: Real, R: Rng + ?Sized>(
    task: &TaskSpec<F>,
    n: usize,
    p: F,
    rng: &mut R,
    require_labeled: bool,
) -> Result<SemiDataset<F>> {
    if n == 0 {
        return Err(Error::param("n", "need at least one sample"));
    }
    if !(p >= F::zero() && p <= F::one()) {
        return Err(Error::param("p", "reveal probability must lie in [0, 1]"));
    }
    if require_labeled && p == F::zero() {
        return Err(Error::NoLabeledData);
    }
    let d = task.dim();
    let mut x = Array2::zeros((n, d));
    let mut y_true = Array1::zeros(n);
    for i in 0..n {
        let (xi, yi) = sample_example(task, rng);
        x.row_mut(i).assign(&xi);
        y_true[i] = yi;
    }

    let p_f64 = p.to_f64_lossy();
    let mut labeled_idx;
    let mut y_obs;
    loop {
        labeled_idx = Vec::new();
        y_obs = Array1::zeros(n);
        for i in 0..n {
            if rng.gen_bool(p_f64) {
                y_obs[i] = y_true[i];
                labeled_idx.push(i);
            }
        }
        if !require_labeled || !labeled_idx.is_empty() {
            break;
        }
    }

    Ok(SemiDataset {
        x,
        y_true,
        y_obs,
        labeled_idx,
        p,
    })
}

/// Assembles a prompt from a dataset plus one fresh query drawn from the same
/// task. The query's label slot is zero.
pub fn build_prompt<F: Real, R: Rng + ?Sized>(
    data: &SemiDataset<F>,
    task: &TaskSpec<F>,
    rng: &mut R,
) -> Result<Prompt<F>> {
    if data.dim() != task.dim() {
        return Err(Error::param(
            "task",
            "task dimension must match the dataset",
        ));
    }
    let (query_x, query_y_true) = sample_example(task, rng);
    let n = data.n();
    let d = data.dim();
    let mut z = Array2::zeros((n + 1, d + 1));
    z.slice_mut(s![..n, ..d]).assign(data.x());
    z.slice_mut(s![..n, d]).assign(data.y_obs());
    z.slice_mut(s![n, ..d]).assign(&query_x);
    // z[[n, d]] stays 0: the query label is withheld.
    Ok(Prompt {
        z,
        query_x,
        query_y_true,
    })
}
