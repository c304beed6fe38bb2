//! Small derivative-free optimizers: central finite differences feeding Adam
//! or backtracking gradient descent, plus golden-section line search.

use crate::scalar::Real;

/// Default relative step for central finite differences.
pub const FD_REL_STEP: f64 = 1e-4;

/// Central finite-difference gradient with a per-coordinate relative step.
pub fn fd_gradient<F: Real>(f: impl Fn(&[F]) -> F, x: &[F], rel_step: F) -> Vec<F> {
    let mut work = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for j in 0..x.len() {
        let h = rel_step * F::one().max(x[j].abs());
        work[j] = x[j] + h;
        let fp = f(&work);
        work[j] = x[j] - h;
        let fm = f(&work);
        work[j] = x[j];
        grad.push((fp - fm) / (h + h));
    }
    grad
}

/// Adam with bias correction.
#[derive(Debug, Clone)]
pub struct Adam<F> {
    lr: F,
    beta1: F,
    beta2: F,
    eps: F,
    m: Vec<F>,
    v: Vec<F>,
    t: i32,
}

impl<F: Real> Adam<F> {
    pub fn new(lr: F, dim: usize) -> Self {
        Self {
            lr,
            beta1: F::cast(0.9),
            beta2: F::cast(0.999),
            eps: F::cast(1e-8),
            m: vec![F::zero(); dim],
            v: vec![F::zero(); dim],
            t: 0,
        }
    }

    pub fn step(&mut self, params: &mut [F], grad: &[F]) {
        debug_assert_eq!(params.len(), grad.len());
        self.t += 1;
        let bc1 = F::one() - self.beta1.powi(self.t);
        let bc2 = F::one() - self.beta2.powi(self.t);
        for j in 0..params.len() {
            self.m[j] = self.beta1 * self.m[j] + (F::one() - self.beta1) * grad[j];
            self.v[j] = self.beta2 * self.v[j] + (F::one() - self.beta2) * grad[j] * grad[j];
            let m_hat = self.m[j] / bc1;
            let v_hat = self.v[j] / bc2;
            params[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Outcome of [`minimize_fd`].
#[derive(Debug, Clone)]
pub struct MinimizeResult<F> {
    pub x: Vec<F>,
    pub value: F,
    pub iterations: usize,
    pub converged: bool,
}

/// Gradient descent with Armijo backtracking on a finite-difference gradient.
/// Stops when the gradient infinity norm drops below `grad_tol`.
pub fn minimize_fd<F: Real>(
    f: impl Fn(&[F]) -> F,
    x0: Vec<F>,
    max_iter: usize,
    grad_tol: F,
) -> MinimizeResult<F> {
    let mut x = x0;
    let mut value = f(&x);
    let mut step = F::one();
    let armijo = F::cast(1e-4);
    for it in 0..max_iter {
        let grad = fd_gradient(&f, &x, F::cast(FD_REL_STEP));
        let grad_norm = grad.iter().fold(F::zero(), |m, g| m.max(g.abs()));
        if grad_norm <= grad_tol {
            return MinimizeResult {
                x,
                value,
                iterations: it,
                converged: true,
            };
        }
        let grad_sq = grad.iter().map(|g| *g * *g).sum::<F>();
        // Backtrack until the Armijo condition holds; grow the step again on
        // success so the search adapts to local curvature.
        let mut s = step;
        loop {
            let candidate: Vec<F> = x.iter().zip(&grad).map(|(xi, g)| *xi - s * *g).collect();
            let cand_value = f(&candidate);
            if cand_value <= value - armijo * s * grad_sq {
                x = candidate;
                value = cand_value;
                step = (s + s).min(F::cast(1e6));
                break;
            }
            s *= F::cast(0.5);
            if s < F::cast(1e-18) {
                // No descent at machine scale; report the best point found.
                return MinimizeResult {
                    x,
                    value,
                    iterations: it,
                    converged: false,
                };
            }
        }
    }
    MinimizeResult {
        x,
        value,
        iterations: max_iter,
        converged: false,
    }
}

/// Golden-section minimization of a unimodal function on [lo, hi] with a fixed
/// iteration budget. Deterministic for deterministic objectives.
pub fn golden_section<F: Real>(f: impl Fn(F) -> F, lo: F, hi: F, iters: usize) -> F {
    let ratio = F::cast(0.618_033_988_749_894_9);
    let mut a = lo;
    let mut b = hi;
    let mut c = b - ratio * (b - a);
    let mut d = a + ratio * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - ratio * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + ratio * (b - a);
            fd = f(d);
        }
    }
    (a + b) / F::cast(2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fd_gradient_of_a_quadratic() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[1];
        let g = fd_gradient(f, &[2.0, -1.0], 1e-5);
        assert_abs_diff_eq!(g[0], 4.0, epsilon = 1e-8);
        assert_abs_diff_eq!(g[1], 3.0, epsilon = 1e-8);
    }

    #[test]
    fn minimize_fd_solves_a_quadratic_bowl() {
        let f = |x: &[f64]| (x[0] - 1.5).powi(2) + 4.0 * (x[1] + 0.5).powi(2) + 7.0;
        let out = minimize_fd(f, vec![5.0, 5.0], 500, 1e-9);
        assert!(out.converged);
        assert_abs_diff_eq!(out.x[0], 1.5, epsilon = 1e-6);
        assert_abs_diff_eq!(out.x[1], -0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(out.value, 7.0, epsilon = 1e-10);
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let f = |x: &[f64]| (x[0] - 2.0).powi(2);
        let mut adam = Adam::new(0.05, 1);
        let mut x = vec![-1.0];
        for _ in 0..2000 {
            let g = fd_gradient(f, &x, 1e-5);
            adam.step(&mut x, &g);
        }
        assert_abs_diff_eq!(x[0], 2.0, epsilon = 1e-3);
    }

    #[test]
    fn golden_section_finds_the_minimum() {
        let x = golden_section(|t: f64| (t - 0.3).powi(2), 0.0, 1.0, 80);
        assert_abs_diff_eq!(x, 0.3, epsilon = 1e-10);
    }
}
