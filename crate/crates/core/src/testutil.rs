//! Independent numeric oracles for unit tests.

use ndarray::{Array1, Array2};

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Returns (eigenvalues, eigenvectors-as-columns). Deliberately unrelated to
/// the power iteration it is used to check.
pub fn jacobi_eigen(m: &Array2<f64>) -> (Array1<f64>, Array2<f64>) {
    let d = m.nrows();
    assert_eq!(d, m.ncols());
    let mut a = m.clone();
    let mut v = Array2::<f64>::eye(d);
    for _ in 0..100 {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        if off < 1e-30 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..d {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..d {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..d {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let vals = Array1::from_iter((0..d).map(|i| a[[i, i]]));
    (vals, v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn jacobi_reconstructs_the_matrix() {
        let m = array![[2.0, 0.5, -0.2], [0.5, 1.0, 0.3], [-0.2, 0.3, 0.7]];
        let (vals, vecs) = jacobi_eigen(&m);
        let mut recon = Array2::<f64>::zeros((3, 3));
        for k in 0..3 {
            let u = vecs.column(k);
            for i in 0..3 {
                for j in 0..3 {
                    recon[[i, j]] += vals[k] * u[i] * u[j];
                }
            }
        }
        for i in 0..3 {
            for j in 0..3 {
                assert!((recon[[i, j]] - m[[i, j]]).abs() < 1e-10);
            }
        }
    }
}
