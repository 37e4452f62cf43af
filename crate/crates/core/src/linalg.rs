//! Small dense linear algebra on row-major `Vec<f64>` storage.
//!
//! Everything here is sized for desk-scale problems (a few hundred rows at
//! most), so the routines favour clarity over blocking or SIMD.

use crate::error::{Error, Result};

/// Maximum number of cyclic Jacobi sweeps before giving up.
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Relative off-diagonal Frobenius norm at which Jacobi stops.
pub const JACOBI_TOLERANCE: f64 = 1e-12;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    dot(a, a)
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// `y += s * x`
pub fn axpy(s: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += s * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn all_finite(a: &[f64]) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Index of the first non-finite entry.
pub fn first_non_finite(a: &[f64]) -> Option<usize> {
    a.iter().position(|v| !v.is_finite())
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymEigen {
    /// Eigenvalues in ascending order.
    pub values: Vec<f64>,
    /// Eigenvectors stored column-wise: `vectors[r * n + c]` is row `r` of
    /// the eigenvector belonging to `values[c]`.
    pub vectors: Vec<f64>,
    pub sweeps: usize,
}

/// Cyclic Jacobi rotations on a dense symmetric `n x n` matrix.
///
/// Stops once the off-diagonal Frobenius norm falls to
/// `JACOBI_TOLERANCE * ||A||_F`.
pub fn symmetric_eigen(matrix: &[f64], n: usize) -> Result<SymEigen> {
    if matrix.len() != n * n {
        return Err(Error::argument(format!(
            "matrix has {} entries, expected {}x{}",
            matrix.len(),
            n,
            n
        )));
    }
    let mut a = matrix.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }

    let frob = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let target = JACOBI_TOLERANCE * frob;
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    let mut off = off_norm(&a);
    while off > target {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::EigenNonConvergence {
                sweeps,
                off_norm: off,
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;

                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
        off = off_norm(&a);
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = vec![0.0; n * n];
    for (new_c, &old_c) in order.iter().enumerate() {
        for r in 0..n {
            vectors[r * n + new_c] = v[r * n + old_c];
        }
    }
    Ok(SymEigen {
        values,
        vectors,
        sweeps,
    })
}

/// Solves `A x = b` for symmetric positive definite `A` by Cholesky.
///
/// Returns `None` when a pivot drops below `rel_tol * max_diag`, which is
/// how rank deficiency shows up.
pub fn cholesky_solve(matrix: &[f64], n: usize, rhs: &[f64], rel_tol: f64) -> Option<Vec<f64>> {
    let max_diag = (0..n).map(|i| matrix[i * n + i].abs()).fold(0.0, f64::max);
    let floor = rel_tol * max_diag.max(f64::MIN_POSITIVE);
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = matrix[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if s <= floor {
                    return None;
                }
                l[i * n + i] = s.sqrt();
            } else {
                l[i * n + j] = s / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = rhs[i];
        for k in 0..i {
            s -= l[i * n + k] * y[k];
        }
        y[i] = s / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    Some(x)
}

/// Minimum-norm least-squares solution of a symmetric PSD system via the
/// eigen-decomposition, discarding eigenvalues below `rel_tol * max`.
pub fn pseudo_inverse_solve(matrix: &[f64], n: usize, rhs: &[f64], rel_tol: f64) -> Result<Vec<f64>> {
    let eig = symmetric_eigen(matrix, n)?;
    let max = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let cutoff = rel_tol * max;
    let mut x = vec![0.0; n];
    for c in 0..n {
        let lambda = eig.values[c];
        if lambda.abs() <= cutoff {
            continue;
        }
        let coeff: f64 = (0..n).map(|r| eig.vectors[r * n + c] * rhs[r]).sum::<f64>() / lambda;
        for r in 0..n {
            x[r] += coeff * eig.vectors[r * n + c];
        }
    }
    Ok(x)
}

/// Dense `y = A x` for a row-major `rows x cols` matrix.
pub fn mat_vec(a: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    (0..rows).map(|r| dot(&a[r * cols..(r + 1) * cols], x)).collect()
}
