//! Small dense symmetric-matrix helpers: a cyclic Jacobi eigensolver plus the
//! eigenvalue-based spectral bounds and square roots built on it.
//!
//! One eigen primitive serves the whole toolkit: rotation-matrix conversion,
//! positive-semidefiniteness checks of edge weights and whitening roots.

use nalgebra::{Matrix3, Matrix4, SMatrix, SVector};

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 64;

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns `(values, vectors)` with `m = vectors * diag(values) * vectors^T`.
/// Eigenvalues are not sorted. Off-diagonal entries are driven below
/// `JACOBI_TOL` relative to the Frobenius norm.
pub fn sym_eigen<const N: usize>(m: &SMatrix<f64, N, N>) -> (SVector<f64, N>, SMatrix<f64, N, N>) {
    let mut a = (m + m.transpose()) * 0.5;
    let mut v = SMatrix::<f64, N, N>::identity();
    let scale = a.norm().max(f64::MIN_POSITIVE);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut off = 0.0;
        for p in 0..N {
            for q in (p + 1)..N {
                off += a[(p, q)] * a[(p, q)];
            }
        }
        if off.sqrt() <= JACOBI_TOL * scale {
            break;
        }
        for p in 0..N {
            for q in (p + 1)..N {
                let apq = a[(p, q)];
                if apq.abs() <= JACOBI_TOL * scale * 1e-3 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..N {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..N {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..N {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    (a.diagonal(), v)
}

pub fn sym_eigen3(m: &Matrix3<f64>) -> (SVector<f64, 3>, Matrix3<f64>) {
    sym_eigen(m)
}

pub fn sym_eigen4(m: &Matrix4<f64>) -> (SVector<f64, 4>, Matrix4<f64>) {
    sym_eigen(m)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn sym_max_eigenvalue<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    let (values, _) = sym_eigen(m);
    values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_min_eigenvalue<const N: usize>(m: &SMatrix<f64, N, N>) -> f64 {
    let (values, _) = sym_eigen(m);
    values.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Checks symmetry and positive semidefiniteness within `tol`.
pub fn is_symmetric_psd<const N: usize>(m: &SMatrix<f64, N, N>, tol: f64) -> bool {
    let scale = m.norm().max(1.0);
    if (m - m.transpose()).norm() > tol * scale {
        return false;
    }
    sym_min_eigenvalue(m) >= -tol * scale
}

/// Symmetric square root of a positive-semidefinite matrix. Small negative
/// eigenvalues from rounding are clamped to zero.
pub fn sym_sqrt<const N: usize>(m: &SMatrix<f64, N, N>) -> SMatrix<f64, N, N> {
    let (values, vectors) = sym_eigen(m);
    let mut d = SMatrix::<f64, N, N>::zeros();
    for i in 0..N {
        d[(i, i)] = values[i].max(0.0).sqrt();
    }
    vectors * d * vectors.transpose()
}
