//! Small dense row-major helpers.
//!
//! Sizes here are desk scale (at most a few hundred per side), so plain
//! triple loops are adequate. The Jacobi SVD is used for diagnostics
//! (nuclear and spectral norms) and as the reference against which the
//! power-iteration LMO is checked; it never runs inside an optimizer step.

use alloc::vec;
use alloc::vec::Vec;

/// `a (m×k) * b (k×n)`.
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, bv) in row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    }
    out
}

/// `a (m×n) * aᵀ`, an m×m symmetric matrix.
pub fn gram_rows(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for j in i..m {
            let v: f64 = a[i * n..(i + 1) * n].iter().zip(&a[j * n..(j + 1) * n]).map(|(x, y)| x * y).sum();
            out[i * m + j] = v;
            out[j * m + i] = v;
        }
    }
    out
}

pub fn transpose(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

/// `a (m×n) * x`.
pub fn matvec(a: &[f64], x: &[f64], m: usize, n: usize) -> Vec<f64> {
    (0..m).map(|i| a[i * n..(i + 1) * n].iter().zip(x).map(|(p, q)| p * q).sum()).collect()
}

/// `aᵀ (n×m) * y` for `a` of shape m×n.
pub fn matvec_t(a: &[f64], y: &[f64], m: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; n];
    for i in 0..m {
        let yi = y[i];
        for (o, av) in out.iter_mut().zip(&a[i * n..(i + 1) * n]) {
            *o += av * yi;
        }
    }
    out
}

pub fn frobenius(a: &[f64]) -> f64 {
    libm::sqrt(a.iter().map(|v| v * v).sum())
}

#[derive(Debug, Clone)]
pub struct Svd {
    /// m×k, row-major.
    pub u: Vec<f64>,
    /// Descending singular values, length k = min(m, n).
    pub s: Vec<f64>,
    /// n×k, row-major.
    pub v: Vec<f64>,
    pub k: usize,
}

/// Thin SVD by one-sided (Hestenes) Jacobi rotations.
pub fn svd_jacobi(a: &[f64], m: usize, n: usize) -> Svd {
    if m < n {
        let t = transpose(a, m, n);
        let Svd { u, s, v, k } = svd_jacobi(&t, n, m);
        return Svd { u: v, s, v: u, k };
    }
    // columns of `w` (m×n) are rotated until mutually orthogonal
    let mut w = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    for _sweep in 0..80 {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for i in 0..m {
                    let (wp, wq) = (w[i * n + p], w[i * n + q]);
                    alpha += wp * wp;
                    beta += wq * wq;
                    gamma += wp * wq;
                }
                if gamma == 0.0 || libm::fabs(gamma) <= 1e-15 * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = libm::copysign(1.0, zeta) / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                for i in 0..m {
                    let (wp, wq) = (w[i * n + p], w[i * n + q]);
                    w[i * n + p] = c * wp - s * wq;
                    w[i * n + q] = s * wp + c * wq;
                }
                for i in 0..n {
                    let (vp, vq) = (v[i * n + p], v[i * n + q]);
                    v[i * n + p] = c * vp - s * vq;
                    v[i * n + q] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = (0..n).map(|j| libm::sqrt((0..m).map(|i| w[i * n + j] * w[i * n + j]).sum())).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let k = n;
    let mut u = vec![0.0; m * k];
    let mut vs = vec![0.0; n * k];
    let mut s = vec![0.0; k];
    for (col, &j) in order.iter().enumerate() {
        s[col] = norms[j];
        for i in 0..m {
            u[i * k + col] = if norms[j] > 0.0 { w[i * n + j] / norms[j] } else { 0.0 };
        }
        for i in 0..n {
            vs[i * k + col] = v[i * n + j];
        }
    }
    Svd { u, s, v: vs, k }
}

pub fn singular_values(a: &[f64], m: usize, n: usize) -> Vec<f64> {
    svd_jacobi(a, m, n).s
}

pub fn nuclear_norm(a: &[f64], m: usize, n: usize) -> f64 {
    singular_values(a, m, n).iter().sum()
}

pub fn spectral_norm(a: &[f64], m: usize, n: usize) -> f64 {
    singular_values(a, m, n).first().copied().unwrap_or(0.0)
}

/// Solve `a x = b` for symmetric positive-definite `a` (n×n). `None` if a
/// pivot is not positive.
pub fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = a[i * n + j];
            for k in 0..j {
                sum -= l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if sum <= 0.0 {
                    return None;
                }
                l[i * n + i] = libm::sqrt(sum);
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i * n + k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i * n + i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = ((i + 1)..n).map(|k| l[k * n + i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i * n + i];
    }
    Some(x)
}

/// Orthonormalize the columns of `a` (n×n) in place by modified Gram–Schmidt.
pub fn orthonormalize_columns(a: &mut [f64], n: usize) {
    for j in 0..n {
        for p in 0..j {
            let d: f64 = (0..n).map(|i| a[i * n + j] * a[i * n + p]).sum();
            for i in 0..n {
                a[i * n + j] -= d * a[i * n + p];
            }
        }
        let norm = libm::sqrt((0..n).map(|i| a[i * n + j] * a[i * n + j]).sum());
        for i in 0..n {
            a[i * n + j] /= norm;
        }
    }
}
