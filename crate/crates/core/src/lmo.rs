//! Linear minimization oracles over norm balls.
//!
//! `lmo(m) = argmin_{‖v‖ ≤ ρ} ⟨m, v⟩`. The choice of norm sets the update
//! geometry: L2 gives normalized SGD, L∞ gives sign SGD, the spectral norm
//! gives Muon-style orthogonalized updates, and the nuclear norm gives the
//! rank-one Frank–Wolfe vertex used for matrix completion.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Error, Result};
use crate::linalg;
use crate::param::{ParamVector, Shape};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Geometry {
    L2Ball { rho: f64 },
    LinfBall { rho: f64 },
    SpectralBall { rho: f64, ns_iters: usize },
    NuclearBall { rho: f64, tol: f64, max_iters: usize },
}

pub const DEFAULT_NS_ITERS: usize = 8;
pub const DEFAULT_POWER_TOL: f64 = 1e-10;
pub const DEFAULT_POWER_MAX_ITERS: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct LmoResult {
    pub direction: ParamVector,
    /// The input was zero, so every point of the ball is a minimizer and the
    /// returned direction is zero.
    pub degenerate: bool,
    /// False when power iteration stopped at `max_iters` before reaching its
    /// tolerance; the best iterate is still returned.
    pub converged: bool,
}

impl Geometry {
    pub fn rho(&self) -> f64 {
        match *self {
            Geometry::L2Ball { rho }
            | Geometry::LinfBall { rho }
            | Geometry::SpectralBall { rho, .. }
            | Geometry::NuclearBall { rho, .. } => rho,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Geometry::L2Ball { .. } => "l2",
            Geometry::LinfBall { .. } => "linf",
            Geometry::SpectralBall { .. } => "spectral",
            Geometry::NuclearBall { .. } => "nuclear",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rho = self.rho();
        if !(rho > 0.0 && rho.is_finite()) {
            return Err(invalid(format!("ball radius must be positive, got {rho}")));
        }
        match *self {
            Geometry::SpectralBall { ns_iters, .. } if ns_iters == 0 => {
                Err(invalid("newton-schulz needs at least one iteration"))
            }
            Geometry::NuclearBall { tol, max_iters, .. } if !(tol > 0.0) || max_iters == 0 => {
                Err(invalid("power iteration needs tol > 0 and max_iters >= 1"))
            }
            _ => Ok(()),
        }
    }

    /// Solve the oracle for momentum `m`. Only the nuclear ball consumes
    /// randomness (its power-iteration start vector).
    pub fn lmo(&self, m: &ParamVector, rng: &mut StreamRng) -> Result<LmoResult> {
        match *self {
            Geometry::L2Ball { rho } => Ok(lmo_l2(m, rho)),
            Geometry::LinfBall { rho } => Ok(lmo_sign(m, rho)),
            Geometry::SpectralBall { rho, ns_iters } => lmo_spectral(m, rho, ns_iters),
            Geometry::NuclearBall { rho, tol, max_iters } => lmo_nuclear(m, rho, tol, max_iters, rng),
        }
    }

    /// The primal norm whose ball this geometry optimizes over.
    pub fn norm(&self, v: &ParamVector) -> Result<f64> {
        match self {
            Geometry::L2Ball { .. } => Ok(v.norm_l2()),
            Geometry::LinfBall { .. } => Ok(v.norm_linf()),
            Geometry::SpectralBall { .. } => {
                let mut worst: f64 = 0.0;
                for (i, block) in v.layout().blocks().iter().enumerate() {
                    let n = match block.shape {
                        Shape::Matrix { rows, cols } => linalg::spectral_norm(v.block(i), rows, cols),
                        Shape::Vector(_) => libm::sqrt(v.block(i).iter().map(|x| x * x).sum()),
                    };
                    worst = worst.max(n);
                }
                Ok(worst)
            }
            Geometry::NuclearBall { .. } => {
                let (rows, cols) = single_matrix(v)?;
                Ok(linalg::nuclear_norm(v.as_slice(), rows, cols))
            }
        }
    }
}

fn single_matrix(v: &ParamVector) -> Result<(usize, usize)> {
    match v.layout().blocks() {
        [block] => match block.shape {
            Shape::Matrix { rows, cols } => Ok((rows, cols)),
            Shape::Vector(_) => Err(Error::Unsupported("nuclear ball needs a matrix block")),
        },
        _ => Err(Error::Unsupported("nuclear ball needs exactly one matrix block")),
    }
}

/// `d = -ρ m / ‖m‖₂`.
pub fn lmo_l2(m: &ParamVector, rho: f64) -> LmoResult {
    let norm = m.norm_l2();
    let mut direction = ParamVector::zeros(m.layout());
    if norm == 0.0 {
        return LmoResult { direction, degenerate: true, converged: true };
    }
    for (d, x) in direction.as_mut_slice().iter_mut().zip(m.as_slice()) {
        *d = -(rho * x) / norm;
    }
    LmoResult { direction, degenerate: false, converged: true }
}

/// `d_i = -ρ sign(m_i)`, with `sign(0) = 0`.
pub fn lmo_sign(m: &ParamVector, rho: f64) -> LmoResult {
    let mut direction = ParamVector::zeros(m.layout());
    for (d, x) in direction.as_mut_slice().iter_mut().zip(m.as_slice()) {
        *d = if *x > 0.0 {
            -rho
        } else if *x < 0.0 {
            rho
        } else {
            0.0
        };
    }
    let degenerate = m.is_zero();
    LmoResult { direction, degenerate, converged: true }
}

/// Cubic Newton–Schulz iteration `X ← 1.5 X - 0.5 X Xᵀ X` from `M / ‖M‖_F`.
///
/// The Frobenius pre-scale puts every singular value in `(0, 1]`, where the
/// scalar map `x ↦ 1.5x - 0.5x³` increases monotonically to 1. Zero input
/// returns zero.
pub fn newton_schulz(mat: &[f64], rows: usize, cols: usize, iters: usize) -> Vec<f64> {
    let fro = linalg::frobenius(mat);
    if fro == 0.0 {
        return vec![0.0; rows * cols];
    }
    let mut x: Vec<f64> = mat.iter().map(|v| v / fro).collect();
    for _ in 0..iters {
        let cubic = if rows <= cols {
            let g = linalg::gram_rows(&x, rows, cols);
            linalg::matmul(&g, &x, rows, rows, cols)
        } else {
            let xt = linalg::transpose(&x, rows, cols);
            let g = linalg::gram_rows(&xt, cols, rows);
            linalg::matmul(&x, &g, rows, cols, cols)
        };
        for (xi, ci) in x.iter_mut().zip(&cubic) {
            *xi = 1.5 * *xi - 0.5 * ci;
        }
    }
    x
}

/// Muon-style direction: each matrix block is orthogonalized by
/// Newton–Schulz and scaled by `-ρ`; vector blocks get a per-block L2
/// normalization to radius `ρ`.
pub fn lmo_spectral(m: &ParamVector, rho: f64, ns_iters: usize) -> Result<LmoResult> {
    if !m.layout().has_matrix() {
        return Err(Error::Unsupported("spectral geometry needs at least one matrix block"));
    }
    let layout = m.layout().clone();
    let mut direction = ParamVector::zeros(&layout);
    for (i, block) in layout.blocks().iter().enumerate() {
        let src = m.block(i);
        let out: Vec<f64> = match block.shape {
            Shape::Matrix { rows, cols } => {
                newton_schulz(src, rows, cols, ns_iters).into_iter().map(|v| -rho * v).collect()
            }
            Shape::Vector(_) => {
                let norm = libm::sqrt(src.iter().map(|v| v * v).sum());
                if norm == 0.0 {
                    vec![0.0; src.len()]
                } else {
                    src.iter().map(|v| -rho * v / norm).collect()
                }
            }
        };
        direction.block_mut(i).copy_from_slice(&out);
    }
    Ok(LmoResult { direction, degenerate: m.is_zero(), converged: true })
}

/// Top singular pair of a row-major matrix by power iteration on `MᵀM`.
#[derive(Debug, Clone)]
pub struct TopSingular {
    pub sigma: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Power iteration with a relative Rayleigh-quotient stopping rule.
/// Returns `None` for the zero matrix.
pub fn top_singular_pair(
    mat: &[f64],
    rows: usize,
    cols: usize,
    tol: f64,
    max_iters: usize,
    rng: &mut StreamRng,
) -> Option<TopSingular> {
    if mat.iter().all(|v| *v == 0.0) {
        return None;
    }
    let mut v: Vec<f64> = (0..cols).map(|_| rng.normal()).collect();
    normalize(&mut v);
    let mut y = linalg::matvec(mat, &v, rows, cols);
    let mut rayleigh = norm_sq(&y);
    if rayleigh == 0.0 {
        // start orthogonal to the row space: restart from the heaviest column
        let heaviest = (0..cols)
            .max_by(|&a, &b| col_norm_sq(mat, rows, cols, a).total_cmp(&col_norm_sq(mat, rows, cols, b)))
            .unwrap_or(0);
        v = vec![0.0; cols];
        v[heaviest] = 1.0;
        y = linalg::matvec(mat, &v, rows, cols);
        rayleigh = norm_sq(&y);
    }
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iters {
        iterations += 1;
        let mut z = linalg::matvec_t(mat, &y, rows, cols);
        if normalize(&mut z) == 0.0 {
            break;
        }
        let y_next = linalg::matvec(mat, &z, rows, cols);
        let next = norm_sq(&y_next);
        let done = libm::fabs(next - rayleigh) <= tol * next;
        v = z;
        y = y_next;
        rayleigh = next;
        if done {
            converged = true;
            break;
        }
    }
    let sigma = libm::sqrt(norm_sq(&y));
    let u = y.iter().map(|x| x / sigma).collect();
    Some(TopSingular { sigma, u, v, iterations, converged })
}

/// Rank-one vertex `-ρ u₁ v₁ᵀ` of the nuclear ball.
pub fn lmo_nuclear(m: &ParamVector, rho: f64, tol: f64, max_iters: usize, rng: &mut StreamRng) -> Result<LmoResult> {
    let (rows, cols) = single_matrix(m)?;
    let mut direction = ParamVector::zeros(m.layout());
    let Some(top) = top_singular_pair(m.as_slice(), rows, cols, tol, max_iters, rng) else {
        return Ok(LmoResult { direction, degenerate: true, converged: true });
    };
    let out = direction.as_mut_slice();
    for i in 0..rows {
        let ui = -rho * top.u[i];
        for j in 0..cols {
            out[i * cols + j] = ui * top.v[j];
        }
    }
    Ok(LmoResult { direction, degenerate: false, converged: top.converged })
}

fn norm_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

fn col_norm_sq(mat: &[f64], rows: usize, cols: usize, j: usize) -> f64 {
    (0..rows).map(|i| mat[i * cols + j] * mat[i * cols + j]).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = libm::sqrt(norm_sq(v));
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::param::Layout;
    use crate::rng::RngState;

    fn rng() -> StreamRng {
        RngState::new(5).rng()
    }

    #[test]
    fn l2_examples() {
        let r = lmo_l2(&ParamVector::from_slice(&[3.0, 4.0]), 1.0);
        assert_eq!(r.direction.as_slice(), &[-0.6, -0.8]);
        assert!(!r.degenerate);
        let r = lmo_l2(&ParamVector::from_slice(&[0.0, 0.0]), 1.0);
        assert!(r.degenerate && r.direction.is_zero());
        let r = lmo_l2(&ParamVector::from_slice(&[1.0]), 2.5);
        assert_eq!(r.direction.as_slice(), &[-2.5]);
    }

    #[test]
    fn sign_examples() {
        let r = lmo_sign(&ParamVector::from_slice(&[0.5, -2.0, 0.0]), 1.0);
        assert_eq!(r.direction.as_slice(), &[-1.0, 1.0, 0.0]);
        let r = lmo_sign(&ParamVector::from_slice(&[0.0; 3]), 1.0);
        assert!(r.degenerate && r.direction.is_zero());
        let r = lmo_sign(&ParamVector::from_slice(&[-1e-300, 1e300]), 0.1);
        assert_eq!(r.direction.as_slice(), &[0.1, -0.1]);
    }

    #[test]
    fn spectral_identity_is_fixed_point() {
        let layout = Layout::matrix(2, 2);
        let m = ParamVector::from_vec(&layout, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let r = lmo_spectral(&m, 0.7, DEFAULT_NS_ITERS).unwrap();
        let d = r.direction.as_slice();
        for (got, want) in d.iter().zip([-0.7, 0.0, 0.0, -0.7]) {
            assert!((got - want).abs() < 1e-12, "{d:?}");
        }
    }

    #[test]
    fn spectral_needs_matrix() {
        let m = ParamVector::from_slice(&[1.0, 2.0]);
        assert!(matches!(lmo_spectral(&m, 1.0, 5), Err(Error::Unsupported(_))));
    }

    #[test]
    fn spectral_mixed_layout_normalizes_vectors() {
        let layout = Layout::new([("w", Shape::Matrix { rows: 2, cols: 2 }), ("b", Shape::Vector(2))]);
        let m = ParamVector::from_vec(&layout, vec![2.0, 0.0, 0.0, 0.5, 3.0, 4.0]).unwrap();
        let r = lmo_spectral(&m, 1.0, 8).unwrap();
        assert_eq!(r.direction.block(1), &[-0.6, -0.8]);
    }

    #[test]
    fn spectral_zero_block_stays_zero() {
        let layout = Layout::new([("w", Shape::Matrix { rows: 2, cols: 2 }), ("b", Shape::Vector(1))]);
        let m = ParamVector::from_vec(&layout, vec![0.0, 0.0, 0.0, 0.0, 1.0]).unwrap();
        let r = lmo_spectral(&m, 1.0, 8).unwrap();
        assert_eq!(r.direction.block(0), &[0.0; 4]);
        assert!(!r.degenerate);
        let r = lmo_spectral(&ParamVector::zeros(&layout), 1.0, 8).unwrap();
        assert!(r.degenerate);
    }

    #[test]
    fn nuclear_diagonal() {
        let layout = Layout::matrix(2, 2);
        let m = ParamVector::from_vec(&layout, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let r = lmo_nuclear(&m, 2.0, 1e-14, 1000, &mut rng()).unwrap();
        let d = r.direction.as_slice();
        assert!((d[0] + 2.0).abs() < 1e-6, "{d:?}");
        for v in &d[1..] {
            assert!(v.abs() < 1e-6, "{d:?}");
        }
        assert!(r.converged);
    }

    #[test]
    fn nuclear_zero_is_degenerate() {
        let m = ParamVector::zeros(&Layout::matrix(3, 2));
        let r = lmo_nuclear(&m, 1.0, 1e-10, 100, &mut rng()).unwrap();
        assert!(r.degenerate && r.direction.is_zero());
    }

    #[test]
    fn nuclear_iteration_cap_is_flagged() {
        // equal singular values: Rayleigh quotient is flat from the start,
        // so use a near-tie with a 1-iteration cap instead
        let m = ParamVector::from_vec(&Layout::matrix(2, 2), vec![1.0, 0.0, 0.0, 0.999]).unwrap();
        let r = lmo_nuclear(&m, 1.0, 1e-16, 1, &mut rng()).unwrap();
        assert!(!r.converged);
        assert!(r.direction.is_finite());
    }

    #[test]
    fn nuclear_rejects_vectors() {
        let m = ParamVector::from_slice(&[1.0, 2.0]);
        assert!(lmo_nuclear(&m, 1.0, 1e-10, 10, &mut rng()).is_err());
    }

    #[test]
    fn geometry_validation() {
        assert!(Geometry::L2Ball { rho: 0.0 }.validate().is_err());
        assert!(Geometry::SpectralBall { rho: 1.0, ns_iters: 0 }.validate().is_err());
        assert!(Geometry::NuclearBall { rho: 1.0, tol: 0.0, max_iters: 10 }.validate().is_err());
        assert!(Geometry::LinfBall { rho: 1.0 }.validate().is_ok());
    }
}
