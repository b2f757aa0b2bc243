//! Noisy quadratic `f(x) = ½ xᵀAx - bᵀx` used for rate and bias checks.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::linalg;
use crate::oracle::StochasticOracle;
use crate::param::{Layout, ParamVector};
use crate::problems::noise::OracleNoise;
use crate::rng::StreamRng;

#[derive(Debug, Clone)]
pub struct QuadraticProblem {
    dim: usize,
    a: Vec<f64>,
    b: Vec<f64>,
    noise: OracleNoise,
    layout: Arc<Layout>,
}

impl QuadraticProblem {
    /// `a` is row-major `dim × dim` and must be symmetric to 1e-12.
    pub fn new(a: Vec<f64>, b: Vec<f64>, noise: OracleNoise) -> Result<Self> {
        let dim = b.len();
        if a.len() != dim * dim {
            return Err(invalid(format!("matrix has {} entries, expected {}", a.len(), dim * dim)));
        }
        for i in 0..dim {
            for j in 0..i {
                let (x, y) = (a[i * dim + j], a[j * dim + i]);
                if libm::fabs(x - y) > 1e-12 * (1.0 + libm::fabs(x)) {
                    return Err(invalid(format!("matrix is not symmetric at ({i}, {j})")));
                }
            }
        }
        noise.validate()?;
        Ok(QuadraticProblem { dim, a, b, noise, layout: Layout::vector(dim) })
    }

    /// `A = Q diag(λ) Qᵀ` with a random orthogonal `Q` and eigenvalues spaced
    /// linearly over `[mu, l]`; `b ~ N(0, I)`.
    pub fn random(dim: usize, mu: f64, l: f64, noise: OracleNoise, rng: &mut StreamRng) -> Result<Self> {
        if !(mu >= 0.0 && l >= mu && dim > 0) {
            return Err(invalid(format!("need 0 <= mu <= L and dim > 0, got mu={mu}, L={l}, dim={dim}")));
        }
        let eig: Vec<f64> = (0..dim)
            .map(|i| if dim == 1 { l } else { mu + (l - mu) * i as f64 / (dim - 1) as f64 })
            .collect();
        let mut q: Vec<f64> = (0..dim * dim).map(|_| rng.normal()).collect();
        linalg::orthonormalize_columns(&mut q, dim);
        let mut a = alloc::vec![0.0; dim * dim];
        for i in 0..dim {
            for j in 0..dim {
                a[i * dim + j] = (0..dim).map(|k| q[i * dim + k] * eig[k] * q[j * dim + k]).sum();
            }
        }
        for i in 0..dim {
            for j in 0..i {
                let avg = 0.5 * (a[i * dim + j] + a[j * dim + i]);
                a[i * dim + j] = avg;
                a[j * dim + i] = avg;
            }
        }
        let b = (0..dim).map(|_| rng.normal()).collect();
        Self::new(a, b, noise)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &[f64] {
        &self.a
    }

    pub fn with_noise(mut self, noise: OracleNoise) -> Result<Self> {
        noise.validate()?;
        self.noise = noise;
        Ok(self)
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        linalg::matvec(&self.a, v, self.dim, self.dim)
    }

    /// `A⁻¹ b`, if `A` is positive definite.
    pub fn minimizer(&self) -> Result<ParamVector> {
        let x = linalg::cholesky_solve(&self.a, &self.b, self.dim)
            .ok_or_else(|| invalid("quadratic is not positive definite"))?;
        ParamVector::from_vec(&self.layout, x)
    }

    fn value(&self, x: &ParamVector) -> f64 {
        let ax = self.apply(x.as_slice());
        let quad: f64 = x.as_slice().iter().zip(&ax).map(|(p, q)| p * q).sum();
        let lin: f64 = x.as_slice().iter().zip(&self.b).map(|(p, q)| p * q).sum();
        0.5 * quad - lin
    }

    fn exact_gradient(&self, x: &ParamVector) -> ParamVector {
        let mut g = self.apply(x.as_slice());
        for (gi, bi) in g.iter_mut().zip(&self.b) {
            *gi -= bi;
        }
        ParamVector::from_vec(&self.layout, g).expect("layout")
    }
}

impl StochasticOracle for QuadraticProblem {
    fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn dataset_size(&self) -> Option<usize> {
        None
    }

    fn loss(&self, x: &ParamVector, _batch: &[usize]) -> f64 {
        self.value(x)
    }

    fn gradient(&self, x: &ParamVector, _batch: &[usize]) -> ParamVector {
        self.exact_gradient(x)
    }

    fn hvp(&self, _x: &ParamVector, d: &ParamVector, _batch: &[usize]) -> ParamVector {
        ParamVector::from_vec(&self.layout, self.apply(d.as_slice())).expect("layout")
    }

    fn noise(&self) -> Option<&OracleNoise> {
        (!self.noise.is_off()).then_some(&self.noise)
    }

    fn full_loss(&self, x: &ParamVector) -> f64 {
        self.value(x)
    }

    fn full_gradient(&self, x: &ParamVector) -> Option<ParamVector> {
        Some(self.exact_gradient(x))
    }
}
