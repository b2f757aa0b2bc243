//! The stochastic oracle interface and joint gradient + HVP evaluation.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::param::{Layout, ParamVector};
use crate::problems::noise::OracleNoise;
use crate::rng::StreamRng;

/// A stochastic objective `f(x) = E_ξ f_ξ(x)`.
///
/// `loss`, `gradient` and `hvp` are the noise-free batch averages over the
/// given sample indices and must be deterministic in `(x, batch)`. Synthetic
/// oracle noise, if any, is described by [`StochasticOracle::noise`] and added
/// by [`joint_eval`] from a caller-owned stream.
pub trait StochasticOracle: Send + Sync {
    fn layout(&self) -> &Arc<Layout>;

    /// Number of samples for finite sums; `None` for population objectives
    /// whose batches only carry a size.
    fn dataset_size(&self) -> Option<usize>;

    fn loss(&self, x: &ParamVector, batch: &[usize]) -> f64;

    fn gradient(&self, x: &ParamVector, batch: &[usize]) -> ParamVector;

    /// Exact Hessian-vector product `(1/B) Σ ∇²f_ξ(x) d`.
    fn hvp(&self, x: &ParamVector, d: &ParamVector, batch: &[usize]) -> ParamVector;

    /// Loss, gradient and HVP from one pass where the problem can share work.
    fn loss_gradient_hvp(&self, x: &ParamVector, d: &ParamVector, batch: &[usize]) -> (f64, ParamVector, ParamVector) {
        (self.loss(x, batch), self.gradient(x, batch), self.hvp(x, d, batch))
    }

    fn noise(&self) -> Option<&OracleNoise> {
        None
    }

    fn full_loss(&self, x: &ParamVector) -> f64 {
        match self.dataset_size() {
            Some(n) => self.loss(x, &all_indices(n)),
            None => self.loss(x, &[0]),
        }
    }

    fn full_gradient(&self, x: &ParamVector) -> Option<ParamVector> {
        self.dataset_size().map(|n| self.gradient(x, &all_indices(n)))
    }

    /// Held-out metric (accuracy, RMSE, ...) if the problem defines one.
    fn test_metric(&self, _x: &ParamVector) -> Option<f64> {
        None
    }

    fn initial_point(&self, _rng: &mut StreamRng) -> ParamVector {
        ParamVector::zeros(self.layout())
    }
}

pub fn all_indices(n: usize) -> Vec<usize> {
    (0..n).collect()
}

/// Uniform sampling with replacement; population objectives get `0..size`.
pub fn sample_batch(size: usize, dataset_size: Option<usize>, rng: &mut StreamRng) -> Vec<usize> {
    match dataset_size {
        Some(n) => (0..size).map(|_| rng.index(n)).collect(),
        None => (0..size).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HvpStrategy {
    /// Closed-form Hessian-vector product supplied by the problem.
    Analytic,
    /// Directional derivative carried through the backprop recurrences.
    /// Problems without a network route this to their exact HVP as well.
    ForwardOverReverse,
    /// Two extra batch gradients at `x ± εd`; the reference oracle.
    CentralDifference,
}

impl HvpStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            HvpStrategy::Analytic => "analytic",
            HvpStrategy::ForwardOverReverse => "forward-over-reverse",
            HvpStrategy::CentralDifference => "central-difference",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleEval {
    pub gradient: ParamVector,
    pub hvp: Option<ParamVector>,
    pub loss: f64,
    pub batch_indices: Vec<usize>,
}

/// `ε = √ε_mach (1 + ‖x‖₂) / max(‖d‖₂, 1e-12)`.
pub fn fd_epsilon(x: &ParamVector, d: &ParamVector) -> f64 {
    libm::sqrt(f64::EPSILON) * (1.0 + x.norm_l2()) / d.norm_l2().max(1e-12)
}

/// `(∇f_B(x + εd) - ∇f_B(x - εd)) / 2ε`.
pub fn hvp_central_difference<P: StochasticOracle + ?Sized>(
    problem: &P,
    x: &ParamVector,
    d: &ParamVector,
    batch: &[usize],
    epsilon: f64,
) -> Result<ParamVector> {
    if !(epsilon > 0.0) {
        return Err(invalid("finite-difference epsilon must be positive"));
    }
    let mut plus = x.clone();
    plus.axpy(epsilon, d)?;
    let mut minus = x.clone();
    minus.axpy(-epsilon, d)?;
    let mut out = problem.gradient(&plus, batch).sub(&problem.gradient(&minus, batch))?;
    out.scale(1.0 / (2.0 * epsilon));
    Ok(out)
}

/// Gradient and (when `d` is given) HVP at `x` on one shared batch, with
/// oracle noise drawn from `noise_rng`.
pub fn joint_eval<P: StochasticOracle + ?Sized>(
    problem: &P,
    x: &ParamVector,
    d: Option<&ParamVector>,
    batch: &[usize],
    strategy: HvpStrategy,
    noise_rng: &mut StreamRng,
) -> Result<OracleEval> {
    let (loss, mut gradient, mut hvp) = clean_eval(problem, x, d, batch, strategy)?;
    if let Some(noise) = problem.noise() {
        noise.perturb_gradient(&mut gradient, batch.len(), noise_rng);
        if let (Some(h), Some(d)) = (hvp.as_mut(), d) {
            noise.perturb_hvp(h, d.norm_l2(), batch.len(), noise_rng);
        }
    }
    gradient.ensure_finite("gradient")?;
    if let Some(h) = &hvp {
        h.ensure_finite("hessian-vector product")?;
    }
    if !loss.is_finite() {
        return Err(crate::Error::NonFinite { block: "loss".into(), what: "loss" });
    }
    Ok(OracleEval { gradient, hvp, loss, batch_indices: batch.to_vec() })
}

/// Noise-free part of [`joint_eval`].
pub fn clean_eval<P: StochasticOracle + ?Sized>(
    problem: &P,
    x: &ParamVector,
    d: Option<&ParamVector>,
    batch: &[usize],
    strategy: HvpStrategy,
) -> Result<(f64, ParamVector, Option<ParamVector>)> {
    if batch.is_empty() {
        return Err(invalid("batch must be nonempty"));
    }
    x.check_layout_is(problem.layout())?;
    let Some(d) = d else {
        return Ok((problem.loss(x, batch), problem.gradient(x, batch), None));
    };
    d.check_layout_is(problem.layout())?;
    match strategy {
        HvpStrategy::Analytic | HvpStrategy::ForwardOverReverse => {
            let (loss, g, h) = problem.loss_gradient_hvp(x, d, batch);
            Ok((loss, g, Some(h)))
        }
        HvpStrategy::CentralDifference => {
            let h = if d.is_zero() {
                ParamVector::zeros(problem.layout())
            } else {
                hvp_central_difference(problem, x, d, batch, fd_epsilon(x, d))?
            };
            Ok((problem.loss(x, batch), problem.gradient(x, batch), Some(h)))
        }
    }
}
