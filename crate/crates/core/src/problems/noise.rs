//! Synthetic oracle noise: Gaussian or symmetrized Pareto (heavy tailed).

use alloc::format;

use crate::error::{invalid, Result};
use crate::param::{Layout, ParamVector};
use crate::rng::StreamRng;
use alloc::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseKind {
    Gaussian,
    /// Magnitude `σ (U^(-1/α) - 1)` (Lomax) with a uniform random sign. The
    /// `p`-th moment is finite iff `p < α`.
    SymmetricPareto { tail_index: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub kind: NoiseKind,
    pub sigma: f64,
    /// Draw one noise vector per batch element and average, instead of a
    /// single draw added to the batch mean.
    pub per_sample: bool,
}

impl NoiseSpec {
    pub fn gaussian(sigma: f64) -> Self {
        NoiseSpec { kind: NoiseKind::Gaussian, sigma, per_sample: true }
    }

    pub fn pareto(sigma: f64, tail_index: f64) -> Self {
        NoiseSpec { kind: NoiseKind::SymmetricPareto { tail_index }, sigma, per_sample: true }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(invalid(format!("noise scale must be finite and nonnegative, got {}", self.sigma)));
        }
        if let NoiseKind::SymmetricPareto { tail_index } = self.kind {
            if !(tail_index > 1.0) {
                return Err(invalid(format!("pareto tail index must exceed 1, got {tail_index}")));
            }
        }
        Ok(())
    }

    pub fn draw(&self, rng: &mut StreamRng) -> f64 {
        match self.kind {
            NoiseKind::Gaussian => self.sigma * rng.normal(),
            NoiseKind::SymmetricPareto { tail_index } => {
                let u = rng.uniform_pos();
                let magnitude = self.sigma * (libm::pow(u, -1.0 / tail_index) - 1.0);
                rng.sign() * magnitude
            }
        }
    }

    /// Adds `scale · ξ` to `out`, where `ξ` is one draw or the mean of
    /// `batch_len` draws. Samples are the outer loop.
    pub fn add_to(&self, out: &mut [f64], scale: f64, batch_len: usize, rng: &mut StreamRng) {
        if self.per_sample && batch_len > 1 {
            let weight = scale / batch_len as f64;
            for _ in 0..batch_len {
                for o in out.iter_mut() {
                    *o += weight * self.draw(rng);
                }
            }
        } else {
            for o in out.iter_mut() {
                *o += scale * self.draw(rng);
            }
        }
    }
}

/// I.i.d. noise vector with the given layout.
pub fn inject_heavy_tail(noise: &NoiseSpec, layout: &Arc<Layout>, rng: &mut StreamRng) -> Result<ParamVector> {
    noise.validate()?;
    let mut out = ParamVector::zeros(layout);
    for v in out.as_mut_slice() {
        *v = noise.draw(rng);
    }
    Ok(out)
}

/// Additive noise model for an oracle: gradient noise, and HVP noise whose
/// scale grows with `‖d‖₂` so that a zero direction stays exactly zero.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct OracleNoise {
    pub gradient: Option<NoiseSpec>,
    pub hvp: Option<NoiseSpec>,
}

impl OracleNoise {
    pub fn validate(&self) -> Result<()> {
        if let Some(n) = &self.gradient {
            n.validate()?;
        }
        if let Some(n) = &self.hvp {
            n.validate()?;
        }
        Ok(())
    }

    pub fn is_off(&self) -> bool {
        self.gradient.is_none() && self.hvp.is_none()
    }

    pub fn perturb_gradient(&self, g: &mut ParamVector, batch_len: usize, rng: &mut StreamRng) {
        if let Some(n) = &self.gradient {
            n.add_to(g.as_mut_slice(), 1.0, batch_len, rng);
        }
    }

    pub fn perturb_hvp(&self, h: &mut ParamVector, d_norm: f64, batch_len: usize, rng: &mut StreamRng) {
        if let Some(n) = &self.hvp {
            if d_norm > 0.0 {
                n.add_to(h.as_mut_slice(), d_norm, batch_len, rng);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Consumer, RngState};

    #[test]
    fn tail_index_must_exceed_one() {
        let mut rng = RngState::new(1).split(Consumer::Noise).rng();
        let spec = NoiseSpec::pareto(1.0, 1.0);
        assert!(inject_heavy_tail(&spec, &Layout::vector(3), &mut rng).is_err());
        assert!(NoiseSpec::pareto(1.0, 0.5).validate().is_err());
        assert!(NoiseSpec::gaussian(-1.0).validate().is_err());
    }

    #[test]
    fn zero_direction_gets_no_hvp_noise() {
        let mut rng = RngState::new(1).rng();
        let noise = OracleNoise { gradient: None, hvp: Some(NoiseSpec::gaussian(1.0)) };
        let mut h = ParamVector::zeros(&Layout::vector(4));
        noise.perturb_hvp(&mut h, 0.0, 8, &mut rng);
        assert!(h.is_zero());
    }
}
