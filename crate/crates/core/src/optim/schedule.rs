use alloc::format;

use crate::error::{invalid, Result};

/// Mean step size as a function of the step counter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepSchedule {
    Constant(f64),
    /// `eta0 · (t + 1)^(-power)`
    Polynomial { eta0: f64, power: f64 },
}

impl StepSchedule {
    pub fn at(&self, t: u64) -> f64 {
        match *self {
            StepSchedule::Constant(eta) => eta,
            StepSchedule::Polynomial { eta0, power } => eta0 * libm::pow((t + 1) as f64, -power),
        }
    }

    /// Largest value the schedule ever takes.
    pub fn sup(&self) -> f64 {
        match *self {
            StepSchedule::Constant(eta) => eta,
            StepSchedule::Polynomial { eta0, power } if power >= 0.0 => eta0,
            StepSchedule::Polynomial { .. } => f64::INFINITY,
        }
    }
}

/// Horizon-tuned constants `(eta, beta)` for heavy-tail indices `p, q`.
///
/// With `A = (p-1)/p` and `K = 1/q` the momentum error bound balances at
/// `beta = T^(-1/(2A+K))` and `eta = beta^(A+K)`, i.e.
///
/// * `eta  = T^(-(q(p-1)+p) / (2q(p-1)+p))`
/// * `beta = T^(-pq / (2q(p-1)+p))`
///
/// giving the rate `T^(-q(p-1)/(2q(p-1)+p))` (`T^(-1/3)` at `p = q = 2`).
/// Both values are clamped to `(0, 1]`.
pub fn theory_schedule(horizon: u64, p: f64, q: f64) -> Result<(f64, f64)> {
    check_indices(p, q)?;
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    let t = horizon as f64;
    let denom = 2.0 * q * (p - 1.0) + p;
    let eta = libm::pow(t, -(q * (p - 1.0) + p) / denom);
    let beta = libm::pow(t, -(p * q) / denom);
    Ok((eta.min(1.0), beta.min(1.0)))
}

/// Alternative momentum exponent `beta = T^(-q(p-1)/(2q(p-1)+p))`, equal to
/// the rate exponent rather than the balancing choice. Kept for comparison runs.
pub fn theory_schedule_as_printed(horizon: u64, p: f64, q: f64) -> Result<(f64, f64)> {
    check_indices(p, q)?;
    if horizon == 0 {
        return Err(invalid("horizon must be at least 1"));
    }
    let t = horizon as f64;
    let denom = 2.0 * q * (p - 1.0) + p;
    let eta = libm::pow(t, -(q * (p - 1.0) + p) / denom);
    let beta = libm::pow(t, -(q * (p - 1.0)) / denom);
    Ok((eta.min(1.0), beta.min(1.0)))
}

/// Exponent `r` of the main rate `T^(-r)`.
pub fn rate_exponent(p: f64, q: f64) -> Result<f64> {
    check_indices(p, q)?;
    Ok(q * (p - 1.0) / (2.0 * q * (p - 1.0) + p))
}

fn check_indices(p: f64, q: f64) -> Result<()> {
    if !(p > 1.0 && p <= 2.0 && q > 1.0 && q <= 2.0) {
        return Err(invalid(format!("noise indices must lie in (1, 2], got p={p}, q={q}")));
    }
    Ok(())
}
