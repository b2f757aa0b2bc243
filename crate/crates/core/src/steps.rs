//! Randomized step lengths and their Stein weights.
//!
//! For a step `s` with survival function `S(z) = P(s > z)` and density `p`,
//! Fubini gives `E[g(s) - g(0)] = ∫ g'(z) S(z) dz`. Whenever `S = w · p` for
//! a weight function `w`, the right-hand side is `E[w(s) g'(s)]`: a single
//! derivative at the random endpoint replaces the difference of two values.
//!
//! * `Exp(1/eta)`: `S = eta · p`, so `w = eta` (constant).
//! * `Beta(1, K)` on `[0, 1]`: `S(z) = (1 - z)^K`, `p(z) = K (1 - z)^(K-1)`,
//!   so `w(z) = (1 - z) / K`. With `K = 1/eta - 1` the mean is `eta`.

use crate::error::{invalid, Result};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepDistribution {
    Exponential { eta: f64 },
    Beta { eta: f64 },
}

/// One step draw: length `s`, Stein weight `w`, and the mean `eta` used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSample {
    pub s: f64,
    pub w: f64,
    pub eta: f64,
}

impl StepDistribution {
    pub fn exponential(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(invalid(alloc::format!("exponential step mean must be positive, got {eta}")));
        }
        Ok(StepDistribution::Exponential { eta })
    }

    pub fn beta(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(invalid(alloc::format!("beta step mean must lie in (0, 1), got {eta}")));
        }
        Ok(StepDistribution::Beta { eta })
    }

    pub fn eta(&self) -> f64 {
        match *self {
            StepDistribution::Exponential { eta } | StepDistribution::Beta { eta } => eta,
        }
    }

    /// Rate `1/eta` for the exponential, shape `K = 1/eta - 1` for the beta.
    pub fn parameter(&self) -> f64 {
        match *self {
            StepDistribution::Exponential { eta } => 1.0 / eta,
            StepDistribution::Beta { eta } => 1.0 / eta - 1.0,
        }
    }

    pub fn sample(&self, rng: &mut StreamRng) -> StepSample {
        sample_step(self, rng)
    }

    /// `E[s²] / eta²` in closed form.
    pub fn descent_constant(&self) -> f64 {
        match *self {
            StepDistribution::Exponential { .. } => 2.0,
            StepDistribution::Beta { .. } => {
                let k = self.parameter();
                2.0 * (k + 1.0) / (k + 2.0)
            }
        }
    }
}

/// Draw one step by inversion of a single uniform `U ∈ (0, 1]`.
pub fn sample_step(dist: &StepDistribution, rng: &mut StreamRng) -> StepSample {
    let u = rng.uniform_pos();
    match *dist {
        StepDistribution::Exponential { eta } => StepSample { s: -eta * libm::log(u), w: eta, eta },
        StepDistribution::Beta { eta } => {
            let k = 1.0 / eta - 1.0;
            // inverse survival: P(s > z) = (1 - z)^K
            let s = (1.0 - libm::pow(u, 1.0 / k)).clamp(0.0, 1.0);
            StepSample { s, w: (1.0 - s) / k, eta }
        }
    }
}

/// Monte Carlo estimates of the distribution constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentReport {
    pub q: f64,
    /// `E[s²] / eta²`
    pub c_s: f64,
    /// `E[|w / eta|^q]`
    pub m_w: f64,
    /// `E[|(w + s) / eta|^q]`
    pub m_ws: f64,
    /// `2 · 2^(1 - 1/q) · max(M_w^(1/q), M_ws^(1/q))`
    pub c_delta: f64,
    pub n_samples: usize,
}

pub fn correction_constant(q: f64, m_w: f64, m_ws: f64) -> f64 {
    2.0 * libm::pow(2.0, 1.0 - 1.0 / q) * libm::pow(m_w, 1.0 / q).max(libm::pow(m_ws, 1.0 / q))
}

pub fn estimate_moments(dist: &StepDistribution, q: f64, n: usize, rng: &mut StreamRng) -> Result<MomentReport> {
    if !(q > 1.0 && q <= 2.0) {
        return Err(invalid(alloc::format!("moment order q must lie in (1, 2], got {q}")));
    }
    if n < 10_000 {
        return Err(invalid(alloc::format!("need at least 10^4 samples, got {n}")));
    }
    let eta = dist.eta();
    let (mut s2, mut mw, mut mws) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let StepSample { s, w, .. } = dist.sample(rng);
        s2 += s * s;
        mw += libm::pow(libm::fabs(w / eta), q);
        mws += libm::pow(libm::fabs((w + s) / eta), q);
    }
    let nf = n as f64;
    let (m_w, m_ws) = (mw / nf, mws / nf);
    Ok(MomentReport {
        q,
        c_s: s2 / nf / (eta * eta),
        m_w,
        m_ws,
        c_delta: correction_constant(q, m_w, m_ws),
        n_samples: n,
    })
}

/// `E[(1 + s/eta)^q]` for exponential steps, `e · Γ(q+1, 1)`, via the
/// lower incomplete gamma series. Equals 5 at `q = 2`.
pub fn exponential_mws_closed_form(q: f64) -> f64 {
    let a = q + 1.0;
    // e·γ(a, 1) = Σ_k 1 / (a (a+1) ... (a+k))
    let mut term = 1.0 / a;
    let mut series = term;
    let mut k = 1.0;
    while term > 1e-18 * series {
        term /= a + k;
        series += term;
        k += 1.0;
    }
    core::f64::consts::E * libm::tgamma(a) - series
}

/// `E[|w/eta|^q]` for beta steps: `w/eta = (1-s)(K+1)/K` with `1-s ~ Beta(K, 1)`,
/// so the moment is `((K+1)/K)^q · K/(K+q)`.
pub fn beta_mw_closed_form(eta: f64, q: f64) -> f64 {
    let k = 1.0 / eta - 1.0;
    libm::pow((k + 1.0) / k, q) * k / (k + q)
}

/// Outcome of a Monte Carlo check of a Stein identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteinCheck {
    /// `Ê[g(s) - g(0)]`
    pub lhs: f64,
    /// `Ê[w(s) g'(s)]`
    pub rhs: f64,
    pub abs_err: f64,
    /// Standard error of the per-draw difference `g(s) - g(0) - w g'(s)`.
    pub std_err: f64,
    pub n: usize,
}

/// Both sides of the identity over the same `n` draws.
pub fn verify_stein<G, D>(dist: &StepDistribution, g: G, g_prime: D, n: usize, rng: &mut StreamRng) -> SteinCheck
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let g0 = g(0.0);
    let (mut lhs, mut rhs) = (0.0, 0.0);
    let (mut diff_mean, mut diff_m2) = (0.0, 0.0);
    for i in 0..n {
        let StepSample { s, w, .. } = dist.sample(rng);
        let a = g(s) - g0;
        let b = w * g_prime(s);
        lhs += a;
        rhs += b;
        // Welford on the paired difference
        let d = a - b;
        let delta = d - diff_mean;
        diff_mean += delta / (i + 1) as f64;
        diff_m2 += delta * (d - diff_mean);
    }
    let nf = n as f64;
    let (lhs, rhs) = (lhs / nf, rhs / nf);
    let var = if n > 1 { diff_m2 / (nf - 1.0) } else { 0.0 };
    SteinCheck { lhs, rhs, abs_err: libm::fabs(lhs - rhs), std_err: libm::sqrt(var / nf), n }
}

pub fn verify_stein_exponential<G, D>(g: G, g_prime: D, eta: f64, n: usize, rng: &mut StreamRng) -> Result<SteinCheck>
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    Ok(verify_stein(&StepDistribution::exponential(eta)?, g, g_prime, n, rng))
}

pub fn verify_stein_beta<G, D>(g: G, g_prime: D, eta: f64, n: usize, rng: &mut StreamRng) -> Result<SteinCheck>
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    Ok(verify_stein(&StepDistribution::beta(eta)?, g, g_prime, n, rng))
}
