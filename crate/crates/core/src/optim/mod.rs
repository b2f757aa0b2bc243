//! Momentum optimizers with second-order bias correction.
//!
//! Every method keeps a momentum `m_t` and moves along a direction derived
//! from it. They differ in how the step length is chosen and in the
//! correction `δ` added to the momentum before mixing in the new gradient:
//!
//! | method        | step                      | correction `δ_{t+1}`                       |
//! |---------------|---------------------------|--------------------------------------------|
//! | `RanSomE`     | `s ~ Exp(1/η)` along LMO  | `η · H_ξ(x_{t+1}) d_t`                     |
//! | `RanSomB`     | `s ~ Beta(1, 1/η - 1)` FW | `(1-s)/K · H_ξ(x_{t+1}) d_t`               |
//! | `SgdM`        | `η` along LMO             | none (Polyak momentum)                     |
//! | `Storm`       | `η` along LMO             | `∇f_ξ(x_{t+1}) - ∇f_ξ(x_t)`, shared `ξ`    |
//! | `SomClassic`  | `η` along LMO             | `H_ξ(x_t)(x_{t+1} - x_t)`                  |
//! | `SomUnif`     | `η` along LMO             | `H_ξ'(x̂)(x_{t+1} - x_t)`, `x̂` uniform      |
//! | `SfwPolyak`   | `η` Frank–Wolfe           | none                                       |
//! | `SfwSom`      | `η` Frank–Wolfe           | `H_ξ(x_t)(x_{t+1} - x_t)`                  |
//!
//! The momentum update is `m_{t+1} = (1-β)(m_t + δ_{t+1}) + β g_{t+1}` for
//! every corrected method and `(1-β) m_t + β g_{t+1}` otherwise.

pub mod schedule;

use alloc::format;
use alloc::vec::Vec;

pub use schedule::{rate_exponent, theory_schedule, theory_schedule_as_printed, StepSchedule};

use crate::error::{invalid, Error, Result};
use crate::lmo::Geometry;
use crate::oracle::{all_indices, clean_eval, joint_eval, sample_batch, HvpStrategy, StochasticOracle};
use crate::param::ParamVector;
use crate::rng::{Consumer, RngState, StreamRng};
use crate::steps::{StepDistribution, StepSample};

/// Relative slack allowed on the feasible radius of Frank–Wolfe iterates.
pub const FEASIBILITY_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    RanSomE,
    RanSomB,
    SgdM,
    Storm,
    SomClassic,
    SomUnif,
    SfwPolyak,
    SfwSom,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::RanSomE,
        Method::RanSomB,
        Method::SgdM,
        Method::Storm,
        Method::SomClassic,
        Method::SomUnif,
        Method::SfwPolyak,
        Method::SfwSom,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Method::RanSomE => "ransom-e",
            Method::RanSomB => "ransom-b",
            Method::SgdM => "sgdm",
            Method::Storm => "storm",
            Method::SomClassic => "som-classic",
            Method::SomUnif => "som-unif",
            Method::SfwPolyak => "sfw-polyak",
            Method::SfwSom => "sfw-som",
        }
    }

    pub fn from_name(name: &str) -> Option<Method> {
        Self::ALL.into_iter().find(|m| m.name() == name)
    }

    /// Constrained methods: iterates stay inside the geometry's ball and
    /// stationarity is measured by the Frank–Wolfe gap.
    pub fn is_frank_wolfe(&self) -> bool {
        matches!(self, Method::RanSomB | Method::SfwPolyak | Method::SfwSom)
    }

    /// Methods whose correction is weighted by a Stein weight `w_t`.
    pub fn is_stein(&self) -> bool {
        matches!(self, Method::RanSomE | Method::RanSomB)
    }
}

/// Which batch the SOM-Unif midpoint HVP uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MidpointBatch {
    Fresh,
    Shared,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    pub eta: StepSchedule,
    pub beta: f64,
    pub geometry: Geometry,
    pub batch_size: usize,
    pub init_batch: usize,
    pub hvp_strategy: HvpStrategy,
    /// Unconstrained methods step along `-m` instead of the LMO direction.
    pub plain_step: bool,
    /// SGDm only: draw exponential step lengths instead of using `η`.
    pub random_steps: bool,
    /// STORM's mixing weight; defaults to `beta`.
    pub storm_a: Option<f64>,
    pub midpoint_batch: MidpointBatch,
}

impl OptimizerConfig {
    /// Defaults: initial batch `10 · B`, analytic HVPs, LMO steps.
    pub fn new(method: Method, eta: StepSchedule, beta: f64, geometry: Geometry, batch_size: usize) -> Self {
        OptimizerConfig {
            method,
            eta,
            beta,
            geometry,
            batch_size,
            init_batch: 10 * batch_size,
            hvp_strategy: HvpStrategy::Analytic,
            plain_step: false,
            random_steps: false,
            storm_a: None,
            midpoint_batch: MidpointBatch::Fresh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if !(self.beta > 0.0 && self.beta <= 1.0) {
            return Err(invalid(format!("momentum beta must lie in (0, 1], got {}", self.beta)));
        }
        if let Some(a) = self.storm_a {
            if !(a > 0.0 && a <= 1.0) {
                return Err(invalid(format!("storm a must lie in (0, 1], got {a}")));
            }
        }
        if self.batch_size == 0 || self.init_batch == 0 {
            return Err(invalid("batch sizes must be positive"));
        }
        let eta0 = self.eta.at(0);
        if !(eta0 > 0.0 && eta0.is_finite()) {
            return Err(invalid(format!("step size must be positive, got {eta0}")));
        }
        if self.method == Method::RanSomB && !(self.eta.sup() < 1.0) {
            return Err(invalid("beta-distributed steps need eta_t < 1 for all t"));
        }
        if self.method.is_frank_wolfe() && self.eta.sup() > 1.0 {
            return Err(invalid("frank-wolfe step sizes must not exceed 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Streams {
    step: StreamRng,
    batch: StreamRng,
    noise: StreamRng,
    midpoint: StreamRng,
    power: RngState,
}

impl Streams {
    fn new(root: RngState) -> Self {
        Streams {
            step: root.split(Consumer::Step).rng(),
            batch: root.split(Consumer::Batch).rng(),
            noise: root.split(Consumer::Noise).rng(),
            midpoint: root.split(Consumer::Midpoint).rng(),
            power: root.split(Consumer::Power),
        }
    }
}

/// Everything a run carries between steps. `Clone` is an exact snapshot:
/// continuing from a clone reproduces the original continuation bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub x: ParamVector,
    pub m: ParamVector,
    pub t: u64,
    /// Direction used by the most recent step.
    pub last_direction: Option<ParamVector>,
    /// Step draw of the most recent step.
    pub pending: Option<StepSample>,
    /// Upper bound on the geometry norm of `x` (Frank–Wolfe methods), updated
    /// as `(1-s) r + s ρ` and checked against `ρ (1 + 1e-6)` every step.
    pub radius_bound: Option<f64>,
    streams: Streams,
}

/// What one step did.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRecord {
    /// Counter after the step.
    pub t: u64,
    pub s: f64,
    pub w: f64,
    pub eta: f64,
    pub batch_loss: f64,
    pub degenerate: bool,
    pub lmo_converged: bool,
}

/// Full-data diagnostics at the current iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub train_loss: f64,
    /// `‖∇f(x)‖₂` for unconstrained methods, the Frank–Wolfe gap otherwise.
    pub stationarity: f64,
    pub test_metric: Option<f64>,
    pub momentum_error: Option<f64>,
}

pub struct Optimizer<'p, P: StochasticOracle + ?Sized> {
    problem: &'p P,
    config: OptimizerConfig,
    state: OptimizerState,
}

/// `(1-β)(m + δ) + β g`, evaluated elementwise in exactly this order.
pub fn momentum_update(m: &mut ParamVector, delta: Option<&ParamVector>, g: &ParamVector, beta: f64) -> Result<()> {
    m.check_layout(g)?;
    let keep = 1.0 - beta;
    match delta {
        Some(delta) => {
            m.check_layout(delta)?;
            for ((mi, di), gi) in m.as_mut_slice().iter_mut().zip(delta.as_slice()).zip(g.as_slice()) {
                *mi = keep * (*mi + di) + beta * gi;
            }
        }
        None => {
            for (mi, gi) in m.as_mut_slice().iter_mut().zip(g.as_slice()) {
                *mi = keep * *mi + beta * gi;
            }
        }
    }
    Ok(())
}

impl<'p, P: StochasticOracle + ?Sized> Optimizer<'p, P> {
    /// Draw `x_0` from the init stream and set `m_0` to the mean gradient
    /// over an initial batch of `init_batch` samples.
    pub fn new(problem: &'p P, config: OptimizerConfig, seed: u64) -> Result<Self> {
        let root = RngState::new(seed);
        let mut init = root.split(Consumer::Init).rng();
        let x0 = problem.initial_point(&mut init);
        Self::with_start(problem, config, root, x0)
    }

    /// Like [`Optimizer::new`] but from a caller-chosen `x_0`.
    pub fn with_start(problem: &'p P, config: OptimizerConfig, root: RngState, x0: ParamVector) -> Result<Self> {
        config.validate()?;
        x0.check_layout_is(problem.layout())?;
        let mut streams = Streams::new(root);
        // an initial batch covering the whole finite sum is taken as one full pass
        let batch = match problem.dataset_size() {
            Some(n) if config.init_batch >= n => all_indices(n),
            size => sample_batch(config.init_batch, size, &mut streams.batch),
        };
        let eval = joint_eval(problem, &x0, None, &batch, config.hvp_strategy, &mut streams.noise)?;
        let radius_bound = if config.method.is_frank_wolfe() {
            let r = config.geometry.norm(&x0)?;
            check_radius(r, config.geometry.rho())?;
            Some(r)
        } else {
            None
        };
        let state = OptimizerState {
            x: x0,
            m: eval.gradient,
            t: 0,
            last_direction: None,
            pending: None,
            radius_bound,
            streams,
        };
        Ok(Optimizer { problem, config, state })
    }

    /// Resume from a snapshot.
    pub fn from_state(problem: &'p P, config: OptimizerConfig, state: OptimizerState) -> Result<Self> {
        config.validate()?;
        state.x.check_layout_is(problem.layout())?;
        Ok(Optimizer { problem, config, state })
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut OptimizerState {
        &mut self.state
    }

    pub fn into_state(self) -> OptimizerState {
        self.state
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    pub fn problem(&self) -> &P {
        self.problem
    }

    /// LMO direction for the current momentum, keyed on the step counter so
    /// power-iteration start vectors do not depend on evaluation calls.
    fn lmo_direction(&self) -> Result<(ParamVector, bool, bool)> {
        let mut power = self.state.streams.power.fork(self.state.t).rng();
        let res = self.config.geometry.lmo(&self.state.m, &mut power)?;
        Ok((res.direction, res.degenerate, res.converged))
    }

    /// Search direction of the unconstrained methods.
    fn descent_direction(&self) -> Result<(ParamVector, bool, bool)> {
        if self.config.plain_step {
            let d = self.state.m.scaled(-1.0);
            let degenerate = d.is_zero();
            return Ok((d, degenerate, true));
        }
        let (d, degenerate, converged) = self.lmo_direction()?;
        Ok((if degenerate { ParamVector::zeros(self.problem.layout()) } else { d }, degenerate, converged))
    }

    /// Frank–Wolfe direction `v - x`; zero when the LMO is degenerate.
    fn frank_wolfe_direction(&self) -> Result<(ParamVector, bool, bool)> {
        let (v, degenerate, converged) = self.lmo_direction()?;
        if degenerate {
            return Ok((ParamVector::zeros(self.problem.layout()), true, converged));
        }
        Ok((v.sub(&self.state.x)?, false, converged))
    }

    fn next_batch(&mut self) -> Vec<usize> {
        sample_batch(self.config.batch_size, self.problem.dataset_size(), &mut self.state.streams.batch)
    }

    /// One iteration. On error the state is left at the last good iterate.
    pub fn step(&mut self) -> Result<StepRecord> {
        let t = self.state.t;
        let eta = self.config.eta.at(t);
        let beta = self.config.beta;
        let method = self.config.method;
        let strategy = self.config.hvp_strategy;

        let (d, degenerate, lmo_converged) = if method.is_frank_wolfe() {
            self.frank_wolfe_direction()?
        } else {
            self.descent_direction()?
        };

        // step length and Stein weight
        let sample = match method {
            Method::RanSomE => StepDistribution::exponential(eta)?.sample(&mut self.state.streams.step),
            Method::RanSomB => StepDistribution::beta(eta)?.sample(&mut self.state.streams.step),
            Method::SgdM if self.config.random_steps => {
                StepDistribution::exponential(eta)?.sample(&mut self.state.streams.step)
            }
            _ => StepSample { s: eta, w: 0.0, eta },
        };

        let mut x_new = self.state.x.clone();
        x_new.axpy(sample.s, &d)?;
        x_new.ensure_finite("iterate")?;

        let radius_bound = match self.state.radius_bound {
            Some(r) => {
                let next = (1.0 - sample.s) * r + sample.s * self.config.geometry.rho();
                check_radius(next, self.config.geometry.rho())?;
                Some(next)
            }
            None => None,
        };

        let batch = self.next_batch();
        let problem = self.problem;
        let (g_new, delta, batch_loss) = match method {
            Method::RanSomE | Method::RanSomB => {
                let eval = joint_eval(problem, &x_new, Some(&d), &batch, strategy, &mut self.state.streams.noise)?;
                let mut delta = eval.hvp.expect("direction was given");
                delta.scale(sample.w);
                (eval.gradient, Some(delta), eval.loss)
            }
            Method::SgdM | Method::SfwPolyak => {
                let eval = joint_eval(problem, &x_new, None, &batch, strategy, &mut self.state.streams.noise)?;
                (eval.gradient, None, eval.loss)
            }
            Method::Storm => {
                // one sample, one noise realization, two points
                let (loss, mut g_new, _) = clean_eval(problem, &x_new, None, &batch, strategy)?;
                let (_, mut g_old, _) = clean_eval(problem, &self.state.x, None, &batch, strategy)?;
                if let Some(noise) = problem.noise() {
                    let mut shared = ParamVector::zeros(problem.layout());
                    noise.perturb_gradient(&mut shared, batch.len(), &mut self.state.streams.noise);
                    g_new.axpy(1.0, &shared)?;
                    g_old.axpy(1.0, &shared)?;
                }
                let delta = g_new.sub(&g_old)?;
                (g_new, Some(delta), loss)
            }
            Method::SomClassic | Method::SfwSom => {
                let eval = joint_eval(problem, &x_new, None, &batch, strategy, &mut self.state.streams.noise)?;
                let step = d.scaled(sample.s);
                let lin = joint_eval(problem, &self.state.x, Some(&step), &batch, strategy, &mut self.state.streams.noise)?;
                (eval.gradient, lin.hvp, eval.loss)
            }
            Method::SomUnif => {
                let eval = joint_eval(problem, &x_new, None, &batch, strategy, &mut self.state.streams.noise)?;
                let u = self.state.streams.midpoint.uniform();
                let step = d.scaled(sample.s);
                let mut x_hat = self.state.x.clone();
                x_hat.axpy(u, &step)?;
                let mid_batch = match self.config.midpoint_batch {
                    MidpointBatch::Fresh => self.next_batch(),
                    MidpointBatch::Shared => batch.clone(),
                };
                let mid = joint_eval(problem, &x_hat, Some(&step), &mid_batch, strategy, &mut self.state.streams.noise)?;
                (eval.gradient, mid.hvp, eval.loss)
            }
        };

        let mix = match method {
            Method::Storm => self.config.storm_a.unwrap_or(beta),
            _ => beta,
        };
        let mut m_new = self.state.m.clone();
        momentum_update(&mut m_new, delta.as_ref(), &g_new, mix)?;
        m_new.ensure_finite("momentum")?;

        self.state.x = x_new;
        self.state.m = m_new;
        self.state.t = t + 1;
        self.state.last_direction = Some(d);
        self.state.pending = Some(sample);
        self.state.radius_bound = radius_bound;

        Ok(StepRecord {
            t: t + 1,
            s: sample.s,
            w: sample.w,
            eta,
            batch_loss,
            degenerate,
            lmo_converged,
        })
    }

    /// `‖m_t - ∇f(x_t)‖₂` using the noise-free full gradient.
    pub fn momentum_error(&self) -> Result<f64> {
        momentum_error(&self.state, self.problem)
    }

    /// Frank–Wolfe gap `⟨∇f(x), x - v⟩` with `v = LMO(∇f(x))`.
    pub fn frank_wolfe_gap(&self) -> Result<f64> {
        let g = self
            .problem
            .full_gradient(&self.state.x)
            .ok_or(Error::Unsupported("full gradient"))?;
        let mut power = self.state.streams.power.fork(u64::MAX - self.state.t).rng();
        frank_wolfe_gap(&self.config.geometry, &g, &self.state.x, &mut power)
    }

    /// Train loss, stationarity and test metric at the current iterate;
    /// momentum error too when `diagnostics` is set.
    pub fn evaluate(&self, diagnostics: bool) -> Result<Evaluation> {
        let x = &self.state.x;
        let train_loss = self.problem.full_loss(x);
        let stationarity = if self.config.method.is_frank_wolfe() {
            self.frank_wolfe_gap()?
        } else {
            self.problem
                .full_gradient(x)
                .ok_or(Error::Unsupported("full gradient"))?
                .norm_l2()
        };
        let momentum_error = if diagnostics { Some(self.momentum_error()?) } else { None };
        Ok(Evaluation { train_loss, stationarity, test_metric: self.problem.test_metric(x), momentum_error })
    }
}

pub fn momentum_error<P: StochasticOracle + ?Sized>(state: &OptimizerState, problem: &P) -> Result<f64> {
    let g = problem.full_gradient(&state.x).ok_or(Error::Unsupported("full gradient"))?;
    Ok(state.m.sub(&g)?.norm_l2())
}

pub fn frank_wolfe_gap(geometry: &Geometry, gradient: &ParamVector, x: &ParamVector, rng: &mut StreamRng) -> Result<f64> {
    let v = geometry.lmo(gradient, rng)?.direction;
    gradient.dot(&x.sub(&v)?)
}

fn check_radius(norm: f64, rho: f64) -> Result<()> {
    if norm > rho * (1.0 + FEASIBILITY_SLACK) || !norm.is_finite() {
        return Err(Error::Infeasible { norm, radius: rho });
    }
    Ok(())
}
