//! Randomized second-order momentum.
//!
//! Momentum methods accumulate gradients taken at past iterates, so on a
//! curved landscape the running average drifts away from the gradient at the
//! current point. This crate corrects that drift with a single
//! Hessian-vector product evaluated at the *next* iterate, made unbiased by
//! drawing the step length from a distribution whose survival function is
//! proportional to a simple weight times its density:
//!
//! * exponential steps (`s ~ Exp(1/eta)`, weight `eta`) for unconstrained
//!   problems, paired with a norm-ball linear minimization oracle;
//! * `Beta(1, K)` steps (weight `(1 - s) / K`) for Frank–Wolfe style
//!   constrained problems, which keep every iterate feasible.
//!
//! The crate is `no_std` (with `alloc`). All floating point math goes through
//! `libm` and all randomness through versioned ChaCha8 streams, so a run is a
//! pure function of its configuration and seed on every platform.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod error;
pub mod linalg;
pub mod lmo;
pub mod optim;
pub mod oracle;
pub mod param;
pub mod problems;
pub mod rng;
pub mod steps;

pub use error::{Error, Result};
pub use lmo::{Geometry, LmoResult};
pub use optim::{Method, Optimizer, OptimizerConfig, OptimizerState, StepRecord, StepSchedule};
pub use oracle::{joint_eval, HvpStrategy, OracleEval, StochasticOracle};
pub use param::{Layout, ParamVector, Shape};
pub use rng::{Consumer, RngState, StreamRng};
pub use steps::{StepDistribution, StepSample};
