//! Test objectives exposing [`StochasticOracle`](crate::oracle::StochasticOracle).

pub mod completion;
pub mod dataset;
pub mod mlp;
pub mod noise;
pub mod quadratic;

pub use completion::{MatrixCompletionProblem, Rating};
pub use dataset::DesignMatrix;
pub use mlp::MlpWelschProblem;
pub use noise::{inject_heavy_tail, NoiseKind, NoiseSpec, OracleNoise};
pub use quadratic::QuadraticProblem;
