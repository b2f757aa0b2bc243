#![allow(dead_code)]

use ransom_core::problems::completion::{MatrixCompletionProblem, Rating};
use ransom_core::problems::dataset::DesignMatrix;
use ransom_core::problems::mlp::MlpWelschProblem;
use ransom_core::problems::noise::{NoiseSpec, OracleNoise};
use ransom_core::problems::quadratic::QuadraticProblem;
use ransom_core::rng::{Consumer, RngState, StreamRng};
use ransom_core::{ParamVector, StochasticOracle};

pub fn stream(seed: u64, key: u64) -> StreamRng {
    RngState::new(seed).split(Consumer::Init).fork(key).rng()
}

pub fn quadratic(dim: usize, mu: f64, l: f64, noise: OracleNoise) -> QuadraticProblem {
    QuadraticProblem::random(dim, mu, l, noise, &mut stream(11, 0)).unwrap()
}

pub fn gaussian_noise(sigma_g: f64, sigma_h: f64) -> OracleNoise {
    OracleNoise {
        gradient: (sigma_g > 0.0).then(|| NoiseSpec::gaussian(sigma_g)),
        hvp: (sigma_h > 0.0).then(|| NoiseSpec::gaussian(sigma_h)),
    }
}

/// Small tanh network on random ±1 data.
pub fn mlp(sizes: &[usize], n: usize, lambda: f64) -> MlpWelschProblem {
    let mut r = stream(12, 0);
    let f = sizes[0];
    let values = (0..n * f).map(|_| r.normal()).collect();
    let labels = (0..n).map(|_| r.sign()).collect();
    let train = DesignMatrix::new(f, values, labels).unwrap();
    MlpWelschProblem::new(sizes.to_vec(), lambda, train, None).unwrap()
}

/// Rank-2 matrix with about half the entries observed.
pub fn completion(rows: usize, cols: usize) -> MatrixCompletionProblem {
    let mut r = stream(13, 0);
    let u: Vec<f64> = (0..rows * 2).map(|_| r.normal()).collect();
    let v: Vec<f64> = (0..cols * 2).map(|_| r.normal()).collect();
    let mut train = Vec::new();
    let mut test = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let value = u[2 * i] * v[2 * j] + u[2 * i + 1] * v[2 * j + 1] + 0.05 * r.normal();
            let slot = r.uniform();
            if slot < 0.4 {
                train.push(Rating { row: i, col: j, value });
            } else if slot < 0.5 {
                test.push(Rating { row: i, col: j, value });
            }
        }
    }
    MatrixCompletionProblem::centered(rows, cols, train, test)
}

pub fn random_point<P: StochasticOracle + ?Sized>(p: &P, scale: f64, r: &mut StreamRng) -> ParamVector {
    let data = (0..p.layout().len()).map(|_| scale * r.normal()).collect();
    ParamVector::from_vec(p.layout(), data).unwrap()
}

pub fn random_batch(n: usize, size: usize, r: &mut StreamRng) -> Vec<usize> {
    (0..size).map(|_| r.index(n)).collect()
}

pub fn rel_err(a: &ParamVector, b: &ParamVector) -> f64 {
    a.sub(b).unwrap().norm_l2() / b.norm_l2().max(1e-300)
}
