//! Binary classifier: tanh MLP, logistic loss, Welsch penalty.
//!
//! `L(w) = mean_i softplus(-y_i z_i(w)) + λ Σ_j w_j² / (1 + w_j²)`
//!
//! The penalty is bounded by `λ` per parameter and non-convex, which makes
//! the landscape curved in the way momentum correction cares about. The
//! exact HVP is computed forward-over-reverse: a directional (R-operator)
//! forward pass carries `∂z/∂w · d` alongside the activations, and the
//! backward recurrences are differentiated along the same direction.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{invalid, Result};
use crate::oracle::StochasticOracle;
use crate::param::{Layout, ParamVector, Shape};
use crate::problems::dataset::DesignMatrix;
use crate::rng::StreamRng;

#[derive(Debug, Clone)]
pub struct MlpWelschProblem {
    sizes: Vec<usize>,
    lambda: f64,
    train: DesignMatrix,
    test: Option<DesignMatrix>,
    layout: Arc<Layout>,
}

/// `(λ Σ w²/(1+w²), λ 2w/(1+w²)²)` for every weight.
pub fn welsch_penalty(weights: &[f64], lambda: f64) -> (f64, Vec<f64>) {
    let mut value = 0.0;
    let grad = weights
        .iter()
        .map(|&w| {
            let q = 1.0 + w * w;
            // 1 - 1/q keeps large weights strictly below the bound
            value += if w * w <= 1.0 { w * w / q } else { 1.0 - 1.0 / q };
            lambda * 2.0 * w / (q * q)
        })
        .collect();
    (lambda * value, grad)
}

/// Diagonal of the penalty Hessian, `λ (2 - 6w²) / (1 + w²)³`.
pub fn welsch_hessian_diag(weights: &[f64], lambda: f64) -> Vec<f64> {
    weights
        .iter()
        .map(|&w| {
            let q = 1.0 + w * w;
            lambda * (2.0 - 6.0 * w * w) / (q * q * q)
        })
        .collect()
}

fn softplus(t: f64) -> f64 {
    t.max(0.0) + libm::log1p(libm::exp(-libm::fabs(t)))
}

fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + libm::exp(-t))
    } else {
        let e = libm::exp(t);
        e / (1.0 + e)
    }
}

impl MlpWelschProblem {
    /// `sizes` runs from input width to a single output logit, e.g.
    /// `[60, 32, 16, 1]`. Hidden layers use tanh.
    pub fn new(sizes: Vec<usize>, lambda: f64, train: DesignMatrix, test: Option<DesignMatrix>) -> Result<Self> {
        if sizes.len() < 2 || *sizes.last().unwrap() != 1 {
            return Err(invalid("layer sizes must end in a single output"));
        }
        if sizes[0] != train.n_features {
            return Err(invalid(format!(
                "input width {} does not match {} features",
                sizes[0], train.n_features
            )));
        }
        if let Some(t) = &test {
            if t.n_features != train.n_features {
                return Err(invalid("train and test feature counts differ"));
            }
        }
        if !(lambda >= 0.0) {
            return Err(invalid("welsch weight must be nonnegative"));
        }
        let mut blocks = Vec::new();
        for l in 0..sizes.len() - 1 {
            blocks.push((format!("W{}", l + 1), Shape::Matrix { rows: sizes[l + 1], cols: sizes[l] }));
            blocks.push((format!("b{}", l + 1), Shape::Vector(sizes[l + 1])));
        }
        Ok(MlpWelschProblem { sizes, lambda, train, test, layout: Layout::new(blocks) })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn train(&self) -> &DesignMatrix {
        &self.train
    }

    fn layers(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Logit for one input row.
    pub fn logit(&self, x: &ParamVector, input: &[f64]) -> f64 {
        let mut act = input.to_vec();
        for l in 0..self.layers() {
            let (w, b) = (x.block(2 * l), x.block(2 * l + 1));
            let n_in = self.sizes[l];
            let mut next: Vec<f64> = (0..self.sizes[l + 1])
                .map(|o| b[o] + w[o * n_in..(o + 1) * n_in].iter().zip(&act).map(|(p, q)| p * q).sum::<f64>())
                .collect();
            if l + 1 < self.layers() {
                next.iter_mut().for_each(|z| *z = libm::tanh(*z));
            }
            act = next;
        }
        act[0]
    }

    /// Fraction of rows whose logit sign matches the label (logit 0 ↦ +1).
    pub fn accuracy(&self, x: &ParamVector, data: &DesignMatrix) -> f64 {
        if data.is_empty() {
            return 0.0;
        }
        let hits = (0..data.n_samples)
            .filter(|&i| {
                let pred = if self.logit(x, data.row(i)) >= 0.0 { 1.0 } else { -1.0 };
                pred == data.labels[i]
            })
            .count();
        hits as f64 / data.n_samples as f64
    }

    /// Mean logistic loss and its gradient (and HVP along `dir`) over the
    /// batch, without the penalty.
    fn data_pass(
        &self,
        x: &ParamVector,
        dir: Option<&ParamVector>,
        batch: &[usize],
        grad: &mut [f64],
        mut hvp: Option<&mut [f64]>,
    ) -> f64 {
        let nl = self.layers();
        let blocks = self.layout.blocks();
        let params = x.as_slice();
        let dparams = dir.map(|d| d.as_slice());
        let mut acts: Vec<Vec<f64>> = self.sizes.iter().map(|&n| vec![0.0; n]).collect();
        let mut racts = acts.clone();
        let mut delta = vec![0.0; 1];
        let mut rdelta = vec![0.0; 1];
        let mut loss = 0.0;

        for &i in batch {
            let y = self.train.labels[i];
            acts[0].copy_from_slice(self.train.row(i));
            let mut logit = 0.0;
            let mut rlogit = 0.0;
            for l in 0..nl {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let (wr, br) = (blocks[2 * l].range(), blocks[2 * l + 1].range());
                let (w, b) = (&params[wr.clone()], &params[br.clone()]);
                let (lower, upper) = acts.split_at_mut(l + 1);
                let (rlower, rupper) = racts.split_at_mut(l + 1);
                let a_in = &lower[l];
                let ra_in = &rlower[l];
                for o in 0..n_out {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    let z = b[o] + row.iter().zip(a_in).map(|(p, q)| p * q).sum::<f64>();
                    let rz = match dparams {
                        Some(dp) => {
                            let (dw, db) = (&dp[wr.clone()], &dp[br.clone()]);
                            db[o]
                                + dw[o * n_in..(o + 1) * n_in].iter().zip(a_in).map(|(p, q)| p * q).sum::<f64>()
                                + row.iter().zip(ra_in).map(|(p, q)| p * q).sum::<f64>()
                        }
                        None => 0.0,
                    };
                    if l + 1 < nl {
                        let a = libm::tanh(z);
                        upper[0][o] = a;
                        rupper[0][o] = (1.0 - a * a) * rz;
                    } else {
                        logit = z;
                        rlogit = rz;
                    }
                }
            }

            let t = -y * logit;
            loss += softplus(t);
            let sig = sigmoid(t);
            delta.clear();
            delta.push(-y * sig);
            rdelta.clear();
            rdelta.push(sig * (1.0 - sig) * rlogit);

            for l in (0..nl).rev() {
                let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
                let (wr, br) = (blocks[2 * l].range(), blocks[2 * l + 1].range());
                let a_in = &acts[l];
                let ra_in = &racts[l];
                for o in 0..n_out {
                    let g_row = &mut grad[wr.start + o * n_in..wr.start + (o + 1) * n_in];
                    for (g, a) in g_row.iter_mut().zip(a_in) {
                        *g += delta[o] * a;
                    }
                    grad[br.start + o] += delta[o];
                }
                if let Some(h) = hvp.as_deref_mut() {
                    for o in 0..n_out {
                        let h_row = &mut h[wr.start + o * n_in..wr.start + (o + 1) * n_in];
                        for ((hv, a), ra) in h_row.iter_mut().zip(a_in).zip(ra_in) {
                            *hv += rdelta[o] * a + delta[o] * ra;
                        }
                        h[br.start + o] += rdelta[o];
                    }
                }
                if l == 0 {
                    break;
                }
                let w = &params[wr.clone()];
                let mut back = vec![0.0; n_in];
                let mut rback = vec![0.0; n_in];
                for o in 0..n_out {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for j in 0..n_in {
                        back[j] += row[j] * delta[o];
                    }
                    if let Some(dp) = dparams {
                        let drow = &dp[wr.start + o * n_in..wr.start + (o + 1) * n_in];
                        for j in 0..n_in {
                            rback[j] += drow[j] * delta[o] + row[j] * rdelta[o];
                        }
                    }
                }
                delta.clear();
                rdelta.clear();
                for j in 0..n_in {
                    let a = a_in[j];
                    let slope = 1.0 - a * a;
                    delta.push(back[j] * slope);
                    rdelta.push(rback[j] * slope - 2.0 * a * ra_in[j] * back[j]);
                }
            }
        }
        loss
    }

    fn penalized(
        &self,
        x: &ParamVector,
        dir: Option<&ParamVector>,
        batch: &[usize],
    ) -> (f64, ParamVector, Option<ParamVector>) {
        let mut grad = ParamVector::zeros(&self.layout);
        let mut hvp = dir.map(|_| ParamVector::zeros(&self.layout));
        let data_loss = self.data_pass(x, dir, batch, grad.as_mut_slice(), hvp.as_mut().map(|h| h.as_mut_slice()));
        let inv = 1.0 / batch.len() as f64;
        grad.scale(inv);
        let (penalty, pgrad) = welsch_penalty(x.as_slice(), self.lambda);
        for (g, p) in grad.as_mut_slice().iter_mut().zip(&pgrad) {
            *g += p;
        }
        if let (Some(h), Some(d)) = (hvp.as_mut(), dir) {
            h.scale(inv);
            let diag = welsch_hessian_diag(x.as_slice(), self.lambda);
            for ((hv, dv), c) in h.as_mut_slice().iter_mut().zip(d.as_slice()).zip(&diag) {
                *hv += c * dv;
            }
        }
        (data_loss * inv + penalty, grad, hvp)
    }
}

impl StochasticOracle for MlpWelschProblem {
    fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn dataset_size(&self) -> Option<usize> {
        Some(self.train.n_samples)
    }

    fn loss(&self, x: &ParamVector, batch: &[usize]) -> f64 {
        let data: f64 = batch.iter().map(|&i| softplus(-self.train.labels[i] * self.logit(x, self.train.row(i)))).sum();
        data / batch.len() as f64 + welsch_penalty(x.as_slice(), self.lambda).0
    }

    fn gradient(&self, x: &ParamVector, batch: &[usize]) -> ParamVector {
        self.penalized(x, None, batch).1
    }

    fn hvp(&self, x: &ParamVector, d: &ParamVector, batch: &[usize]) -> ParamVector {
        self.penalized(x, Some(d), batch).2.expect("direction given")
    }

    fn loss_gradient_hvp(&self, x: &ParamVector, d: &ParamVector, batch: &[usize]) -> (f64, ParamVector, ParamVector) {
        let (loss, g, h) = self.penalized(x, Some(d), batch);
        (loss, g, h.expect("direction given"))
    }

    fn test_metric(&self, x: &ParamVector) -> Option<f64> {
        Some(self.accuracy(x, self.test.as_ref().unwrap_or(&self.train)))
    }

    /// Glorot-uniform weights, zero biases.
    fn initial_point(&self, rng: &mut StreamRng) -> ParamVector {
        let mut x = ParamVector::zeros(&self.layout);
        for l in 0..self.layers() {
            let limit = libm::sqrt(6.0 / (self.sizes[l] + self.sizes[l + 1]) as f64);
            for w in x.block_mut(2 * l) {
                *w = limit * (2.0 * rng.uniform() - 1.0);
            }
        }
        x
    }
}
