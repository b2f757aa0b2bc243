//! Matrix completion: mean squared error over observed entries of a dense
//! iterate `X`, to be optimized over a nuclear-norm ball.
//!
//! Predictions are `offset + X_ij`; with `offset` set to the training mean the
//! origin of the ball predicts the mean rating.

use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::oracle::StochasticOracle;
use crate::param::{Layout, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub row: usize,
    pub col: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct MatrixCompletionProblem {
    rows: usize,
    cols: usize,
    train: Vec<Rating>,
    test: Vec<Rating>,
    offset: f64,
    layout: Arc<Layout>,
}

impl MatrixCompletionProblem {
    pub fn new(rows: usize, cols: usize, train: Vec<Rating>, test: Vec<Rating>, offset: f64) -> Self {
        assert!(
            train.iter().chain(&test).all(|r| r.row < rows && r.col < cols),
            "rating outside {rows}x{cols}"
        );
        MatrixCompletionProblem { rows, cols, train, test, offset, layout: Layout::matrix(rows, cols) }
    }

    /// Centers predictions on the training mean.
    pub fn centered(rows: usize, cols: usize, train: Vec<Rating>, test: Vec<Rating>) -> Self {
        let offset = if train.is_empty() {
            0.0
        } else {
            train.iter().map(|r| r.value).sum::<f64>() / train.len() as f64
        };
        Self::new(rows, cols, train, test, offset)
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn train(&self) -> &[Rating] {
        &self.train
    }

    pub fn test(&self) -> &[Rating] {
        &self.test
    }

    fn residual(&self, x: &ParamVector, r: &Rating) -> f64 {
        self.offset + x.as_slice()[r.row * self.cols + r.col] - r.value
    }

    /// Root mean squared error over an arbitrary rating list.
    pub fn rmse(&self, x: &ParamVector, ratings: &[Rating]) -> f64 {
        if ratings.is_empty() {
            return 0.0;
        }
        let sse: f64 = ratings.iter().map(|r| { let e = self.residual(x, r); e * e }).sum();
        libm::sqrt(sse / ratings.len() as f64)
    }
}

impl StochasticOracle for MatrixCompletionProblem {
    fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    fn dataset_size(&self) -> Option<usize> {
        Some(self.train.len())
    }

    fn loss(&self, x: &ParamVector, batch: &[usize]) -> f64 {
        let sse: f64 = batch.iter().map(|&i| { let e = self.residual(x, &self.train[i]); e * e }).sum();
        sse / batch.len() as f64
    }

    fn gradient(&self, x: &ParamVector, batch: &[usize]) -> ParamVector {
        let mut g = ParamVector::zeros(&self.layout);
        let scale = 2.0 / batch.len() as f64;
        let out = g.as_mut_slice();
        for &i in batch {
            let r = &self.train[i];
            out[r.row * self.cols + r.col] += scale * self.residual(x, r);
        }
        g
    }

    fn hvp(&self, _x: &ParamVector, d: &ParamVector, batch: &[usize]) -> ParamVector {
        let mut h = ParamVector::zeros(&self.layout);
        let scale = 2.0 / batch.len() as f64;
        let src = d.as_slice();
        let out = h.as_mut_slice();
        for &i in batch {
            let k = self.train[i].row * self.cols + self.train[i].col;
            out[k] += scale * src[k];
        }
        h
    }

    fn test_metric(&self, x: &ParamVector) -> Option<f64> {
        let set = if self.test.is_empty() { &self.train } else { &self.test };
        Some(self.rmse(x, set))
    }
}
