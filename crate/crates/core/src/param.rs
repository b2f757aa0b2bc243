//! Flat parameter storage with named, optionally matrix-shaped blocks.
//!
//! Every iterate, momentum, direction and gradient in the crate is a
//! [`ParamVector`]: one contiguous `Vec<f64>` plus a shared [`Layout`]
//! describing how the flat buffer splits into blocks. Matrix blocks are
//! stored row-major so the spectral and nuclear LMOs can view them in place.

use alloc::string::{String, ToString};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Vector(usize),
    Matrix { rows: usize, cols: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Vector(n) => n,
            Shape::Matrix { rows, cols } => rows * cols,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub name: String,
    pub shape: Shape,
    pub offset: usize,
}

impl Block {
    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.shape.len()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    blocks: Vec<Block>,
    len: usize,
}

impl Layout {
    pub fn new<I, S>(blocks: I) -> Arc<Self>
    where
        I: IntoIterator<Item = (S, Shape)>,
        S: Into<String>,
    {
        let mut offset = 0;
        let blocks = blocks
            .into_iter()
            .map(|(name, shape)| {
                let block = Block { name: name.into(), shape, offset };
                offset += shape.len();
                block
            })
            .collect();
        Arc::new(Layout { blocks, len: offset })
    }

    /// A single vector block named `x`.
    pub fn vector(n: usize) -> Arc<Self> {
        Self::new([("x", Shape::Vector(n))])
    }

    /// A single matrix block named `X`.
    pub fn matrix(rows: usize, cols: usize) -> Arc<Self> {
        Self::new([("X", Shape::Matrix { rows, cols })])
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn has_matrix(&self) -> bool {
        self.blocks.iter().any(|b| matches!(b.shape, Shape::Matrix { .. }))
    }

    /// Name of the block holding flat index `i`.
    pub fn block_of(&self, i: usize) -> Option<&Block> {
        self.blocks.iter().find(|b| b.range().contains(&i))
    }
}

/// Read-only row-major view of one matrix block.
#[derive(Debug, Clone, Copy)]
pub struct MatRef<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

impl MatRef<'_> {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector {
    layout: Arc<Layout>,
    data: Vec<f64>,
}

impl ParamVector {
    pub fn zeros(layout: &Arc<Layout>) -> Self {
        ParamVector { layout: Arc::clone(layout), data: vec![0.0; layout.len()] }
    }

    pub fn from_vec(layout: &Arc<Layout>, data: Vec<f64>) -> Result<Self> {
        if data.len() != layout.len() {
            return Err(Error::LayoutMismatch { expected: layout.len(), found: data.len() });
        }
        Ok(ParamVector { layout: Arc::clone(layout), data })
    }

    /// Plain vector with a fresh single-block layout.
    pub fn from_slice(values: &[f64]) -> Self {
        ParamVector { layout: Layout::vector(values.len()), data: values.to_vec() }
    }

    pub fn layout(&self) -> &Arc<Layout> {
        &self.layout
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_layout(&self, other: &ParamVector) -> bool {
        Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout
    }

    pub fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if self.same_layout(other) {
            Ok(())
        } else {
            Err(Error::LayoutMismatch { expected: self.len(), found: other.len() })
        }
    }

    pub fn check_layout_is(&self, layout: &Arc<Layout>) -> Result<()> {
        if Arc::ptr_eq(&self.layout, layout) || *self.layout == **layout {
            Ok(())
        } else {
            Err(Error::LayoutMismatch { expected: layout.len(), found: self.len() })
        }
    }

    pub fn block(&self, index: usize) -> &[f64] {
        &self.data[self.layout.blocks[index].range()]
    }

    pub fn block_mut(&mut self, index: usize) -> &mut [f64] {
        let range = self.layout.blocks[index].range();
        &mut self.data[range]
    }

    pub fn matrix(&self, index: usize) -> Option<MatRef<'_>> {
        match self.layout.blocks[index].shape {
            Shape::Matrix { rows, cols } => Some(MatRef { rows, cols, data: self.block(index) }),
            Shape::Vector(_) => None,
        }
    }

    /// Euclidean inner product with Neumaier-compensated left-to-right
    /// accumulation.
    pub fn dot(&self, other: &ParamVector) -> Result<f64> {
        self.check_layout(other)?;
        Ok(dot_slices(&self.data, &other.data))
    }

    /// `(l2, linf)`.
    pub fn norms(&self) -> (f64, f64) {
        (self.norm_l2(), self.norm_linf())
    }

    pub fn norm_l2(&self) -> f64 {
        libm::sqrt(dot_slices(&self.data, &self.data))
    }

    pub fn norm_linf(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(libm::fabs(*v)))
    }

    /// `self += alpha * other`.
    pub fn axpy(&mut self, alpha: f64, other: &ParamVector) -> Result<()> {
        self.check_layout(other)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, alpha: f64) {
        for a in &mut self.data {
            *a *= alpha;
        }
    }

    pub fn scaled(&self, alpha: f64) -> ParamVector {
        let mut out = self.clone();
        out.scale(alpha);
        out
    }

    /// `self - other` as a new vector.
    pub fn sub(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_layout(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(ParamVector { layout: Arc::clone(&self.layout), data })
    }

    pub fn add(&self, other: &ParamVector) -> Result<ParamVector> {
        self.check_layout(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(ParamVector { layout: Arc::clone(&self.layout), data })
    }

    pub fn fill(&mut self, value: f64) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| *v == 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Errors with the name of the first block holding a NaN or infinity.
    pub fn ensure_finite(&self, what: &'static str) -> Result<()> {
        match self.data.iter().position(|v| !v.is_finite()) {
            None => Ok(()),
            Some(i) => {
                let block = self
                    .layout
                    .block_of(i)
                    .map(|b| b.name.clone())
                    .unwrap_or_else(|| "?".to_string());
                Err(Error::NonFinite { block, what })
            }
        }
    }
}

/// Compensated dot product of two equal-length slices.
pub fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut sum = 0.0;
    let mut comp = 0.0;
    for (x, y) in a.iter().zip(b) {
        let term = x * y;
        let t = sum + term;
        if libm::fabs(sum) >= libm::fabs(term) {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
