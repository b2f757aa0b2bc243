use alloc::format;
use alloc::vec::Vec;

use crate::error::{invalid, Result};

/// Dense feature matrix (row-major) with ±1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    pub n_samples: usize,
    pub n_features: usize,
    pub values: Vec<f64>,
    pub labels: Vec<f64>,
}

impl DesignMatrix {
    pub fn new(n_features: usize, values: Vec<f64>, labels: Vec<f64>) -> Result<Self> {
        let n_samples = labels.len();
        if values.len() != n_samples * n_features {
            return Err(invalid(format!(
                "design matrix has {} values, expected {} x {}",
                values.len(),
                n_samples,
                n_features
            )));
        }
        if let Some(bad) = labels.iter().find(|l| **l != 1.0 && **l != -1.0) {
            return Err(invalid(format!("labels must be +1 or -1, found {bad}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("feature values must be finite"));
        }
        Ok(DesignMatrix { n_samples, n_features, values, labels })
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_features..(i + 1) * self.n_features]
    }

    pub fn is_empty(&self) -> bool {
        self.n_samples == 0
    }

    /// Rows picked by index, in the given order.
    pub fn select(&self, rows: &[usize]) -> DesignMatrix {
        let mut values = Vec::with_capacity(rows.len() * self.n_features);
        let mut labels = Vec::with_capacity(rows.len());
        for &r in rows {
            values.extend_from_slice(self.row(r));
            labels.push(self.labels[r]);
        }
        DesignMatrix { n_samples: rows.len(), n_features: self.n_features, values, labels }
    }
}
