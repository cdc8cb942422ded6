use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::column_norms;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Census {
    pub threshold: f64,
    pub count: usize,
    pub indices: Vec<usize>,
    pub max_norm: f64,
}

/// Columns whose norm is at least `threshold` times the largest column norm.
pub fn active_column_census(u: &DMatrix<f64>, threshold: f64) -> Result<Census> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "census threshold {threshold} outside (0, 1)"
        )));
    }
    let norms = column_norms(u);
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    if max_norm == 0.0 {
        return Err(Error::InvalidArgument("census of an all-zero factor".into()));
    }
    let indices: Vec<usize> = norms
        .iter()
        .enumerate()
        .filter(|(_, &n)| n >= threshold * max_norm)
        .map(|(i, _)| i)
        .collect();
    Ok(Census {
        threshold,
        count: indices.len(),
        indices,
        max_norm,
    })
}

/// `(x, fraction of columns with norm ≥ x·max)` on `x = 0, 1/steps, …, 1`.
pub fn fraction_above_curve(u: &DMatrix<f64>, steps: usize) -> Vec<(f64, f64)> {
    let norms = column_norms(u);
    let max_norm = norms.iter().copied().fold(0.0, f64::max);
    let k = norms.len() as f64;
    (0..=steps)
        .map(|i| {
            let x = i as f64 / steps as f64;
            let count = norms.iter().filter(|&&n| n >= x * max_norm).count();
            (x, count as f64 / k)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equal_columns_all_active() {
        let u = DMatrix::from_element(3, 4, 0.5);
        assert_eq!(active_column_census(&u, 0.99).unwrap().count, 4);
    }

    #[test]
    fn single_nonzero_column() {
        let mut u = DMatrix::zeros(3, 4);
        u[(1, 2)] = 2.0;
        let c = active_column_census(&u, 0.99).unwrap();
        assert_eq!(c.count, 1);
        assert_eq!(c.indices, vec![2]);
    }

    #[test]
    fn zero_factor_rejected() {
        assert!(active_column_census(&DMatrix::zeros(2, 2), 0.5).is_err());
    }

    #[test]
    fn curve_endpoints() {
        let u = DMatrix::from_column_slice(1, 4, &[1.0, 0.5, 0.25, 0.0]);
        let curve = fraction_above_curve(&u, 20);
        assert_eq!(curve.len(), 21);
        assert_eq!(curve[0], (0.0, 1.0));
        assert_eq!(curve[20], (1.0, 0.25));
        assert_eq!(curve[10].1, 0.5);
    }
}
