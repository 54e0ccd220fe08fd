use ndarray::Array2;

use crate::error::{CoreError, Result};

/// `sigma(t+1) = (1 - zeta) sigma(t) + zeta u1(t) u2(t)`, seeded with the mean
/// product over the first `init_window` samples.
pub fn recursive_covariance(
    u1: &[f64],
    u2: &[f64],
    forgetting: f64,
    init_window: usize,
) -> Result<Vec<f64>> {
    if !(forgetting > 0.0 && forgetting < 1.0) {
        return Err(CoreError::InvalidForgetting(forgetting));
    }
    if u1.len() != u2.len() {
        return Err(CoreError::Shape(format!(
            "series lengths differ: {} vs {}",
            u1.len(),
            u2.len()
        )));
    }
    if init_window == 0 || init_window > u1.len() {
        return Err(CoreError::InsufficientData {
            needed: init_window.max(1),
            got: u1.len(),
        });
    }
    let n = u1.len();
    let mut out = Vec::with_capacity(n);
    let seed = u1[..init_window]
        .iter()
        .zip(&u2[..init_window])
        .map(|(a, b)| a * b)
        .sum::<f64>()
        / init_window as f64;
    out.push(seed);
    for t in 0..n - 1 {
        let next = (1.0 - forgetting) * out[t] + forgetting * u1[t] * u2[t];
        out.push(next);
    }
    Ok(out)
}

/// Time-varying covariance matrix of a set of residual series.
#[derive(Debug, Clone)]
pub struct RecursiveCovariance {
    pub forgetting: f64,
    pub init_window: usize,
    dim: usize,
    len: usize,
    /// Row-major `dim x dim` block per sample.
    values: Vec<f64>,
}

impl RecursiveCovariance {
    /// Runs the recursion over `series[..][start..]`; samples before `start`
    /// repeat the seed value so the trace covers the full axis.
    pub fn from_series(
        series: &[&[f64]],
        start: usize,
        forgetting: f64,
        init_window: usize,
    ) -> Result<Self> {
        let dim = series.len();
        if dim == 0 {
            return Err(CoreError::Shape("no series".into()));
        }
        let len = series[0].len();
        if series.iter().any(|s| s.len() != len) {
            return Err(CoreError::Shape("residual series differ in length".into()));
        }
        if start >= len {
            return Err(CoreError::InsufficientData { needed: start, got: len });
        }
        let mut values = vec![0.0; len * dim * dim];
        for i in 0..dim {
            for j in i..dim {
                let trace = recursive_covariance(
                    &series[i][start..],
                    &series[j][start..],
                    forgetting,
                    init_window,
                )?;
                for t in 0..len {
                    let v = trace[t.saturating_sub(start)];
                    values[(t * dim + i) * dim + j] = v;
                    values[(t * dim + j) * dim + i] = v;
                }
            }
        }
        Ok(RecursiveCovariance {
            forgetting,
            init_window,
            dim,
            len,
            values,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn entry(&self, t: usize, i: usize, j: usize) -> f64 {
        self.values[(t * self.dim + i) * self.dim + j]
    }

    pub fn matrix(&self, t: usize) -> Array2<f64> {
        Array2::from_shape_fn((self.dim, self.dim), |(i, j)| self.entry(t, i, j))
    }

    pub fn trace(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.len).map(|t| self.entry(t, i, j)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series_is_a_fixed_point() {
        let c = 1.7;
        let u = vec![c; 300];
        let s = recursive_covariance(&u, &u, 0.02, 50).unwrap();
        assert!(s.iter().all(|&v| (v - c * c).abs() < 1e-12));
    }

    #[test]
    fn recursion_holds_exactly() {
        let u1: Vec<f64> = (0..100).map(|i| (i as f64 * 0.3).sin()).collect();
        let u2: Vec<f64> = (0..100).map(|i| (i as f64 * 0.7).cos()).collect();
        let z = 0.05;
        let s = recursive_covariance(&u1, &u2, z, 10).unwrap();
        for t in 0..99 {
            assert_eq!(s[t + 1], (1.0 - z) * s[t] + z * u1[t] * u2[t]);
        }
    }

    #[test]
    fn forgetting_must_be_inside_unit_interval() {
        let u = vec![1.0; 10];
        for z in [0.0, 1.0, -0.1, 1.5] {
            assert!(matches!(
                recursive_covariance(&u, &u, z, 5),
                Err(CoreError::InvalidForgetting(_))
            ));
        }
    }

    #[test]
    fn matrix_trace_is_symmetric_and_padded() {
        let a: Vec<f64> = (0..60).map(|i| (i as f64).sin()).collect();
        let b: Vec<f64> = (0..60).map(|i| (i as f64 * 1.3).cos()).collect();
        let cov = RecursiveCovariance::from_series(&[&a, &b], 3, 0.1, 10).unwrap();
        assert_eq!(cov.len(), 60);
        for t in 0..60 {
            assert_eq!(cov.entry(t, 0, 1), cov.entry(t, 1, 0));
            assert!(cov.entry(t, 0, 0) >= 0.0);
        }
        assert_eq!(cov.entry(0, 0, 1), cov.entry(3, 0, 1));
    }
}
