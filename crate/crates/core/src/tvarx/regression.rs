use ndarray::{Array2, ArrayView2, ShapeBuilder};

use crate::error::{CoreError, Result};
use crate::multiwavelet::MultiwaveletDictionary;

/// Expanded, time-invariant regression `X = Psi * theta + e`.
///
/// Rows cover samples `start_sample..N` (0-based); columns follow the
/// dictionary's candidate order. The design matrix is stored column-major.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    design: Array2<f64>,
    target: Vec<f64>,
    dictionary: Option<MultiwaveletDictionary>,
    start_sample: usize,
    n_samples: usize,
    /// Channel rows of the source signals, in dictionary variable order.
    variables: Vec<usize>,
}

impl RegressionProblem {
    pub fn design(&self) -> &Array2<f64> {
        &self.design
    }

    pub fn column(&self, m: usize) -> &[f64] {
        let rows = self.design.nrows();
        let data = self
            .design
            .as_slice_memory_order()
            .expect("design matrix is contiguous");
        &data[m * rows..(m + 1) * rows]
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    /// `None` for problems built directly from a matrix.
    pub fn dictionary(&self) -> Option<&MultiwaveletDictionary> {
        self.dictionary.as_ref()
    }

    /// First 0-based sample index used in the regression (the maximum lag).
    pub fn start_sample(&self) -> usize {
        self.start_sample
    }

    /// Length of the original signals.
    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn rows(&self) -> usize {
        self.design.nrows()
    }

    pub fn cols(&self) -> usize {
        self.design.ncols()
    }

    pub fn variables(&self) -> &[usize] {
        &self.variables
    }

    /// Builds a problem from an explicit matrix, bypassing the signal expansion.
    pub fn from_columns(design: Array2<f64>, target: Vec<f64>) -> Result<Self> {
        let (rows, cols) = design.dim();
        if rows == 0 || cols == 0 {
            return Err(CoreError::Shape("empty design matrix".into()));
        }
        if target.len() != rows {
            return Err(CoreError::Shape(format!(
                "target has {} rows, design has {rows}",
                target.len()
            )));
        }
        let mut fortran = Array2::zeros((rows, cols).f());
        fortran.assign(&design);
        Ok(RegressionProblem {
            design: fortran,
            target,
            dictionary: None,
            start_sample: 0,
            n_samples: rows,
            variables: Vec::new(),
        })
    }
}

/// Expands lagged signals against the dictionary.
///
/// `signals` is channels x samples. The dictionary's first variable is the
/// target's own lags; the remaining variables follow `predictors` in order.
pub fn expand_regressors(
    signals: ArrayView2<f64>,
    target: usize,
    predictors: &[usize],
    dictionary: &MultiwaveletDictionary,
) -> Result<RegressionProblem> {
    let (channels, n) = signals.dim();
    let mut variables = Vec::with_capacity(predictors.len() + 1);
    variables.push(target);
    variables.extend_from_slice(predictors);
    if let Some(&bad) = variables.iter().find(|&&c| c >= channels) {
        return Err(CoreError::Shape(format!(
            "channel {bad} out of range for {channels} channels"
        )));
    }
    if dictionary.variable_count() != variables.len() {
        return Err(CoreError::Shape(format!(
            "dictionary has {} lag groups, equation has {} variables",
            dictionary.variable_count(),
            variables.len()
        )));
    }
    let max_lag = dictionary.max_lag();
    if n <= max_lag {
        return Err(CoreError::InsufficientData {
            needed: max_lag,
            got: n,
        });
    }

    let rows = n - max_lag;
    let table = dictionary.basis_table(n);
    let cols = dictionary.len();
    let mut data = vec![0.0; rows * cols];
    for (m, cand) in dictionary.candidates().iter().enumerate() {
        let signal = signals.row(variables[cand.variable]);
        let basis = table.row(cand.basis_index);
        let col = &mut data[m * rows..(m + 1) * rows];
        for (r, slot) in col.iter_mut().enumerate() {
            let i = r + max_lag;
            *slot = signal[i - cand.lag] * basis[i];
        }
    }
    let design = Array2::from_shape_vec((rows, cols).f(), data)
        .map_err(|e| CoreError::Shape(e.to_string()))?;
    let target_row = signals.row(target);
    let target_vec: Vec<f64> = (max_lag..n).map(|i| target_row[i]).collect();

    Ok(RegressionProblem {
        design,
        target: target_vec,
        dictionary: Some(dictionary.clone()),
        start_sample: max_lag,
        n_samples: n,
        variables,
    })
}
