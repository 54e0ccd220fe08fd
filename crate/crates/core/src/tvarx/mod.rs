//! Sparse identification of time-varying ARX equations.
//!
//! Each equation regresses one channel on its own lags and the lags of a set
//! of predictor channels. Every time-varying coefficient is expanded over the
//! multiwavelet dictionary, turning the problem into a time-invariant sparse
//! regression solved by ROFR.

mod covariance;
mod regression;
mod rofr;

use std::fmt::Write as _;

use ndarray::{Array2, ArrayView2};

pub use covariance::{recursive_covariance, RecursiveCovariance};
pub use regression::{expand_regressors, RegressionProblem};
pub use rofr::{rofr_select, solve_parameters, Regularization, RofrConfig, RofrResult};

use crate::error::{CoreError, Result};
use crate::multiwavelet::MultiwaveletDictionary;

#[derive(Debug, Clone, PartialEq)]
pub struct TvarxConfig {
    pub orders: Vec<usize>,
    pub scale: u32,
    /// Lag depth used for every variable when fitting whole systems.
    pub lag: usize,
    pub rofr: RofrConfig,
    pub forgetting: f64,
    pub init_window: usize,
}

impl Default for TvarxConfig {
    fn default() -> Self {
        TvarxConfig {
            orders: vec![3, 4, 5],
            scale: 3,
            lag: 3,
            rofr: RofrConfig::default(),
            forgetting: 0.02,
            init_window: 50,
        }
    }
}

/// One fitted time-varying ARX equation.
#[derive(Debug, Clone)]
pub struct TvarxModel {
    pub target: usize,
    pub predictors: Vec<usize>,
    pub lags: Vec<usize>,
    pub dictionary: MultiwaveletDictionary,
    /// Dictionary indices of the selected terms.
    pub selected: Vec<usize>,
    /// Expansion coefficients of the selected terms.
    pub coefficients: Vec<f64>,
    /// Per variable (0 = own lags), a `lags x N` array of `a(t)`.
    pub timevarying: Vec<Array2<f64>>,
    /// Full-length residual series; zero before `start_sample`.
    pub residuals: Vec<f64>,
    /// Recursive variance of the residuals on the full axis.
    pub variance: Vec<f64>,
    pub start_sample: usize,
    pub regularization: f64,
    pub config: TvarxConfig,
}

impl TvarxModel {
    pub fn n_samples(&self) -> usize {
        self.residuals.len()
    }

    /// `a_{v,k}(t)` for variable slot `v` (0 = own lags) and lag `k >= 1`.
    pub fn coefficient(&self, variable: usize, lag: usize) -> ndarray::ArrayView1<'_, f64> {
        self.timevarying[variable].row(lag - 1)
    }

    /// Channel feeding variable slot `v`.
    pub fn variable_channel(&self, v: usize) -> usize {
        if v == 0 {
            self.target
        } else {
            self.predictors[v - 1]
        }
    }

    /// Audit text: structure, configuration and selected terms.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# tvarx model");
        let _ = writeln!(s, "target = {}", self.target);
        let _ = writeln!(s, "predictors = {:?}", self.predictors);
        let _ = writeln!(s, "lags = {:?}", self.lags);
        let _ = writeln!(s, "orders = {:?}", self.config.orders);
        let _ = writeln!(s, "scale = {}", self.config.scale);
        let _ = writeln!(s, "regularization = {:e}", self.regularization);
        let _ = writeln!(s, "pesr_mu = {}", self.config.rofr.pesr_mu);
        let _ = writeln!(
            s,
            "elimination_exponent = {}",
            self.config.rofr.elimination_exponent
        );
        let _ = writeln!(s, "forgetting = {}", self.config.forgetting);
        let _ = writeln!(s, "init_window = {}", self.config.init_window);
        let _ = writeln!(s, "samples = {}", self.n_samples());
        let _ = writeln!(s, "terms = {}", self.selected.len());
        let _ = writeln!(s, "# index variable lag order shift coefficient");
        for (&m, &c) in self.selected.iter().zip(&self.coefficients) {
            let cand = &self.dictionary.candidates()[m];
            let _ = writeln!(
                s,
                "{m} {} {} {} {} {:.17e}",
                cand.variable, cand.lag, cand.basis.order, cand.basis.shift, c
            );
        }
        s
    }
}

/// Sums the selected expansion terms back into per-variable coefficient series.
pub fn reconstruct_expansion(
    dictionary: &MultiwaveletDictionary,
    selected: &[usize],
    coefficients: &[f64],
    n_samples: usize,
) -> Vec<Array2<f64>> {
    let table = dictionary.basis_table(n_samples);
    let mut out: Vec<Array2<f64>> = dictionary
        .lags()
        .iter()
        .map(|&k| Array2::zeros((k, n_samples)))
        .collect();
    for (&m, &c) in selected.iter().zip(coefficients) {
        let cand = &dictionary.candidates()[m];
        let mut row = out[cand.variable].row_mut(cand.lag - 1);
        for (slot, &phi) in row.iter_mut().zip(table.row(cand.basis_index)) {
            *slot += c * phi;
        }
    }
    out
}

pub fn reconstruct_coefficients(model: &TvarxModel) -> Vec<Array2<f64>> {
    reconstruct_expansion(
        &model.dictionary,
        &model.selected,
        &model.coefficients,
        model.n_samples(),
    )
}

/// Fits one equation: `signals[target]` on its own lags and those of `predictors`.
///
/// `lags` lists the lag depth per variable, own lags first.
pub fn fit_tvarx(
    signals: ArrayView2<f64>,
    target: usize,
    predictors: &[usize],
    lags: &[usize],
    config: &TvarxConfig,
) -> Result<TvarxModel> {
    if lags.len() != predictors.len() + 1 {
        return Err(CoreError::Shape(format!(
            "{} lag depths for {} variables",
            lags.len(),
            predictors.len() + 1
        )));
    }
    if predictors.contains(&target) {
        return Err(CoreError::InvalidSpec("target listed among its predictors".into()));
    }
    let dictionary = MultiwaveletDictionary::build(&config.orders, config.scale, lags)?;
    let problem = expand_regressors(signals, target, predictors, &dictionary)?;
    let fit = rofr_select(&problem, &config.rofr)?;

    let n = problem.n_samples();
    let start = problem.start_sample();
    let mut residuals = vec![0.0; n];
    for (r, &x) in problem.target().iter().enumerate() {
        let fitted: f64 = fit
            .selected
            .iter()
            .zip(&fit.coefficients)
            .map(|(&m, &c)| problem.column(m)[r] * c)
            .sum();
        residuals[start + r] = x - fitted;
    }
    let variance = RecursiveCovariance::from_series(
        &[&residuals],
        start,
        config.forgetting,
        config.init_window.min(n - start),
    )?
    .trace(0, 0);

    let timevarying = reconstruct_expansion(&dictionary, &fit.selected, &fit.coefficients, n);
    Ok(TvarxModel {
        target,
        predictors: predictors.to_vec(),
        lags: lags.to_vec(),
        dictionary,
        selected: fit.selected,
        coefficients: fit.coefficients,
        timevarying,
        residuals,
        variance,
        start_sample: start,
        regularization: fit.regularization,
        config: config.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn zero_coefficients_reconstruct_to_zero() {
        let d = MultiwaveletDictionary::build(&[3, 4, 5], 3, &[2, 2]).unwrap();
        let out = reconstruct_expansion(&d, &[0, 5, 100], &[0.0, 0.0, 0.0], 200);
        assert!(out.iter().all(|a| a.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn known_expansion_round_trip() {
        let d = MultiwaveletDictionary::build(&[3, 4, 5], 3, &[2, 1]).unwrap();
        let n = 300;
        let selected = [4usize, 40, 80];
        let coefs = [0.3, -0.2, 0.1];
        let out = reconstruct_expansion(&d, &selected, &coefs, n);
        for (&m, &c) in selected.iter().zip(&coefs) {
            let cand = d.candidates()[m];
            let expected: Vec<f64> = (1..=n)
                .map(|t| c * cand.basis.eval(t as f64 / n as f64).unwrap())
                .collect();
            let got = out[cand.variable].row(cand.lag - 1);
            for t in 0..n {
                assert!((got[t] - expected[t]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pure_autoregression_without_predictors() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let n = 400;
        let mut x = vec![0.0; n];
        for t in 1..n {
            x[t] = 0.5 * x[t - 1] + normal.sample(&mut rng);
        }
        let signals = Array2::from_shape_vec((1, n), x).unwrap();
        let model = fit_tvarx(signals.view(), 0, &[], &[2], &TvarxConfig::default()).unwrap();
        assert_eq!(model.timevarying.len(), 1);
        assert_eq!(model.timevarying[0].dim(), (2, n));
        assert!(!model.selected.is_empty());
        assert!(model.variance.iter().all(|&v| v >= 0.0));
        let text = model.to_text();
        assert!(text.contains("terms = "));
    }

    #[test]
    fn residuals_match_design_fit() {
        let n = 300;
        let signals = Array2::from_shape_fn((2, n), |(c, i)| ((i * (c + 2)) as f64 * 0.21).sin());
        let cfg = TvarxConfig::default();
        let model = fit_tvarx(signals.view(), 0, &[1], &[2, 2], &cfg).unwrap();
        let d = &model.dictionary;
        let p = expand_regressors(signals.view(), 0, &[1], d).unwrap();
        for r in 0..p.rows() {
            let fitted: f64 = model
                .selected
                .iter()
                .zip(&model.coefficients)
                .map(|(&m, &c)| p.column(m)[r] * c)
                .sum();
            assert_eq!(model.residuals[r + 2], p.target()[r] - fitted);
        }
        // The same residual via reconstructed a(t).
        for i in 2..n {
            let mut pred = 0.0;
            for v in 0..2 {
                for k in 1..=2 {
                    pred += model.coefficient(v, k)[i] * signals[[model.variable_channel(v), i - k]];
                }
            }
            assert!((signals[[0, i]] - pred - model.residuals[i]).abs() < 1e-10);
        }
    }
}
