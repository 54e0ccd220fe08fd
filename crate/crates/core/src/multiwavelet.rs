//! Cardinal B-spline multiwavelets and the lagged-regressor dictionary built on them.
//!
//! A time-varying coefficient `a(t)` is expanded as a sum of dilated, shifted
//! cardinal B-splines `phi(u) = 2^(j/2) * beta_s(2^j u - l)` evaluated on the
//! normalized time axis `u = t / N`. Each candidate regressor of the dictionary
//! pairs one lagged signal with one such basis function.

use ndarray::Array2;

use crate::error::{CoreError, Result};

/// Cardinal B-spline of order `order` (degree `order - 1`) supported on `[0, order]`.
///
/// Evaluated with the Cox–de Boor recursion on integer knots, starting from the
/// indicator of `[0, 1)`.
pub fn bspline(order: usize, u: f64) -> Result<f64> {
    if order < 1 {
        return Err(CoreError::InvalidOrder(order));
    }
    Ok(bspline_unchecked(order, u))
}

pub(crate) fn bspline_unchecked(order: usize, u: f64) -> f64 {
    if !(u >= 0.0 && u < order as f64) {
        return 0.0;
    }
    // b[i] holds beta_r(u - i) for the current order r.
    let mut b = vec![0.0; order];
    for (i, slot) in b.iter_mut().enumerate() {
        let x = u - i as f64;
        if (0.0..1.0).contains(&x) {
            *slot = 1.0;
        }
    }
    for r in 2..=order {
        let rf = r as f64;
        for i in 0..=(order - r) {
            let x = u - i as f64;
            b[i] = (x * b[i] + (rf - x) * b[i + 1]) / (rf - 1.0);
        }
    }
    b[0]
}

/// One dilated and shifted basis function `phi^s_{l,j}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BSplineSpec {
    pub order: usize,
    pub scale: u32,
    pub shift: i64,
}

impl BSplineSpec {
    pub fn new(order: usize, scale: u32, shift: i64) -> Result<Self> {
        if order < 1 {
            return Err(CoreError::InvalidOrder(order));
        }
        let spec = BSplineSpec {
            order,
            scale,
            shift,
        };
        let (lo, hi) = spec.shift_range();
        if shift < lo || shift > hi {
            return Err(CoreError::InvalidSpec(format!(
                "shift {shift} outside [{lo}, {hi}] for order {order} at scale {scale}"
            )));
        }
        Ok(spec)
    }

    /// Admissible shifts `-s ..= 2^j - 1`.
    pub fn shift_range(&self) -> (i64, i64) {
        shift_range(self.order, self.scale)
    }

    /// Support on the normalized axis, clipped to `[0, 1]`.
    pub fn support(&self) -> (f64, f64) {
        let dil = (1u64 << self.scale) as f64;
        let lo = self.shift as f64 / dil;
        let hi = (self.shift + self.order as i64) as f64 / dil;
        (lo.max(0.0), hi.min(1.0))
    }

    /// `2^(j/2) * beta_s(2^j u - l)` for `u` in `[0, 1]`.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&u) {
            return Err(CoreError::OutOfRange {
                value: u,
                low: 0.0,
                high: 1.0,
            });
        }
        Ok(self.eval_unchecked(u))
    }

    pub(crate) fn eval_unchecked(&self, u: f64) -> f64 {
        let dil = (1u64 << self.scale) as f64;
        dil.sqrt() * bspline_unchecked(self.order, dil * u - self.shift as f64)
    }
}

pub fn shift_range(order: usize, scale: u32) -> (i64, i64) {
    (-(order as i64), (1i64 << scale) - 1)
}

/// Free-function form of [`BSplineSpec::eval`].
pub fn basis_eval(spec: &BSplineSpec, u: f64) -> Result<f64> {
    spec.eval(u)
}

/// One column of the expanded regression: lagged `variable` times a basis function.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    /// Position in the equation's variable list (0 = the target's own lags).
    pub variable: usize,
    pub lag: usize,
    pub basis: BSplineSpec,
    /// Index into [`MultiwaveletDictionary::bases`].
    pub basis_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiwaveletDictionary {
    orders: Vec<usize>,
    scale: u32,
    lags: Vec<usize>,
    bases: Vec<BSplineSpec>,
    candidates: Vec<Candidate>,
}

impl MultiwaveletDictionary {
    /// Enumerates every (variable, lag, order, shift) candidate.
    ///
    /// Ordering is variable-major, then lag, then order, then shift ascending.
    pub fn build(orders: &[usize], scale: u32, lags_per_variable: &[usize]) -> Result<Self> {
        if lags_per_variable.is_empty() {
            return Err(CoreError::InvalidSpec("empty lag list".into()));
        }
        if lags_per_variable.iter().any(|&k| k == 0) {
            return Err(CoreError::InvalidSpec("lags must be at least 1".into()));
        }
        if orders.is_empty() {
            return Err(CoreError::InvalidSpec("empty order set".into()));
        }
        if scale > 20 {
            return Err(CoreError::InvalidSpec(format!("scale {scale} too large")));
        }
        let mut orders = orders.to_vec();
        orders.sort_unstable();
        orders.dedup();
        if orders[0] < 1 {
            return Err(CoreError::InvalidOrder(orders[0]));
        }

        let mut bases = Vec::new();
        for &s in &orders {
            let (lo, hi) = shift_range(s, scale);
            for l in lo..=hi {
                bases.push(BSplineSpec {
                    order: s,
                    scale,
                    shift: l,
                });
            }
        }

        let mut candidates = Vec::new();
        for (v, &k_max) in lags_per_variable.iter().enumerate() {
            for lag in 1..=k_max {
                for (bi, b) in bases.iter().enumerate() {
                    candidates.push(Candidate {
                        variable: v,
                        lag,
                        basis: *b,
                        basis_index: bi,
                    });
                }
            }
        }

        Ok(MultiwaveletDictionary {
            orders,
            scale,
            lags: lags_per_variable.to_vec(),
            bases,
            candidates,
        })
    }

    pub fn orders(&self) -> &[usize] {
        &self.orders
    }

    pub fn scale(&self) -> u32 {
        self.scale
    }

    pub fn lags(&self) -> &[usize] {
        &self.lags
    }

    pub fn max_lag(&self) -> usize {
        self.lags.iter().copied().max().unwrap_or(0)
    }

    pub fn variable_count(&self) -> usize {
        self.lags.len()
    }

    /// Distinct basis functions shared by every lagged term.
    pub fn bases(&self) -> &[BSplineSpec] {
        &self.bases
    }

    pub fn candidates(&self) -> &[Candidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// `(sum of lags) * (sum over orders of 2^j + s)`.
    pub fn expected_count(&self) -> usize {
        let per_term: usize = self.orders.iter().map(|&s| (1usize << self.scale) + s).sum();
        self.lags.iter().sum::<usize>() * per_term
    }

    /// Basis values at `u = t / N` for `t = 1..=N`, one row per basis function.
    pub fn basis_table(&self, n_samples: usize) -> Array2<f64> {
        let n = n_samples as f64;
        Array2::from_shape_fn((self.bases.len(), n_samples), |(b, i)| {
            self.bases[b].eval_unchecked((i + 1) as f64 / n)
        })
    }
}
