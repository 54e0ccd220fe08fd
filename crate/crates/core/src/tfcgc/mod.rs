//! Time-frequency conditional Granger causality.
//!
//! Two systems are fitted per directed pair `Y -> X | Z`: a restricted one over
//! `(X, Z)` and a full one over `(X, Y, Z)`. After zero-lag normalization the
//! transfer functions of both are combined, and the X-innovation spectrum is
//! split into an intrinsic part and the part explained by `Y` and the
//! normalized restricted innovations of `Z`.
//!
//! [`system`] exposes every step explicitly. The map functions here use an
//! equivalent shortcut: only the X row of the combined matrix is needed, the
//! restricted normalization leaves that row untouched, and the full-system
//! inverse can be shared across all pairs drawn from one channel set.

mod engine;
pub mod linalg;
mod significance;
pub mod system;

use ndarray::Array2;

pub use engine::{fit_restricted_equation, standardize_channels, tf_cgc_map, tf_cgc_maps};
pub use linalg::CMatrix;
pub use significance::{
    circular_shift, significance_test, surrogate_shift, tf_cgc_significance, SignificanceResult,
    SurrogateConfig,
};
pub use system::{
    combine_transfer, conditional_causality, embed_restricted, fit_system, lag_phases, normalize_full,
    normalize_restricted, spectral_matrix, spectrum_parts, CombinedTransfer, FittedSystem, NormalizedSystem,
    SpectrumParts, SystemKind, VarSystem,
};

use crate::error::{CoreError, Result};
use crate::tvarx::TvarxConfig;

/// Evenly spaced analysis frequencies in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    pub start: f64,
    pub step: f64,
    pub bins: usize,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        FrequencyGrid {
            start: 6.0,
            step: 0.1,
            bins: 90,
        }
    }
}

impl FrequencyGrid {
    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.bins).map(|i| self.start + i as f64 * self.step).collect()
    }

    pub fn validate(&self, sampling_rate: f64) -> Result<()> {
        if self.bins == 0 {
            return Err(CoreError::InvalidRange("frequency grid has no bins".into()));
        }
        if !(self.step > 0.0) || !(self.start >= 0.0) {
            return Err(CoreError::InvalidRange(format!(
                "grid start {} step {}",
                self.start, self.step
            )));
        }
        let last = self.start + (self.bins - 1) as f64 * self.step;
        if last > sampling_rate / 2.0 {
            return Err(CoreError::InvalidRange(format!(
                "grid reaches {last} Hz beyond Nyquist {}",
                sampling_rate / 2.0
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgcConfig {
    pub tvarx: TvarxConfig,
    pub sampling_rate: f64,
    pub grid: FrequencyGrid,
    /// Evaluate every `time_step`-th sample.
    pub time_step: usize,
    /// Scale every channel to zero mean and unit variance before fitting.
    pub standardize: bool,
}

impl Default for CgcConfig {
    fn default() -> Self {
        CgcConfig {
            tvarx: TvarxConfig::default(),
            sampling_rate: 250.0,
            grid: FrequencyGrid::default(),
            time_step: 1,
            standardize: true,
        }
    }
}

impl CgcConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sampling_rate > 0.0) {
            return Err(CoreError::InvalidConfig(format!(
                "sampling rate {}",
                self.sampling_rate
            )));
        }
        if self.time_step == 0 {
            return Err(CoreError::InvalidConfig("time step must be positive".into()));
        }
        self.grid.validate(self.sampling_rate)?;
        self.tvarx.rofr.validate()
    }

    pub fn time_axis(&self, n_samples: usize) -> Vec<usize> {
        (0..n_samples).step_by(self.time_step.max(1)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignificanceMeta {
    pub surrogates: usize,
    pub level: f64,
    pub seed: u64,
}

/// `F_{source -> sink | conditioning}(t, f)` on a time x frequency grid.
#[derive(Debug, Clone)]
pub struct CgcMap {
    pub source: usize,
    pub sink: usize,
    pub conditioning: Vec<usize>,
    /// 0-based sample indices of the rows.
    pub time_axis: Vec<usize>,
    /// Frequencies of the columns in Hz.
    pub freq_axis: Vec<f64>,
    pub values: Array2<f64>,
    pub mask: Option<Array2<bool>>,
    pub test_meta: Option<SignificanceMeta>,
}

impl CgcMap {
    pub fn dim(&self) -> (usize, usize) {
        self.values.dim()
    }

    /// Values with non-significant cells zeroed; unchanged without a mask.
    pub fn masked_values(&self) -> Array2<f64> {
        match &self.mask {
            Some(mask) => {
                let mut v = self.values.clone();
                v.zip_mut_with(mask, |x, &keep| {
                    if !keep {
                        *x = 0.0;
                    }
                });
                v
            }
            None => self.values.clone(),
        }
    }
}
