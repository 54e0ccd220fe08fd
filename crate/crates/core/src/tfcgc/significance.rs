use ndarray::{Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::engine::{fit_restricted_equation, map_with_restricted, prepared};
use super::{CgcConfig, CgcMap, SignificanceMeta};
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurrogateConfig {
    pub surrogates: usize,
    /// Per-cell false-positive level `p`.
    pub level: f64,
    pub seed: u64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        SurrogateConfig {
            surrogates: 200,
            level: 0.01,
            seed: 0,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.surrogates == 0 {
            return Err(CoreError::InvalidConfig("at least one surrogate is required".into()));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(CoreError::InvalidConfig(format!("level {} outside (0, 1)", self.level)));
        }
        if self.level < 1.0 / (self.surrogates as f64 + 1.0) {
            return Err(CoreError::LevelUnachievable {
                level: self.level,
                surrogates: self.surrogates,
            });
        }
        Ok(())
    }

    /// 1-based rank of the threshold among the sorted surrogate values.
    pub fn threshold_rank(&self) -> usize {
        let n = self.surrogates;
        let k = ((1.0 - self.level) * (n as f64 + 1.0)).ceil() as usize;
        k.clamp(1, n)
    }

    pub fn meta(&self) -> SignificanceMeta {
        SignificanceMeta {
            surrogates: self.surrogates,
            level: self.level,
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SignificanceResult {
    pub threshold: Array2<f64>,
    pub mask: Array2<bool>,
    pub shifts: Vec<usize>,
}

/// Circular shift for surrogate `index`, uniform over `[ceil(0.1 n), n - ceil(0.1 n)]`.
pub fn surrogate_shift(n_samples: usize, seed: u64, index: usize) -> usize {
    let min = n_samples.div_ceil(10).max(1);
    let max = n_samples.saturating_sub(min).max(min);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng.random_range(min..=max)
}

/// Copy of `signals` with `channel` rotated left by `shift` samples.
pub fn circular_shift(signals: ArrayView2<f64>, channel: usize, shift: usize) -> Array2<f64> {
    let mut out = signals.to_owned();
    let n = signals.ncols();
    let src = signals.row(channel);
    for (i, v) in out.row_mut(channel).iter_mut().enumerate() {
        *v = src[(i + shift) % n];
    }
    out
}

/// Largest `keep` values per cell; the smallest of them is the threshold.
struct TopValues {
    keep: usize,
    values: Vec<f64>,
}

impl TopValues {
    fn new(cells: usize, keep: usize) -> Self {
        TopValues {
            keep,
            values: vec![f64::NEG_INFINITY; cells * keep],
        }
    }

    fn insert(&mut self, map: &Array2<f64>) {
        let keep = self.keep;
        for (cell, &v) in map.iter().enumerate() {
            let buf = &mut self.values[cell * keep..(cell + 1) * keep];
            if v <= buf[0] {
                continue;
            }
            // buf stays sorted ascending.
            let mut i = 0;
            while i + 1 < keep && buf[i + 1] < v {
                buf[i] = buf[i + 1];
                i += 1;
            }
            buf[i] = v;
        }
    }

    fn threshold(&self, dim: (usize, usize)) -> Array2<f64> {
        Array2::from_shape_fn(dim, |(r, c)| self.values[(r * dim.1 + c) * self.keep])
    }
}

/// Surrogate test of `observed` with maps rebuilt by `builder` on
/// source-shifted copies of `signals`.
pub fn significance_test<F>(
    observed: ArrayView2<f64>,
    signals: ArrayView2<f64>,
    source: usize,
    config: &SurrogateConfig,
    builder: F,
) -> Result<SignificanceResult>
where
    F: Fn(ArrayView2<f64>) -> Result<Array2<f64>> + Sync,
{
    config.validate()?;
    if source >= signals.nrows() {
        return Err(CoreError::Shape(format!("source channel {source} out of range")));
    }
    let n = signals.ncols();
    let shifts: Vec<usize> = (0..config.surrogates)
        .map(|i| surrogate_shift(n, config.seed, i))
        .collect();
    let keep = config.surrogates - config.threshold_rank() + 1;
    let dim = observed.dim();
    let mut top = TopValues::new(dim.0 * dim.1, keep);
    let chunk = (rayon::current_num_threads() * 2).max(1);
    for batch in shifts.chunks(chunk) {
        let maps: Vec<Array2<f64>> = batch
            .par_iter()
            .map(|&shift| {
                let shifted = circular_shift(signals, source, shift);
                builder(shifted.view())
            })
            .collect::<Result<_>>()?;
        for m in &maps {
            if m.dim() != dim {
                return Err(CoreError::Shape("surrogate map shape differs from observed".into()));
            }
            top.insert(m);
        }
    }
    let threshold = top.threshold(dim);
    let mask = Array2::from_shape_fn(dim, |(r, c)| observed[[r, c]] > threshold[[r, c]]);
    Ok(SignificanceResult {
        threshold,
        mask,
        shifts,
    })
}

/// Attaches a significance mask to `map`, reusing its restricted equation for
/// every surrogate.
pub fn tf_cgc_significance(
    map: &mut CgcMap,
    signals: ArrayView2<f64>,
    config: &CgcConfig,
    surrogates: &SurrogateConfig,
) -> Result<SignificanceResult> {
    surrogates.validate()?;
    config.validate()?;
    // Circular shifts keep each channel's mean and variance, so one
    // standardization serves every surrogate.
    let prepared = prepared(signals, config);
    let signals = prepared.view();
    let restricted = fit_restricted_equation(signals, map.sink, &map.conditioning, config)?;
    let result = significance_test(map.values.view(), signals, map.source, surrogates, |shifted| {
        map_with_restricted(shifted, map.source, map.sink, &map.conditioning, &restricted, config)
    })?;
    map.mask = Some(result.mask.clone());
    map.test_meta = Some(surrogates.meta());
    Ok(result)
}
