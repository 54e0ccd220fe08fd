use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;

use super::system::{
    causality_from_parts, fit_system, lag_phases, spectrum_parts, zero_lag_matrix, SystemKind, VarSystem,
};
use super::{CgcConfig, CgcMap};
use crate::error::{CoreError, Result};
use crate::tvarx::{fit_tvarx, TvarxModel};

/// The X equation of the restricted system: `sink` on itself and `conditioning`.
pub fn fit_restricted_equation(
    signals: ArrayView2<f64>,
    sink: usize,
    conditioning: &[usize],
    config: &CgcConfig,
) -> Result<TvarxModel> {
    let lags = vec![config.tvarx.lag; conditioning.len() + 1];
    fit_tvarx(signals, sink, conditioning, &lags, &config.tvarx)
}

/// Per-pair quantities that depend only on `t`.
struct PairPlan {
    /// Channel-set indices ordered (X, Y, Z...).
    order: Vec<usize>,
    /// Restricted X-row lag coefficients by channel-set index, `[t][k-1][c]`;
    /// the Y entry stays zero.
    restricted: Vec<f64>,
    /// Inverse zero-lag matrices, `[t][i][j]` in pair order.
    zero_lag_inv: Vec<f64>,
    /// Block-diagonal normalized noise, `[t][i][j]` in pair order.
    noise: Vec<f64>,
}

fn plan_pair(
    full: &VarSystem,
    channels: &[usize],
    source: usize,
    sink: usize,
    restricted: &TvarxModel,
    times: &[usize],
) -> Result<PairPlan> {
    let d = full.dim();
    let lag = full.lag();
    let position = |c: usize| channels.iter().position(|&x| x == c);
    let x = position(sink).ok_or_else(|| CoreError::InvalidSpec(format!("sink {sink} not in channel set")))?;
    let y = position(source).ok_or_else(|| CoreError::InvalidSpec(format!("source {source} not in channel set")))?;
    let mut order = vec![x, y];
    order.extend((0..d).filter(|&c| c != x && c != y));

    if restricted.target != sink || restricted.predictors.len() != d - 2 {
        return Err(CoreError::Shape("restricted equation does not match the pair".into()));
    }
    let mut slot_of = vec![None; d];
    slot_of[x] = Some(0);
    for (s, &c) in restricted.predictors.iter().enumerate() {
        let idx = position(c).ok_or_else(|| CoreError::InvalidSpec(format!("channel {c} not in channel set")))?;
        if idx == y {
            return Err(CoreError::InvalidSpec("restricted equation uses the source".into()));
        }
        slot_of[idx] = Some(s + 1);
    }

    let nt = times.len();
    let mut rcoef = vec![0.0; nt * lag * d];
    let mut zero_lag_inv = vec![0.0; nt * d * d];
    let mut noise = vec![0.0; nt * d * d];
    let group = |i: usize| i.min(2);
    let mut xi = Array2::<f64>::zeros((d, d));
    let mut z0 = Array2::<f64>::zeros((d, d));
    for (ti, &t) in times.iter().enumerate() {
        for k in 1..=lag {
            for c in 0..d {
                if let Some(s) = slot_of[c] {
                    if s < restricted.timevarying.len() && k <= restricted.timevarying[s].nrows() {
                        rcoef[(ti * lag + k - 1) * d + c] = restricted.timevarying[s][[k - 1, t]];
                    }
                }
            }
        }
        for a in 0..d {
            for b in 0..d {
                xi[[a, b]] = full.covariance_entry(t, order[a], order[b]);
            }
        }
        zero_lag_matrix(&xi, SystemKind::Full, t, &mut z0)?;
        let transformed = z0.dot(&xi).dot(&z0.t());
        let inv = unit_lower_inverse(&z0);
        for a in 0..d {
            for b in 0..d {
                zero_lag_inv[(ti * d + a) * d + b] = inv[[a, b]];
                if group(a) == group(b) {
                    noise[(ti * d + a) * d + b] = transformed[[a, b]];
                }
            }
        }
    }
    Ok(PairPlan {
        order,
        restricted: rcoef,
        zero_lag_inv,
        noise,
    })
}

fn unit_lower_inverse(l: &Array2<f64>) -> Array2<f64> {
    let d = l.nrows();
    let mut inv = Array2::<f64>::eye(d);
    for j in 0..d {
        for i in j + 1..d {
            let s: f64 = (j..i).map(|k| l[[i, k]] * inv[[k, j]]).sum();
            inv[[i, j]] = -s;
        }
    }
    inv
}

/// Evaluates every pair over the time grid given the full raw system (in
/// `channels` order) and each pair's restricted X equation.
fn evaluate_pairs(
    full: &VarSystem,
    channels: &[usize],
    pairs: &[(usize, usize)],
    restricted: &[TvarxModel],
    config: &CgcConfig,
) -> Result<Vec<CgcMap>> {
    let d = full.dim();
    let lag = full.lag();
    let times = config.time_axis(full.n_samples());
    let freqs = config.grid.frequencies();
    let plans: Vec<PairPlan> = pairs
        .iter()
        .zip(restricted)
        .map(|(&(source, sink), eq)| plan_pair(full, channels, source, sink, eq, &times))
        .collect::<Result<_>>()?;
    let phases: Vec<Vec<Complex64>> = freqs
        .iter()
        .map(|&f| lag_phases(f, config.sampling_rate, lag))
        .collect();
    let nf = freqs.len();
    let np = pairs.len();

    let rows: Vec<Vec<f64>> = (0..times.len())
        .into_par_iter()
        .map(|ti| {
            let t = times[ti];
            let mut out = vec![0.0; np * nf];
            let mut a = vec![Complex64::new(0.0, 0.0); d];
            let mut w = vec![Complex64::new(0.0, 0.0); d];
            let mut u = vec![Complex64::new(0.0, 0.0); d];
            for (fi, z) in phases.iter().enumerate() {
                let f = freqs[fi];
                let h = full
                    .raw_spectral_matrix(t, z)
                    .inverse()
                    .ok_or(CoreError::Conditioning { t, freq: f })?;
                for (pi, plan) in plans.iter().enumerate() {
                    let x = plan.order[0];
                    for (c, slot) in a.iter_mut().enumerate() {
                        let mut acc = Complex64::new(if c == x { 1.0 } else { 0.0 }, 0.0);
                        for k in 1..=lag {
                            acc -= z[k - 1] * plan.restricted[(ti * lag + k - 1) * d + c];
                        }
                        *slot = acc;
                    }
                    for (q, wq) in w.iter_mut().enumerate() {
                        let col = plan.order[q];
                        let mut acc = Complex64::new(0.0, 0.0);
                        for c in 0..d {
                            acc += a[c] * h.get(c, col);
                        }
                        *wq = acc;
                    }
                    let inv = &plan.zero_lag_inv[ti * d * d..(ti + 1) * d * d];
                    for (j, uj) in u.iter_mut().enumerate() {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for q in j..d {
                            acc += w[q] * inv[q * d + j];
                        }
                        *uj = acc;
                    }
                    let noise = ArrayView2::from_shape((d, d), &plan.noise[ti * d * d..(ti + 1) * d * d])
                        .expect("square block");
                    out[pi * nf + fi] = causality_from_parts(spectrum_parts(&u, noise), t, f)?;
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    Ok(pairs
        .iter()
        .enumerate()
        .map(|(pi, &(source, sink))| {
            let values = Array2::from_shape_fn((times.len(), nf), |(ti, fi)| rows[ti][pi * nf + fi]);
            CgcMap {
                source,
                sink,
                conditioning: conditioning_of(channels, source, sink),
                time_axis: times.clone(),
                freq_axis: freqs.clone(),
                values,
                mask: None,
                test_meta: None,
            }
        })
        .collect())
}

fn conditioning_of(channels: &[usize], source: usize, sink: usize) -> Vec<usize> {
    channels
        .iter()
        .copied()
        .filter(|&c| c != source && c != sink)
        .collect()
}

fn check_pairs(channels: &[usize], pairs: &[(usize, usize)]) -> Result<()> {
    for &(source, sink) in pairs {
        if source == sink {
            return Err(CoreError::InvalidSpec(format!("source and sink are both channel {source}")));
        }
        if !channels.contains(&source) || !channels.contains(&sink) {
            return Err(CoreError::InvalidSpec(format!(
                "pair ({source}, {sink}) not inside the channel set"
            )));
        }
    }
    Ok(())
}

/// Rows rescaled to zero mean and unit variance; constant rows become zero.
pub fn standardize_channels(signals: ArrayView2<f64>) -> Array2<f64> {
    let mut out = signals.to_owned();
    for mut row in out.rows_mut() {
        let n = row.len() as f64;
        let mean = row.sum() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
        row.mapv_inplace(|v| (v - mean) * scale);
    }
    out
}

pub(crate) fn prepared(signals: ArrayView2<f64>, config: &CgcConfig) -> Array2<f64> {
    if config.standardize {
        standardize_channels(signals)
    } else {
        signals.to_owned()
    }
}

/// Maps for several directed `(source, sink)` pairs, each conditioned on the
/// remaining channels of `channels`. The full system is fitted once.
pub fn tf_cgc_maps(
    signals: ArrayView2<f64>,
    channels: &[usize],
    pairs: &[(usize, usize)],
    config: &CgcConfig,
) -> Result<Vec<CgcMap>> {
    config.validate()?;
    check_pairs(channels, pairs)?;
    let prepared = prepared(signals, config);
    let signals = prepared.view();
    let full = fit_system(signals, channels, &config.tvarx)?.var_system();
    let restricted: Vec<TvarxModel> = pairs
        .par_iter()
        .map(|&(source, sink)| {
            fit_restricted_equation(signals, sink, &conditioning_of(channels, source, sink), config)
        })
        .collect::<Result<_>>()?;
    evaluate_pairs(&full, channels, pairs, &restricted, config)
}

/// Single map `F_{source -> sink | conditioning}`.
pub fn tf_cgc_map(
    signals: ArrayView2<f64>,
    source: usize,
    sink: usize,
    conditioning: &[usize],
    config: &CgcConfig,
) -> Result<CgcMap> {
    if conditioning.contains(&source) || conditioning.contains(&sink) {
        return Err(CoreError::InvalidSpec("conditioning set overlaps the pair".into()));
    }
    let mut channels = vec![sink, source];
    channels.extend_from_slice(conditioning);
    let mut maps = tf_cgc_maps(signals, &channels, &[(source, sink)], config)?;
    Ok(maps.remove(0))
}

/// Re-evaluates a single map with a prefitted restricted equation; used by the
/// surrogate test, where shifting the source leaves that equation unchanged.
pub(crate) fn map_with_restricted(
    signals: ArrayView2<f64>,
    source: usize,
    sink: usize,
    conditioning: &[usize],
    restricted: &TvarxModel,
    config: &CgcConfig,
) -> Result<Array2<f64>> {
    let mut channels = vec![sink, source];
    channels.extend_from_slice(conditioning);
    let full = fit_system(signals, &channels, &config.tvarx)?.var_system();
    let mut maps = evaluate_pairs(&full, &channels, &[(source, sink)], std::slice::from_ref(restricted), config)?;
    Ok(maps.remove(0).values)
}
