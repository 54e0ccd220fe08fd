use ndarray::{Array2, ArrayView2};
use num_complex::Complex64;
use rayon::prelude::*;

use super::linalg::CMatrix;
use crate::error::{CoreError, Result};
use crate::tvarx::{fit_tvarx, RecursiveCovariance, TvarxConfig, TvarxModel};

/// Raw time-varying VAR `x(t) = sum_k A_k(t) x(t-k) + e(t)` with residual
/// covariance `Xi(t)`.
#[derive(Debug, Clone)]
pub struct VarSystem {
    dim: usize,
    lag: usize,
    n_samples: usize,
    /// `[t][k-1][i][j]`
    coefficients: Vec<f64>,
    /// `[t][i][j]`
    covariance: Vec<f64>,
}

impl VarSystem {
    pub fn new(
        dim: usize,
        lag: usize,
        n_samples: usize,
        coefficients: Vec<f64>,
        covariance: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || n_samples == 0 {
            return Err(CoreError::Shape("empty system".into()));
        }
        if coefficients.len() != n_samples * lag * dim * dim {
            return Err(CoreError::Shape(format!(
                "expected {} lag coefficients, got {}",
                n_samples * lag * dim * dim,
                coefficients.len()
            )));
        }
        if covariance.len() != n_samples * dim * dim {
            return Err(CoreError::Shape(format!(
                "expected {} covariance entries, got {}",
                n_samples * dim * dim,
                covariance.len()
            )));
        }
        Ok(VarSystem {
            dim,
            lag,
            n_samples,
            coefficients,
            covariance,
        })
    }

    /// Time-invariant system repeated over `n_samples`.
    pub fn constant(lag_matrices: &[Array2<f64>], covariance: &Array2<f64>, n_samples: usize) -> Result<Self> {
        let dim = covariance.nrows();
        let mut coefficients = Vec::with_capacity(n_samples * lag_matrices.len() * dim * dim);
        for _ in 0..n_samples {
            for a in lag_matrices {
                if a.dim() != (dim, dim) {
                    return Err(CoreError::Shape("lag matrix size differs from covariance".into()));
                }
                coefficients.extend(a.iter().copied());
            }
        }
        let mut cov = Vec::with_capacity(n_samples * dim * dim);
        for _ in 0..n_samples {
            cov.extend(covariance.iter().copied());
        }
        Self::new(dim, lag_matrices.len(), n_samples, coefficients, cov)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn coefficient(&self, t: usize, k: usize, i: usize, j: usize) -> f64 {
        let d = self.dim;
        self.coefficients[((t * self.lag + k - 1) * d + i) * d + j]
    }

    pub fn lag_matrix(&self, t: usize, k: usize) -> Array2<f64> {
        Array2::from_shape_fn((self.dim, self.dim), |(i, j)| self.coefficient(t, k, i, j))
    }

    pub fn covariance(&self, t: usize) -> Array2<f64> {
        let d = self.dim;
        Array2::from_shape_vec((d, d), self.covariance[t * d * d..(t + 1) * d * d].to_vec())
            .expect("square block")
    }

    pub(crate) fn covariance_entry(&self, t: usize, i: usize, j: usize) -> f64 {
        self.covariance[(t * self.dim + i) * self.dim + j]
    }

    /// Reorders variables: new variable `a` is old variable `order[a]`.
    pub fn permuted(&self, order: &[usize]) -> Result<Self> {
        let d = self.dim;
        let mut seen = vec![false; d];
        if order.len() != d || order.iter().any(|&o| o >= d || std::mem::replace(&mut seen[o], true)) {
            return Err(CoreError::InvalidSpec(format!("{order:?} is not a permutation of 0..{d}")));
        }
        let mut coefficients = vec![0.0; self.coefficients.len()];
        let mut covariance = vec![0.0; self.covariance.len()];
        for t in 0..self.n_samples {
            for k in 1..=self.lag {
                for a in 0..d {
                    for b in 0..d {
                        coefficients[((t * self.lag + k - 1) * d + a) * d + b] =
                            self.coefficient(t, k, order[a], order[b]);
                    }
                }
            }
            for a in 0..d {
                for b in 0..d {
                    covariance[(t * d + a) * d + b] = self.covariance_entry(t, order[a], order[b]);
                }
            }
        }
        Self::new(d, self.lag, self.n_samples, coefficients, covariance)
    }

    /// `I - sum_k A_k(t) z^k` with `z = exp(-i 2 pi f / fs)`.
    pub fn raw_spectral_matrix(&self, t: usize, phases: &[Complex64]) -> CMatrix {
        let d = self.dim;
        let mut m = CMatrix::identity(d);
        for i in 0..d {
            for j in 0..d {
                let mut acc = m.get(i, j);
                for k in 1..=self.lag {
                    acc -= phases[k - 1] * self.coefficient(t, k, i, j);
                }
                m.set(i, j, acc);
            }
        }
        m
    }
}

/// A multichannel TVARX system: one fitted equation per channel.
#[derive(Debug, Clone)]
pub struct FittedSystem {
    channels: Vec<usize>,
    equations: Vec<TvarxModel>,
    covariance: RecursiveCovariance,
    lag: usize,
}

impl FittedSystem {
    pub fn channels(&self) -> &[usize] {
        &self.channels
    }

    pub fn equations(&self) -> &[TvarxModel] {
        &self.equations
    }

    pub fn covariance(&self) -> &RecursiveCovariance {
        &self.covariance
    }

    pub fn n_samples(&self) -> usize {
        self.equations[0].n_samples()
    }

    pub fn residuals(&self) -> Vec<&[f64]> {
        self.equations.iter().map(|e| e.residuals.as_slice()).collect()
    }

    /// Coefficient series in system variable order.
    pub fn var_system(&self) -> VarSystem {
        let d = self.channels.len();
        let n = self.n_samples();
        let lag = self.lag;
        let mut coefficients = vec![0.0; n * lag * d * d];
        for (i, eq) in self.equations.iter().enumerate() {
            for j in 0..d {
                let slot = equation_slot(i, j);
                let series = &eq.timevarying[slot];
                for k in 1..=lag {
                    let row = series.row(k - 1);
                    for t in 0..n {
                        coefficients[((t * lag + k - 1) * d + i) * d + j] = row[t];
                    }
                }
            }
        }
        let mut covariance = vec![0.0; n * d * d];
        for t in 0..n {
            for i in 0..d {
                for j in 0..d {
                    covariance[(t * d + i) * d + j] = self.covariance.entry(t, i, j);
                }
            }
        }
        VarSystem::new(d, lag, n, coefficients, covariance).expect("consistent sizes")
    }
}

/// Variable slot of system variable `j` inside equation `i`'s model, whose
/// predictors are the other channels in system order.
pub(crate) fn equation_slot(i: usize, j: usize) -> usize {
    if j == i {
        0
    } else if j < i {
        j + 1
    } else {
        j
    }
}

/// Fits every equation of the system over `channels` (system variable order).
pub fn fit_system(signals: ArrayView2<f64>, channels: &[usize], config: &TvarxConfig) -> Result<FittedSystem> {
    if channels.is_empty() {
        return Err(CoreError::InvalidSpec("empty channel set".into()));
    }
    for (a, &c) in channels.iter().enumerate() {
        if channels[..a].contains(&c) {
            return Err(CoreError::InvalidSpec(format!("channel {c} listed twice")));
        }
    }
    let lags = vec![config.lag; channels.len()];
    let equations: Vec<TvarxModel> = (0..channels.len())
        .into_par_iter()
        .map(|i| {
            let predictors: Vec<usize> = channels
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &c)| c)
                .collect();
            fit_tvarx(signals, channels[i], &predictors, &lags, config)
        })
        .collect::<Result<_>>()?;
    let start = equations[0].start_sample;
    let n = equations[0].n_samples();
    let residuals: Vec<&[f64]> = equations.iter().map(|e| e.residuals.as_slice()).collect();
    let covariance = RecursiveCovariance::from_series(
        &residuals,
        start,
        config.forgetting,
        config.init_window.min(n - start),
    )?;
    Ok(FittedSystem {
        channels: channels.to_vec(),
        equations,
        covariance,
        lag: config.lag,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SystemKind {
    /// Variables ordered (X, Z-block).
    Restricted,
    /// Variables ordered (X, Y, Z-block).
    Full,
}

/// A system after zero-lag Geweke normalization.
#[derive(Debug, Clone)]
pub struct NormalizedSystem {
    kind: SystemKind,
    dim: usize,
    lag: usize,
    n_samples: usize,
    /// `[t][i][j]`, unit lower triangular.
    zero_lag: Vec<f64>,
    /// `[t][k-1][i][j]`, zero-lag matrix times the raw lag matrix.
    lag_coefficients: Vec<f64>,
    /// `[t][i][j]`, block diagonal over the X, Y and Z groups.
    noise: Vec<f64>,
}

impl NormalizedSystem {
    pub fn kind(&self) -> SystemKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn lag(&self) -> usize {
        self.lag
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    fn block(&self, data: &[f64], offset: usize) -> Array2<f64> {
        let d = self.dim;
        Array2::from_shape_vec((d, d), data[offset * d * d..(offset + 1) * d * d].to_vec())
            .expect("square block")
    }

    pub fn zero_lag(&self, t: usize) -> Array2<f64> {
        self.block(&self.zero_lag, t)
    }

    pub fn lag_coefficient(&self, t: usize, k: usize) -> Array2<f64> {
        self.block(&self.lag_coefficients, t * self.lag + k - 1)
    }

    pub fn noise_covariance(&self, t: usize) -> Array2<f64> {
        self.block(&self.noise, t)
    }

    /// Normalized residuals `eps(t) = Z0(t) e(t)` for raw residual series.
    pub fn apply_zero_lag(&self, residuals: &[&[f64]]) -> Result<Vec<Vec<f64>>> {
        let d = self.dim;
        if residuals.len() != d || residuals.iter().any(|r| r.len() != self.n_samples) {
            return Err(CoreError::Shape("residual series do not match the system".into()));
        }
        let mut out = vec![vec![0.0; self.n_samples]; d];
        for t in 0..self.n_samples {
            for i in 0..d {
                out[i][t] = (0..d)
                    .map(|j| self.zero_lag[(t * d + i) * d + j] * residuals[j][t])
                    .sum();
            }
        }
        Ok(out)
    }
}

/// Group index of each variable: 0 = X, 1 = Y, 2 = Z-block.
fn groups(kind: SystemKind, dim: usize) -> Vec<usize> {
    (0..dim)
        .map(|i| match (kind, i) {
            (_, 0) => 0,
            (SystemKind::Full, 1) => 1,
            _ => 2,
        })
        .collect()
}

fn normalize(system: &VarSystem, kind: SystemKind) -> Result<NormalizedSystem> {
    let d = system.dim;
    if kind == SystemKind::Full && d < 2 {
        return Err(CoreError::Shape("full system needs at least X and Y".into()));
    }
    let n = system.n_samples;
    let lag = system.lag;
    let group = groups(kind, d);
    let mut zero_lag = vec![0.0; n * d * d];
    let mut lag_coefficients = vec![0.0; n * lag * d * d];
    let mut noise = vec![0.0; n * d * d];
    let mut z0 = Array2::<f64>::zeros((d, d));
    for t in 0..n {
        let xi = system.covariance(t);
        zero_lag_matrix(&xi, kind, t, &mut z0)?;
        let transformed = z0.dot(&xi).dot(&z0.t());
        for i in 0..d {
            for j in 0..d {
                zero_lag[(t * d + i) * d + j] = z0[[i, j]];
                if group[i] == group[j] {
                    noise[(t * d + i) * d + j] = transformed[[i, j]];
                }
            }
        }
        for k in 1..=lag {
            let a = z0.dot(&system.lag_matrix(t, k));
            let off = (t * lag + k - 1) * d * d;
            for (slot, &v) in lag_coefficients[off..off + d * d].iter_mut().zip(a.iter()) {
                *slot = v;
            }
        }
    }
    Ok(NormalizedSystem {
        kind,
        dim: d,
        lag,
        n_samples: n,
        zero_lag,
        lag_coefficients,
        noise,
    })
}

/// Writes the zero-lag normalization matrix for residual covariance `xi`.
pub(crate) fn zero_lag_matrix(xi: &Array2<f64>, kind: SystemKind, t: usize, out: &mut Array2<f64>) -> Result<()> {
    let d = xi.nrows();
    let sxx = xi[[0, 0]];
    if !(sxx > 0.0) {
        return Err(CoreError::DegenerateVariance { t });
    }
    out.fill(0.0);
    for i in 0..d {
        out[[i, i]] = 1.0;
    }
    match kind {
        SystemKind::Restricted => {
            for z in 1..d {
                out[[z, 0]] = -xi[[z, 0]] / sxx;
            }
        }
        SystemKind::Full => {
            // Conditional covariances given X.
            let cond = |a: usize, b: usize| xi[[a, b]] - xi[[a, 0]] * xi[[0, b]] / sxx;
            let syy = cond(1, 1);
            if !(syy > 1e-12 * xi[[1, 1]].abs()) || !(syy > 0.0) {
                return Err(CoreError::DegenerateVariance { t });
            }
            out[[1, 0]] = -xi[[1, 0]] / sxx;
            for z in 2..d {
                let g = -cond(z, 1) / syy;
                // Row z of D2 * D1.
                out[[z, 1]] = g;
                out[[z, 0]] = -xi[[z, 0]] / sxx + g * out[[1, 0]];
            }
        }
    }
    Ok(())
}

/// Zero-lag normalization of a restricted system ordered (X, Z-block).
pub fn normalize_restricted(system: &VarSystem) -> Result<NormalizedSystem> {
    normalize(system, SystemKind::Restricted)
}

/// Zero-lag normalization `D = D2 D1` of a full system ordered (X, Y, Z-block).
pub fn normalize_full(system: &VarSystem) -> Result<NormalizedSystem> {
    normalize(system, SystemKind::Full)
}

/// `exp(-i 2 pi k f / fs)` for `k = 1..=lag`.
pub fn lag_phases(f: f64, sampling_rate: f64, lag: usize) -> Vec<Complex64> {
    (1..=lag)
        .map(|k| Complex64::from_polar(1.0, -2.0 * std::f64::consts::PI * k as f64 * f / sampling_rate))
        .collect()
}

/// Coefficient matrix of the normalized system at `(t, f)`: the zero-lag
/// matrix minus the phase-weighted normalized lag matrices.
pub fn spectral_matrix(system: &NormalizedSystem, t: usize, f: f64, sampling_rate: f64) -> Result<CMatrix> {
    let nyquist = sampling_rate / 2.0;
    if !(0.0..=nyquist).contains(&f) {
        return Err(CoreError::OutOfRange {
            value: f,
            low: 0.0,
            high: nyquist,
        });
    }
    if t >= system.n_samples {
        return Err(CoreError::Shape(format!("sample {t} beyond {}", system.n_samples)));
    }
    let d = system.dim;
    let phases = lag_phases(f, sampling_rate, system.lag);
    let mut m = CMatrix::zeros(d);
    for i in 0..d {
        for j in 0..d {
            let mut acc = Complex64::new(system.zero_lag[(t * d + i) * d + j], 0.0);
            for k in 1..=system.lag {
                acc -= phases[k - 1] * system.lag_coefficients[((t * system.lag + k - 1) * d + i) * d + j];
            }
            m.set(i, j, acc);
        }
    }
    Ok(m)
}

/// Transfer functions at one `(t, f)` and their combination `R = G_hat^-1 H`.
#[derive(Debug, Clone)]
pub struct CombinedTransfer {
    /// Restricted transfer matrix `G = A^-1`.
    pub g: CMatrix,
    /// Full transfer matrix `H = B^-1`.
    pub h: CMatrix,
    pub r: CMatrix,
}

impl CombinedTransfer {
    pub fn r_xx(&self) -> Complex64 {
        self.r.get(0, 0)
    }

    pub fn r_xy(&self) -> Complex64 {
        self.r.get(0, 1)
    }

    pub fn r_xz(&self) -> Vec<Complex64> {
        self.r.row(0)[2..].to_vec()
    }
}

/// Embeds a restricted (X, Z) matrix in the full (X, Y, Z) layout with an
/// identity Y slot.
pub fn embed_restricted(g: &CMatrix) -> CMatrix {
    let m = g.dim();
    let full_index = |a: usize| if a == 0 { 0 } else { a + 1 };
    let mut out = CMatrix::identity(m + 1);
    for a in 0..m {
        for b in 0..m {
            out.set(full_index(a), full_index(b), g.get(a, b));
        }
    }
    out
}

pub fn combine_transfer(restricted: &CMatrix, full: &CMatrix, t: usize, f: f64) -> Result<CombinedTransfer> {
    if full.dim() != restricted.dim() + 1 {
        return Err(CoreError::Shape(format!(
            "restricted size {} does not match full size {}",
            restricted.dim(),
            full.dim()
        )));
    }
    let singular = || CoreError::Conditioning { t, freq: f };
    let g = restricted.inverse().ok_or_else(singular)?;
    let h = full.inverse().ok_or_else(singular)?;
    let g_inv = embed_restricted(&g).inverse().ok_or_else(singular)?;
    let r = g_inv.matmul(&h);
    Ok(CombinedTransfer { g, h, r })
}

/// Parts of the X-innovation spectrum: intrinsic, from Y, from the Z-block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectrumParts {
    pub intrinsic: f64,
    pub from_y: f64,
    pub from_z: f64,
}

impl SpectrumParts {
    pub fn total(&self) -> f64 {
        self.intrinsic + self.from_y + self.from_z
    }
}

/// Decomposes `R_x Sigma R_x^*` over the X, Y and Z groups of a block
/// diagonal noise covariance.
pub fn spectrum_parts(r_row: &[Complex64], noise: ArrayView2<f64>) -> SpectrumParts {
    let d = r_row.len();
    let intrinsic = r_row[0].norm_sqr() * noise[[0, 0]];
    let from_y = r_row[1].norm_sqr() * noise[[1, 1]];
    let mut from_z = 0.0;
    for i in 2..d {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in 2..d {
            acc += noise[[i, j]] * r_row[j].conj();
        }
        from_z += (r_row[i] * acc).re;
    }
    SpectrumParts {
        intrinsic,
        from_y,
        from_z,
    }
}

/// `F = ln(S / intrinsic)`, clamped at zero.
pub fn causality_from_parts(parts: SpectrumParts, t: usize, f: f64) -> Result<f64> {
    if !(parts.intrinsic > 0.0) {
        return Err(CoreError::DegenerateSpectrum { t, freq: f });
    }
    let ratio = parts.total().abs() / parts.intrinsic;
    Ok(ratio.ln().max(0.0))
}

/// Conditional causality from the combined matrix and normalized noise covariance at `t`.
pub fn conditional_causality(r: &CMatrix, noise: ArrayView2<f64>, t: usize, f: f64) -> Result<f64> {
    if noise.dim() != (r.dim(), r.dim()) {
        return Err(CoreError::Shape("noise covariance does not match transfer size".into()));
    }
    causality_from_parts(spectrum_parts(r.row(0), noise), t, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn constant_system(a: &[Array2<f64>], xi: Array2<f64>) -> VarSystem {
        VarSystem::constant(a, &xi, 4).unwrap()
    }

    #[test]
    fn uncorrelated_restricted_is_identity() {
        let a1 = array![[0.5, 0.1], [0.2, -0.3]];
        let sys = constant_system(&[a1.clone()], array![[2.0, 0.0], [0.0, 1.0]]);
        let norm = normalize_restricted(&sys).unwrap();
        assert_eq!(norm.zero_lag(2), Array2::eye(2));
        assert_eq!(norm.lag_coefficient(2, 1), a1);
    }

    #[test]
    fn scalar_restricted_matches_two_by_two() {
        let (s1, d1, s2) = (2.0, 0.6, 1.5);
        let sys = constant_system(&[Array2::zeros((2, 2))], array![[s1, d1], [d1, s2]]);
        let c = normalize_restricted(&sys).unwrap().zero_lag(0);
        assert_eq!(c, array![[1.0, 0.0], [-d1 / s1, 1.0]]);
    }

    #[test]
    fn scalar_full_matches_three_by_three() {
        let xi = array![[2.0, 0.5, 0.3], [0.5, 1.5, 0.4], [0.3, 0.4, 1.2]];
        let sys = constant_system(&[Array2::zeros((3, 3))], xi.clone());
        let d = normalize_full(&sys).unwrap().zero_lag(0);
        let (sxx, syx, szx) = (xi[[0, 0]], xi[[1, 0]], xi[[2, 0]]);
        let d1 = array![[1.0, 0.0, 0.0], [-syx / sxx, 1.0, 0.0], [-szx / sxx, 0.0, 1.0]];
        let num = xi[[2, 1]] - xi[[2, 0]] * xi[[0, 1]] / sxx;
        let den = xi[[1, 1]] - xi[[1, 0]] * xi[[0, 1]] / sxx;
        let d2 = array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, -num / den, 1.0]];
        let expected = d2.dot(&d1);
        for (a, b) in d.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn full_normalization_decorrelates_groups() {
        let xi = array![
            [2.0, 0.5, 0.3, 0.1],
            [0.5, 1.5, 0.4, -0.2],
            [0.3, 0.4, 1.2, 0.3],
            [0.1, -0.2, 0.3, 0.9]
        ];
        let sys = constant_system(&[Array2::zeros((4, 4))], xi.clone());
        let norm = normalize_full(&sys).unwrap();
        let d = norm.zero_lag(1);
        let full = d.dot(&xi).dot(&d.t());
        for (i, j) in [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3)] {
            assert!(full[[i, j]].abs() < 1e-14, "{i},{j}: {}", full[[i, j]]);
        }
        assert_eq!(full[[0, 0]], 2.0);
        // Within-Z correlation is kept.
        assert!(norm.noise_covariance(1)[[2, 3]].abs() > 0.0);
    }

    #[test]
    fn degenerate_variances() {
        let sys = constant_system(&[Array2::zeros((2, 2))], array![[0.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(normalize_restricted(&sys), Err(CoreError::DegenerateVariance { t: 0 })));
        let sys = constant_system(&[Array2::zeros((2, 2))], array![[1.0, 1.0], [1.0, 1.0]]);
        assert!(matches!(normalize_full(&sys), Err(CoreError::DegenerateVariance { .. })));
    }

    #[test]
    fn spectral_examples() {
        let zero = constant_system(&[Array2::zeros((2, 2))], Array2::eye(2));
        let norm = normalize_restricted(&zero).unwrap();
        for f in [0.0, 10.0, 125.0] {
            assert!(spectral_matrix(&norm, 0, f, 250.0).unwrap().distance_from_identity() == 0.0);
        }
        let sys = constant_system(&[array![[0.5, 0.0], [0.0, 0.0]]], Array2::eye(2));
        let norm = normalize_restricted(&sys).unwrap();
        let a = spectral_matrix(&norm, 0, 62.5, 250.0).unwrap();
        assert!((a.get(0, 0) - Complex64::new(1.0, 0.5)).norm() < 1e-15);
        let a0 = spectral_matrix(&norm, 0, 0.0, 250.0).unwrap();
        assert_eq!(a0.get(0, 0), Complex64::new(0.5, 0.0));
        assert!(matches!(
            spectral_matrix(&norm, 0, 126.0, 250.0),
            Err(CoreError::OutOfRange { .. })
        ));
    }

    #[test]
    fn identity_systems_combine_to_identity() {
        let r = combine_transfer(&CMatrix::identity(3), &CMatrix::identity(4), 0, 1.0).unwrap();
        assert_eq!(r.r.distance_from_identity(), 0.0);
    }

    #[test]
    fn no_cross_terms_gives_zero() {
        let mut r = CMatrix::identity(3);
        r.set(0, 0, Complex64::new(0.7, -0.2));
        r.set(1, 2, Complex64::new(0.3, 0.1));
        let noise = array![[1.3, 0.0, 0.0], [0.0, 0.8, 0.0], [0.0, 0.0, 0.4]];
        assert_eq!(conditional_causality(&r, noise.view(), 0, 1.0).unwrap(), 0.0);
        r.set(0, 1, Complex64::new(0.3, 0.1));
        assert!(conditional_causality(&r, noise.view(), 0, 1.0).unwrap() > 0.0);
        let zero = Array2::zeros((3, 3));
        assert!(matches!(
            conditional_causality(&r, zero.view(), 3, 1.0),
            Err(CoreError::DegenerateSpectrum { t: 3, .. })
        ));
    }

    #[test]
    fn permutation_round_trip() {
        let a1 = array![[0.5, 0.1, 0.0], [0.2, -0.3, 0.1], [0.0, 0.4, 0.2]];
        let xi = array![[2.0, 0.5, 0.3], [0.5, 1.5, 0.4], [0.3, 0.4, 1.2]];
        let sys = constant_system(&[a1.clone()], xi.clone());
        let p = sys.permuted(&[2, 0, 1]).unwrap();
        assert_eq!(p.coefficient(0, 1, 0, 1), a1[[2, 0]]);
        assert_eq!(p.covariance(0)[[1, 2]], xi[[0, 1]]);
        assert!(sys.permuted(&[0, 0, 1]).is_err());
    }

    #[test]
    fn equation_slots() {
        assert_eq!(equation_slot(2, 2), 0);
        assert_eq!(equation_slot(2, 0), 1);
        assert_eq!(equation_slot(2, 1), 2);
        assert_eq!(equation_slot(2, 3), 3);
        assert_eq!(equation_slot(0, 1), 1);
    }
}
