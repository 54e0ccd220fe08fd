#![allow(dead_code)]

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn white(n: usize, channels: usize, seed: u64) -> Array2<f64> {
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    Array2::from_shape_fn((channels, n), |_| normal.sample(&mut r))
}

/// Damped resonator coefficients `(2 r cos w, -r^2)` at `freq` Hz.
pub fn resonator(freq: f64, radius: f64, fs: f64) -> (f64, f64) {
    let w = 2.0 * std::f64::consts::PI * freq / fs;
    (2.0 * radius * w.cos(), -radius * radius)
}

/// Channels of independent 10 Hz resonators; `coupling(t)` returns
/// `(source, sink, gain)` links applied at lag 1.
pub fn resonator_network<F>(n: usize, channels: usize, seed: u64, burn: usize, coupling: F) -> Array2<f64>
where
    F: Fn(usize) -> Vec<(usize, usize, f64)>,
{
    let (a1, a2) = resonator(10.0, 0.95, 250.0);
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let total = n + burn;
    let mut x = Array2::<f64>::zeros((channels, total));
    for t in 2..total {
        let links = if t >= burn { coupling(t - burn) } else { Vec::new() };
        for c in 0..channels {
            let mut v = a1 * x[[c, t - 1]] + a2 * x[[c, t - 2]] + normal.sample(&mut r);
            for &(s, k, g) in &links {
                if k == c {
                    v += g * x[[s, t - 1]];
                }
            }
            x[[c, t]] = v;
        }
    }
    x.slice(ndarray::s![.., burn..]).to_owned()
}

pub fn mean(v: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for x in v {
        s += x;
        n += 1;
    }
    s / n as f64
}

/// Classical stationary conditional spectral Granger causality
/// `F_{y -> x | z}(f)` from full-sample least-squares VAR fits.
pub mod stationary {
    use nalgebra::{Complex, DMatrix, DVector};
    use ndarray::Array2;

    pub struct VarFit {
        /// `a[k-1]` is the lag-k coefficient matrix.
        pub a: Vec<DMatrix<f64>>,
        pub sigma: DMatrix<f64>,
    }

    pub fn fit_var(signals: &Array2<f64>, channels: &[usize], p: usize) -> VarFit {
        let d = channels.len();
        let n = signals.ncols();
        let rows = n - p;
        let design = DMatrix::from_fn(rows, d * p, |r, c| {
            let (k, j) = (c / d + 1, c % d);
            signals[[channels[j], r + p - k]]
        });
        let gram = design.transpose() * &design;
        let chol = gram.cholesky().expect("full-rank design");
        let mut a = vec![DMatrix::zeros(d, d); p];
        let mut resid = DMatrix::zeros(rows, d);
        for i in 0..d {
            let y = DVector::from_fn(rows, |r, _| signals[[channels[i], r + p]]);
            let beta = chol.solve(&(design.transpose() * &y));
            for c in 0..d * p {
                a[c / d][(i, c % d)] = beta[c];
            }
            let e = &y - &design * &beta;
            resid.set_column(i, &e);
        }
        let sigma = resid.transpose() * &resid / rows as f64;
        VarFit { a, sigma }
    }

    fn spectral(fit: &VarFit, f: f64, fs: f64) -> DMatrix<Complex<f64>> {
        let d = fit.sigma.nrows();
        let mut m = DMatrix::<Complex<f64>>::identity(d, d);
        for (k, a) in fit.a.iter().enumerate() {
            let z = Complex::from_polar(1.0, -2.0 * std::f64::consts::PI * (k + 1) as f64 * f / fs);
            m -= a.map(|v| Complex::new(v, 0.0)) * z;
        }
        m
    }

    /// Channel order of `full` is (x, y, z...), of `restricted` (x, z...).
    pub fn conditional_gc(full: &VarFit, restricted: &VarFit, f: f64, fs: f64) -> f64 {
        let d = full.sigma.nrows();
        let s = &full.sigma;
        let mut d1 = DMatrix::<f64>::identity(d, d);
        for i in 1..d {
            d1[(i, 0)] = -s[(i, 0)] / s[(0, 0)];
        }
        let s1 = &d1 * s * d1.transpose();
        let mut d2 = DMatrix::<f64>::identity(d, d);
        for i in 2..d {
            d2[(i, 1)] = -s1[(i, 1)] / s1[(1, 1)];
        }
        let dm = &d2 * &d1;
        let st = &dm * s * dm.transpose();
        let b = dm.map(|v| Complex::new(v, 0.0)) * spectral(full, f, fs);
        let h = b.try_inverse().unwrap();

        let sr = &restricted.sigma;
        let mut c = DMatrix::<f64>::identity(d - 1, d - 1);
        for i in 1..d - 1 {
            c[(i, 0)] = -sr[(i, 0)] / sr[(0, 0)];
        }
        let a = c.map(|v| Complex::new(v, 0.0)) * spectral(restricted, f, fs);
        let g = a.try_inverse().unwrap();
        let mut g_hat = DMatrix::<Complex<f64>>::identity(d, d);
        let idx = |i: usize| if i == 0 { 0 } else { i + 1 };
        for i in 0..d - 1 {
            for j in 0..d - 1 {
                g_hat[(idx(i), idx(j))] = g[(i, j)];
            }
        }
        let r = g_hat.try_inverse().unwrap() * h;
        let intrinsic = r[(0, 0)].norm_sqr() * st[(0, 0)];
        let mut total = intrinsic + r[(0, 1)].norm_sqr() * st[(1, 1)];
        for i in 2..d {
            for j in 2..d {
                total += (r[(0, i)] * st[(i, j)] * r[(0, j)].conj()).re;
            }
        }
        (total / intrinsic).ln()
    }
}

/// Brute-force greedy orthogonal forward regression without regularization:
/// every step re-orthogonalizes each unused column against all chosen ones
/// from scratch and takes the largest error reduction ratio.
pub fn classical_ofr(design: &Array2<f64>, target: &[f64], steps: usize) -> Vec<usize> {
    let (n, m) = design.dim();
    let xx: f64 = target.iter().map(|v| v * v).sum();
    let mut chosen: Vec<usize> = Vec::new();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for _ in 0..steps.min(m) {
        let mut best = None;
        let mut best_err = -1.0;
        for j in 0..m {
            if chosen.contains(&j) {
                continue;
            }
            let mut h: Vec<f64> = (0..n).map(|i| design[[i, j]]).collect();
            for q in &basis {
                let qq: f64 = q.iter().map(|v| v * v).sum();
                let c: f64 = q.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>() / qq;
                for (hi, qi) in h.iter_mut().zip(q) {
                    *hi -= c * qi;
                }
            }
            let hh: f64 = h.iter().map(|v| v * v).sum();
            let orig: f64 = (0..n).map(|i| design[[i, j]].powi(2)).sum();
            if hh < 1e-12 * orig.max(1.0) {
                continue;
            }
            let hx: f64 = h.iter().zip(target).map(|(a, b)| a * b).sum();
            let err = hx * hx / (hh * xx);
            if err > best_err {
                best_err = err;
                best = Some((j, h));
            }
        }
        match best {
            Some((j, h)) => {
                chosen.push(j);
                basis.push(h);
            }
            None => break,
        }
    }
    chosen
}

/// Least squares through the normal equations.
pub fn normal_equations(phi: &Array2<f64>, x: &[f64]) -> Vec<f64> {
    let (n, q) = phi.dim();
    let a = nalgebra::DMatrix::from_fn(n, q, |i, j| phi[[i, j]]);
    let b = nalgebra::DVector::from_column_slice(x);
    let sol = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * b));
    sol.iter().copied().collect()
}

/// Two-channel ARX data: channel 1 is an observed white drive `u`, channel 0
/// follows `x(t) = a(t) x(t-1) + b(t) u(t-1) + e(t)`. The innovation `e` has
/// 1 / 10^(snr_db/10) of the power of the noise-free response.
pub fn arx_pair<A, B>(n: usize, seed: u64, snr_db: f64, a: A, b: B) -> Array2<f64>
where
    A: Fn(usize) -> f64,
    B: Fn(usize) -> f64,
{
    let mut r = rng(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let u: Vec<f64> = (0..n).map(|_| normal.sample(&mut r)).collect();
    let respond = |e: &dyn Fn(usize) -> f64| {
        let mut x = vec![0.0; n];
        for t in 1..n {
            x[t] = a(t) * x[t - 1] + b(t) * u[t - 1] + e(t);
        }
        x
    };
    let clean = respond(&|_| 0.0);
    let power = clean.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let sigma = (power / 10f64.powf(snr_db / 10.0)).sqrt();
    let noise: Vec<f64> = (0..n).map(|_| sigma * normal.sample(&mut r)).collect();
    let x = respond(&|t| noise[t]);
    let mut out = Array2::zeros((2, n));
    out.row_mut(0).assign(&ndarray::Array1::from(x));
    out.row_mut(1).assign(&ndarray::Array1::from(u));
    out
}

/// Root mean square of `est - truth` over `t` in `range`, skipping `exclude`.
pub fn rmse<F, E>(est: ndarray::ArrayView1<f64>, truth: F, range: std::ops::Range<usize>, exclude: E) -> f64
where
    F: Fn(usize) -> f64,
    E: Fn(usize) -> bool,
{
    let mut s = 0.0;
    let mut k = 0;
    for t in range {
        if exclude(t) {
            continue;
        }
        s += (est[t] - truth(t)).powi(2);
        k += 1;
    }
    (s / k as f64).sqrt()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
