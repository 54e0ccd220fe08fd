//! Regularized orthogonal forward regression (ROFR).
//!
//! Greedy forward selection of dictionary columns. At every step the remaining
//! candidates are orthogonalized against the terms already chosen and scored by
//! the regularized error reduction ratio
//!
//! ```text
//! RERR(h) = (h' r)^2 / (X'X (h'h + rho))
//! ```
//!
//! Model size is fixed by the minimum of the penalized error-to-signal ratio
//!
//! ```text
//! PESR(a) = (1 - sum_{m<=a} RERR_m) / (1 - mu a / N)^2
//! ```

use ndarray::Array2;

use crate::error::{CoreError, Result};
use crate::tvarx::regression::RegressionProblem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Regularization {
    Fixed(f64),
    /// Multiple of the mean squared column norm of the design matrix.
    Relative(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RofrConfig {
    pub regularization: Regularization,
    pub pesr_mu: f64,
    /// Candidates with `h'h < 10^-exponent` are dropped.
    pub elimination_exponent: u32,
    pub max_terms: usize,
    /// Consecutive PESR increases tolerated before the search stops.
    pub pesr_patience: usize,
}

impl Default for RofrConfig {
    fn default() -> Self {
        RofrConfig {
            regularization: Regularization::Relative(1e-4),
            pesr_mu: 8.0,
            elimination_exponent: 12,
            max_terms: 60,
            pesr_patience: 5,
        }
    }
}

impl RofrConfig {
    pub fn unregularized() -> Self {
        RofrConfig {
            regularization: Regularization::Fixed(0.0),
            ..Default::default()
        }
    }

    pub fn threshold(&self) -> f64 {
        10f64.powi(-(self.elimination_exponent as i32))
    }

    pub fn validate(&self) -> Result<()> {
        let rho_ok = match self.regularization {
            Regularization::Fixed(r) | Regularization::Relative(r) => r >= 0.0 && r.is_finite(),
        };
        if !rho_ok {
            return Err(CoreError::InvalidConfig("regularization must be >= 0".into()));
        }
        if !(self.pesr_mu > 0.0) {
            return Err(CoreError::InvalidConfig("PESR mu must be positive".into()));
        }
        if self.max_terms == 0 {
            return Err(CoreError::InvalidConfig("max_terms must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RofrResult {
    /// Column indices `L_1..L_q` of the final model, in selection order.
    pub selected: Vec<usize>,
    /// RERR of each selected term.
    pub rerr: Vec<f64>,
    /// PESR after every executed step (may extend past `q`).
    pub pesr: Vec<f64>,
    /// Every column chosen during the search, including those past `q`.
    pub search_path: Vec<usize>,
    /// Orthogonalized columns `h_1..h_q`.
    pub orthogonal: Vec<Vec<f64>>,
    /// Unit upper-triangular `V` with `Phi = Q V`.
    pub triangular: Array2<f64>,
    pub coefficients: Vec<f64>,
    pub regularization: f64,
}

impl RofrResult {
    pub fn term_count(&self) -> usize {
        self.selected.len()
    }

    /// `Q` as an `N x q` matrix.
    pub fn orthogonal_matrix(&self) -> Array2<f64> {
        let rows = self.orthogonal.first().map_or(0, Vec::len);
        Array2::from_shape_fn((rows, self.orthogonal.len()), |(i, j)| self.orthogonal[j][i])
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Squared-norm screen: absolute below unit column energy, relative above it.
fn eliminated(hh: f64, original: f64, eps: f64) -> bool {
    !(hh >= eps * original.max(1.0))
}

pub fn rofr_select(problem: &RegressionProblem, config: &RofrConfig) -> Result<RofrResult> {
    config.validate()?;
    let n = problem.rows();
    let m_total = problem.cols();
    let x = problem.target();
    let xx = dot(x, x);
    let eps = config.threshold();

    let norms: Vec<f64> = (0..m_total)
        .map(|m| {
            let c = problem.column(m);
            dot(c, c)
        })
        .collect();
    let rho = match config.regularization {
        Regularization::Fixed(r) => r,
        Regularization::Relative(c) => c * norms.iter().sum::<f64>() / m_total as f64,
    };

    let mut active: Vec<usize> = (0..m_total)
        .filter(|&m| !eliminated(norms[m], norms[m], eps))
        .collect();
    if active.is_empty() {
        return Err(CoreError::EmptyModel);
    }
    if xx == 0.0 {
        return Ok(RofrResult {
            selected: Vec::new(),
            rerr: Vec::new(),
            pesr: Vec::new(),
            search_path: Vec::new(),
            orthogonal: Vec::new(),
            triangular: Array2::zeros((0, 0)),
            coefficients: Vec::new(),
            regularization: rho,
        });
    }

    // Per-candidate squared norm of the orthogonalized column and its
    // projection on X, kept current by rank-one downdates.
    let mut hh = norms.clone();
    let mut g: Vec<f64> = (0..m_total).map(|m| dot(problem.column(m), x)).collect();

    let mut residual = x.to_vec();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    let mut basis_norms: Vec<f64> = Vec::new();
    let mut v_columns: Vec<Vec<f64>> = Vec::new();
    let mut path = Vec::new();
    let mut rerr = Vec::new();
    let mut pesr: Vec<f64> = Vec::new();
    let mut explained = 0.0;
    let mut increases = 0usize;

    while path.len() < config.max_terms && !active.is_empty() {
        let alpha = path.len() + 1;
        let penalty = 1.0 - config.pesr_mu * alpha as f64 / n as f64;
        if penalty <= 0.0 {
            break;
        }

        let mut best = None;
        let mut best_score = f64::NEG_INFINITY;
        for &m in &active {
            let score = g[m] * g[m] / (xx * (hh[m] + rho));
            if score > best_score {
                best_score = score;
                best = Some(m);
            }
        }
        let chosen = best.expect("active set is non-empty");

        // Explicit orthogonalization of the chosen column, two MGS passes.
        let mut h = problem.column(chosen).to_vec();
        let mut v_col = vec![0.0; basis.len() + 1];
        for _ in 0..2 {
            for (v, (q, qq)) in basis.iter().zip(&basis_norms).enumerate() {
                let a = dot(&h, q) / qq;
                axpy(-a, q, &mut h);
                v_col[v] += a;
            }
        }
        v_col[basis.len()] = 1.0;
        let h_norm = dot(&h, &h);
        let h_r = dot(&h, &residual);
        let term_rerr = h_r * h_r / (xx * (h_norm + rho));
        axpy(-h_r / h_norm, &h, &mut residual);

        let h_x = dot(&h, x);
        active.retain(|&m| m != chosen);
        for &m in &active {
            let col = problem.column(m);
            let a = dot(col, &h) / h_norm;
            hh[m] -= a * a * h_norm;
            g[m] -= a * h_x;
            if hh[m] < 1e-6 * norms[m] {
                // Downdate lost precision; rebuild this candidate exactly.
                let mut hm = col.to_vec();
                for (q, qq) in basis.iter().zip(&basis_norms).chain(std::iter::once((&h, &h_norm))) {
                    let c = dot(&hm, q) / qq;
                    axpy(-c, q, &mut hm);
                }
                hh[m] = dot(&hm, &hm);
                g[m] = dot(&hm, x);
            }
        }
        active.retain(|&m| !eliminated(hh[m], norms[m], eps));

        basis.push(h);
        basis_norms.push(h_norm);
        v_columns.push(v_col);
        path.push(chosen);
        rerr.push(term_rerr);
        explained += term_rerr;

        let value = (1.0 - explained).max(0.0) / (penalty * penalty);
        if let Some(&prev) = pesr.last() {
            if value > prev {
                increases += 1;
            } else {
                increases = 0;
            }
        }
        pesr.push(value);
        if increases >= config.pesr_patience {
            break;
        }
        if dot(&residual, &residual) <= 1e-26 * xx {
            break;
        }
    }

    let q = pesr
        .iter()
        .enumerate()
        .fold((0usize, f64::INFINITY), |(bi, bv), (i, &v)| {
            if v < bv {
                (i, v)
            } else {
                (bi, bv)
            }
        })
        .0
        + 1;

    let mut triangular = Array2::zeros((q, q));
    for (j, col) in v_columns.iter().take(q).enumerate() {
        for (i, &value) in col.iter().enumerate() {
            triangular[[i, j]] = value;
        }
    }
    basis.truncate(q);

    let mut result = RofrResult {
        selected: path[..q].to_vec(),
        rerr: rerr[..q].to_vec(),
        pesr,
        search_path: path,
        orthogonal: basis,
        triangular,
        coefficients: Vec::new(),
        regularization: rho,
    };
    result.coefficients = solve_parameters(&result, x)?;
    Ok(result)
}

/// Solves `V pi = K` with `K_i = h_i' X / h_i' h_i` by back-substitution.
pub fn solve_parameters(result: &RofrResult, target: &[f64]) -> Result<Vec<f64>> {
    let q = result.orthogonal.len();
    if result.triangular.dim() != (q, q) {
        return Err(CoreError::Shape("triangular factor does not match basis".into()));
    }
    if let Some(h) = result.orthogonal.first() {
        if h.len() != target.len() {
            return Err(CoreError::Shape(format!(
                "target has {} rows, basis has {}",
                target.len(),
                h.len()
            )));
        }
    }
    let k: Vec<f64> = result
        .orthogonal
        .iter()
        .map(|h| dot(h, target) / dot(h, h))
        .collect();
    let mut pi = vec![0.0; q];
    for i in (0..q).rev() {
        let mut acc = k[i];
        for j in i + 1..q {
            acc -= result.triangular[[i, j]] * pi[j];
        }
        pi[i] = acc / result.triangular[[i, i]];
    }
    Ok(pi)
}
