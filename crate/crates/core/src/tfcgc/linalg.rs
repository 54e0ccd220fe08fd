use num_complex::Complex64;

/// Pivot magnitude ratio above which an inversion is reported as ill-conditioned.
pub const PIVOT_RATIO_LIMIT: f64 = 1e12;

/// Dense square complex matrix, row-major. Sized for systems of a few channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<Complex64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix {
            n,
            data: vec![Complex64::new(0.0, 0.0); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = Complex64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_real(n: usize, values: &[f64]) -> Self {
        assert_eq!(values.len(), n * n);
        CMatrix {
            n,
            data: values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Complex64 {
        self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Complex64) {
        self.data[i * self.n + j] = v;
    }

    pub fn row(&self, i: usize) -> &[Complex64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.n, other.n);
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * other.data[k * n + j];
                }
            }
        }
        out
    }

    /// Largest entry-wise modulus of `self - I`.
    pub fn distance_from_identity(&self) -> f64 {
        let n = self.n;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                worst = worst.max((self.data[i * n + j] - target).norm());
            }
        }
        worst
    }

    /// Gauss-Jordan inverse with partial pivoting; `None` when a pivot
    /// vanishes or the pivot magnitudes span more than [`PIVOT_RATIO_LIMIT`].
    pub fn inverse(&self) -> Option<CMatrix> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut inv = CMatrix::identity(n).data;
        let mut max_pivot: f64 = 0.0;
        let mut min_pivot = f64::INFINITY;
        for col in 0..n {
            let mut p = col;
            let mut best = a[col * n + col].norm();
            for r in col + 1..n {
                let v = a[r * n + col].norm();
                if v > best {
                    best = v;
                    p = r;
                }
            }
            if !(best > 0.0) || !best.is_finite() {
                return None;
            }
            max_pivot = max_pivot.max(best);
            min_pivot = min_pivot.min(best);
            if p != col {
                for j in 0..n {
                    a.swap(col * n + j, p * n + j);
                    inv.swap(col * n + j, p * n + j);
                }
            }
            let pivot_inv = a[col * n + col].inv();
            for j in 0..n {
                a[col * n + j] *= pivot_inv;
                inv[col * n + j] *= pivot_inv;
            }
            for r in 0..n {
                if r == col {
                    continue;
                }
                let factor = a[r * n + col];
                if factor == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in 0..n {
                    let av = a[col * n + j];
                    let iv = inv[col * n + j];
                    a[r * n + j] -= factor * av;
                    inv[r * n + j] -= factor * iv;
                }
            }
        }
        if max_pivot / min_pivot > PIVOT_RATIO_LIMIT {
            return None;
        }
        Some(CMatrix { n, data: inv })
    }
}
