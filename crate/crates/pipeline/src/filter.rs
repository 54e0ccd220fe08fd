//! Zero-phase Butterworth band-pass.
//!
//! The band-pass is the bilinear transform of a second-order Butterworth
//! low-pass prototype mapped to the band, a fourth-order recursive filter
//! realised as two biquads. Running it forwards and then backwards gives
//! zero phase and an effective order of eight.

use num_complex::Complex64;
use ndarray::{Array2, ArrayView1};

use crate::error::{PipelineError, Result};

/// One section `(b0 + b1 z^-1 + b2 z^-2) / (1 + a1 z^-1 + a2 z^-2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 2],
}

impl Biquad {
    fn run(&self, x: &mut [f64]) {
        // Transposed direct form II.
        let (mut s1, mut s2) = (0.0, 0.0);
        for v in x.iter_mut() {
            let y = self.b[0] * *v + s1;
            s1 = self.b[1] * *v - self.a[0] * y + s2;
            s2 = self.b[2] * *v - self.a[1] * y;
            *v = y;
        }
    }

    fn response(&self, w: f64) -> Complex64 {
        let z1 = Complex64::from_polar(1.0, -w);
        let z2 = z1 * z1;
        (self.b[0] + self.b[1] * z1 + self.b[2] * z2) / (1.0 + self.a[0] * z1 + self.a[1] * z2)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BandPass {
    pub sections: Vec<Biquad>,
    pub low: f64,
    pub high: f64,
    pub sampling_rate: f64,
}

impl BandPass {
    pub fn design(low: f64, high: f64, sampling_rate: f64) -> Result<Self> {
        if !(low > 0.0 && low < high && high < sampling_rate / 2.0) {
            return Err(PipelineError::Config(format!(
                "band [{low}, {high}] Hz must satisfy 0 < low < high < {}",
                sampling_rate / 2.0
            )));
        }
        let k = 2.0 * sampling_rate;
        // Prewarped analog edges.
        let w1 = k * (std::f64::consts::PI * low / sampling_rate).tan();
        let w2 = k * (std::f64::consts::PI * high / sampling_rate).tan();
        let w0 = (w1 * w2).sqrt();
        let bw = w2 - w1;
        // Upper-half-plane pole of the second-order prototype; the other is
        // its conjugate and yields the conjugate band-pass poles.
        let p = Complex64::from_polar(1.0, 3.0 * std::f64::consts::PI / 4.0);
        let half = p * bw / 2.0;
        let root = (half * half - w0 * w0).sqrt();
        let mut sections: Vec<Biquad> = [half + root, half - root]
            .iter()
            .map(|&s| {
                let z = (k + s) / (k - s);
                // Zeros at z = 1 and z = -1 (analog zeros at 0 and infinity).
                Biquad {
                    b: [1.0, 0.0, -1.0],
                    a: [-2.0 * z.re, z.norm_sqr()],
                }
            })
            .collect();
        // Unit gain at the digital centre frequency.
        let wc = 2.0 * (w0 / k).atan();
        let gain: f64 = sections.iter().map(|s| s.response(wc).norm()).product();
        let g = gain.sqrt().recip();
        for s in &mut sections {
            for b in &mut s.b {
                *b *= g;
            }
        }
        Ok(BandPass {
            sections,
            low,
            high,
            sampling_rate,
        })
    }

    /// Magnitude response of one (single-direction) pass at `freq` Hz.
    pub fn magnitude(&self, freq: f64) -> f64 {
        let w = 2.0 * std::f64::consts::PI * freq / self.sampling_rate;
        self.sections.iter().map(|s| s.response(w).norm()).product()
    }

    fn pass(&self, x: &mut [f64]) {
        for s in &self.sections {
            s.run(x);
        }
    }

    /// Edge padding: three periods of the lower band edge, capped by the signal.
    pub fn pad_len(&self, n: usize) -> usize {
        let len = (3.0 * self.sampling_rate / self.low).ceil() as usize;
        len.min(n.saturating_sub(1))
    }

    /// Forward-backward filtering of one series with odd reflection at both ends.
    pub fn filtfilt(&self, x: ArrayView1<f64>) -> Vec<f64> {
        let n = x.len();
        if n == 0 {
            return Vec::new();
        }
        let pad = self.pad_len(n);
        let mut ext = Vec::with_capacity(n + 2 * pad);
        for i in (1..=pad).rev() {
            ext.push(2.0 * x[0] - x[i]);
        }
        ext.extend(x.iter());
        for i in 1..=pad {
            ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
        }
        self.pass(&mut ext);
        ext.reverse();
        self.pass(&mut ext);
        ext.reverse();
        ext[pad..pad + n].to_vec()
    }

    /// Filters every row (channel) of a channels x samples matrix.
    pub fn apply(&self, data: &Array2<f64>) -> Array2<f64> {
        let mut out = Array2::zeros(data.dim());
        for (r, row) in data.rows().into_iter().enumerate() {
            for (o, v) in out.row_mut(r).iter_mut().zip(self.filtfilt(row)) {
                *o = v;
            }
        }
        out
    }
}
