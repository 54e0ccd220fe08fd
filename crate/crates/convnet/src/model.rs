//! The network and its hand-written backward pass.
//!
//! Block 1 is a spatial convolution spanning the full image height followed by
//! a valid temporal convolution; every later block is a temporal convolution
//! over all feature maps of the previous block, with dropout on its input.
//! Each temporal convolution is followed by batch normalization, ELU and
//! non-overlapping max-pooling. A dense layer maps the last block to two
//! softmax outputs.

use causalnet_core::image::Label;
use ndarray::linalg::general_mat_mul;
use ndarray::{s, Array1, Array2, Array3, ArrayView1, ArrayView2, ArrayView3, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ConvNetConfig, POOL};
use crate::error::{NetError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    fn filled(name: String, shape: Vec<usize>, value: f64) -> Self {
        let n = shape.iter().product();
        Tensor {
            name,
            shape,
            data: vec![value; n],
        }
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }
}

/// Sizes through one convolution-pooling block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockShape {
    pub in_channels: usize,
    pub out_channels: usize,
    pub in_len: usize,
    pub conv_len: usize,
    pub out_len: usize,
}

/// Block sizes for a `height x width` input, or an infeasibility error when
/// the time axis runs out.
pub fn block_shapes(height: usize, width: usize, config: &ConvNetConfig) -> Result<Vec<BlockShape>> {
    config.validate()?;
    if height == 0 || width == 0 {
        return Err(NetError::Shape(format!("input {height}x{width}")));
    }
    let tau = config.temporal_kernel;
    let mut len = width;
    let mut channels = config.first_filters;
    let mut shapes = Vec::with_capacity(config.blocks);
    for b in 0..config.blocks {
        if len < tau + 1 {
            return Err(NetError::Infeasible(format!(
                "block {} receives {len} samples but kernel {tau} and pooling need at least {}",
                b + 1,
                tau + 1
            )));
        }
        let conv_len = len - tau + 1;
        let out = config.filters(b);
        shapes.push(BlockShape {
            in_channels: channels,
            out_channels: out,
            in_len: len,
            conv_len,
            out_len: conv_len / POOL,
        });
        len = conv_len / POOL;
        channels = out;
    }
    Ok(shapes)
}

const SPATIAL: usize = 0;

fn temporal_index(b: usize) -> usize {
    1 + 3 * b
}

fn gamma_index(b: usize) -> usize {
    2 + 3 * b
}

fn beta_index(b: usize) -> usize {
    3 + 3 * b
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNet {
    config: ConvNetConfig,
    height: usize,
    width: usize,
    shapes: Vec<BlockShape>,
    params: Vec<Tensor>,
    /// Running mean and variance per block, interleaved.
    running: Vec<Tensor>,
}

/// Result of one training-mode pass over a batch.
#[derive(Debug, Clone)]
pub struct GradientPass {
    pub loss: f64,
    /// Same layout as [`ConvNet::params`].
    pub gradients: Vec<Vec<f64>>,
    pub batch_mean: Vec<Array1<f64>>,
    pub batch_var: Vec<Array1<f64>>,
    pub probabilities: Vec<[f64; 2]>,
}

struct BlockCache {
    input: Array2<f64>,
    mask: Option<Array2<f64>>,
    normalized: Array2<f64>,
    pre_activation: Array2<f64>,
    argmax: Array2<usize>,
}

fn elu(v: f64) -> f64 {
    if v > 0.0 {
        v
    } else {
        v.exp_m1()
    }
}

fn elu_slope(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else {
        v.exp()
    }
}

pub fn softmax(logits: [f64; 2]) -> [f64; 2] {
    let m = logits[0].max(logits[1]);
    let e0 = (logits[0] - m).exp();
    let e1 = (logits[1] - m).exp();
    let z = e0 + e1;
    [e0 / z, e1 / z]
}

fn conv(input: ArrayView2<f64>, kernel: ArrayView3<f64>, conv_len: usize) -> Array2<f64> {
    let mut out = Array2::zeros((kernel.shape()[1], conv_len));
    for k in 0..kernel.shape()[0] {
        general_mat_mul(
            1.0,
            &kernel.index_axis(Axis(0), k),
            &input.slice(s![.., k..k + conv_len]),
            1.0,
            &mut out,
        );
    }
    out
}

/// Max over non-overlapping windows; a trailing partial window is dropped.
fn max_pool(x: &Array2<f64>, out_len: usize) -> (Array2<f64>, Array2<usize>) {
    let rows = x.nrows();
    let mut out = Array2::zeros((rows, out_len));
    let mut arg = Array2::zeros((rows, out_len));
    for r in 0..rows {
        for t in 0..out_len {
            let mut best = POOL * t;
            for i in POOL * t + 1..POOL * (t + 1) {
                if x[[r, i]] > x[[r, best]] {
                    best = i;
                }
            }
            out[[r, t]] = x[[r, best]];
            arg[[r, t]] = best;
        }
    }
    (out, arg)
}

impl ConvNet {
    /// Fresh network with weights drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`
    /// using `config.seed`.
    pub fn build(config: &ConvNetConfig, height: usize, width: usize) -> Result<Self> {
        let shapes = block_shapes(height, width, config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let tau = config.temporal_kernel;
        let mut uniform = |name: String, shape: Vec<usize>, fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let n: usize = shape.iter().product();
            Tensor {
                name,
                shape,
                data: (0..n).map(|_| rng.random_range(-bound..bound)).collect(),
            }
        };
        let mut params = vec![uniform(
            "spatial.weight".into(),
            vec![config.first_filters, height],
            height,
        )];
        for (b, sh) in shapes.iter().enumerate() {
            params.push(uniform(
                format!("block{}.temporal", b + 1),
                vec![tau, sh.out_channels, sh.in_channels],
                tau * sh.in_channels,
            ));
            params.push(Tensor::filled(format!("block{}.gamma", b + 1), vec![sh.out_channels], 1.0));
            params.push(Tensor::filled(format!("block{}.beta", b + 1), vec![sh.out_channels], 0.0));
        }
        let last = shapes.last().expect("at least one block");
        let features = last.out_channels * last.out_len;
        params.push(uniform("dense.weight".into(), vec![2, features], features));
        params.push(Tensor::filled("dense.bias".into(), vec![2], 0.0));
        let running = Self::fresh_running(&shapes);
        Ok(ConvNet {
            config: config.clone(),
            height,
            width,
            shapes,
            params,
            running,
        })
    }

    fn fresh_running(shapes: &[BlockShape]) -> Vec<Tensor> {
        let mut running = Vec::new();
        for (b, sh) in shapes.iter().enumerate() {
            running.push(Tensor::filled(format!("block{}.running_mean", b + 1), vec![sh.out_channels], 0.0));
            running.push(Tensor::filled(format!("block{}.running_var", b + 1), vec![sh.out_channels], 1.0));
        }
        running
    }

    /// Reassembles a network from stored tensors, checking every shape.
    pub fn from_parts(
        config: &ConvNetConfig,
        height: usize,
        width: usize,
        params: Vec<Tensor>,
        running: Vec<Tensor>,
    ) -> Result<Self> {
        let template = Self::build(config, height, width)?;
        let same = |a: &[Tensor], b: &[Tensor]| {
            a.len() == b.len()
                && a.iter()
                    .zip(b)
                    .all(|(x, y)| x.name == y.name && x.shape == y.shape && x.data.len() == y.data.len())
        };
        if !same(&template.params, &params) || !same(&template.running, &running) {
            return Err(NetError::Shape("stored tensors do not match the configuration".into()));
        }
        Ok(ConvNet {
            params,
            running,
            ..template
        })
    }

    pub fn config(&self) -> &ConvNetConfig {
        &self.config
    }

    pub fn input_shape(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn block_shapes(&self) -> &[BlockShape] {
        &self.shapes
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn running(&self) -> &[Tensor] {
        &self.running
    }

    pub fn parameter_count(&self) -> usize {
        self.params.iter().map(Tensor::len).sum()
    }

    fn matrix(&self, idx: usize) -> ArrayView2<'_, f64> {
        let t = &self.params[idx];
        ArrayView2::from_shape((t.shape[0], t.shape[1]), &t.data).expect("matrix tensor")
    }

    fn kernel(&self, b: usize) -> ArrayView3<'_, f64> {
        let t = &self.params[temporal_index(b)];
        ArrayView3::from_shape((t.shape[0], t.shape[1], t.shape[2]), &t.data).expect("kernel tensor")
    }

    fn vector(&self, idx: usize) -> ArrayView1<'_, f64> {
        ArrayView1::from(&self.params[idx].data[..])
    }

    fn dense_index(&self) -> usize {
        temporal_index(self.shapes.len())
    }

    fn check_input(&self, image: &ArrayView2<f64>) -> Result<()> {
        if image.dim() != (self.height, self.width) {
            return Err(NetError::Shape(format!(
                "input {:?}, network expects {:?}",
                image.dim(),
                (self.height, self.width)
            )));
        }
        Ok(())
    }

    fn dense_logits(&self, features: ArrayView1<f64>) -> [f64; 2] {
        let w = self.matrix(self.dense_index());
        let bias = self.vector(self.dense_index() + 1);
        let l = w.dot(&features);
        [l[0] + bias[0], l[1] + bias[1]]
    }

    /// Evaluation-mode logits: running statistics, no dropout.
    pub fn logits(&self, image: ArrayView2<f64>) -> Result<[f64; 2]> {
        self.check_input(&image)?;
        let mut a = self.matrix(SPATIAL).dot(&image);
        for (b, sh) in self.shapes.iter().enumerate() {
            let mut c = conv(a.view(), self.kernel(b), sh.conv_len);
            let gamma = self.vector(gamma_index(b));
            let beta = self.vector(beta_index(b));
            let mean = &self.running[2 * b].data;
            let var = &self.running[2 * b + 1].data;
            for (q, mut row) in c.rows_mut().into_iter().enumerate() {
                let scale = gamma[q] / (var[q] + self.config.bn_epsilon).sqrt();
                row.mapv_inplace(|v| elu((v - mean[q]) * scale + beta[q]));
            }
            a = max_pool(&c, sh.out_len).0;
        }
        let flat = Array1::from_iter(a.iter().copied());
        Ok(self.dense_logits(flat.view()))
    }

    pub fn predict_proba(&self, image: ArrayView2<f64>) -> Result<[f64; 2]> {
        Ok(softmax(self.logits(image)?))
    }

    pub fn predict(&self, image: ArrayView2<f64>) -> Result<Label> {
        let p = self.predict_proba(image)?;
        Ok(if p[0] >= p[1] { Label::Left } else { Label::Right })
    }

    /// Probabilities for many images, evaluated in parallel.
    pub fn predict_batch(&self, images: &[ArrayView2<f64>]) -> Result<Vec<[f64; 2]>> {
        images.par_iter().map(|im| self.predict_proba(*im)).collect()
    }

    /// Training-mode forward and backward pass. The loss is
    /// `sum_i w_i * CE_i / B`; batch normalization uses batch statistics and
    /// dropout masks are drawn from `rng`.
    pub fn loss_and_gradient<R: Rng>(
        &self,
        inputs: &[ArrayView2<f64>],
        labels: &[Label],
        weights: &[f64],
        rng: &mut R,
    ) -> Result<GradientPass> {
        let batch = inputs.len();
        if batch == 0 || labels.len() != batch || weights.len() != batch {
            return Err(NetError::Shape(format!(
                "{batch} inputs, {} labels, {} weights",
                labels.len(),
                weights.len()
            )));
        }
        for im in inputs {
            self.check_input(im)?;
        }
        let eps = self.config.bn_epsilon;
        let keep = 1.0 - self.config.dropout;

        // Forward.
        let spatial = self.matrix(SPATIAL);
        let mut acts: Vec<Array2<f64>> = inputs.iter().map(|x| spatial.dot(x)).collect();
        let mut caches: Vec<Vec<BlockCache>> = (0..batch).map(|_| Vec::new()).collect();
        let mut batch_mean = Vec::new();
        let mut batch_var = Vec::new();
        for (b, sh) in self.shapes.iter().enumerate() {
            let mut masks: Vec<Option<Array2<f64>>> = vec![None; batch];
            if b > 0 && self.config.dropout > 0.0 {
                for (a, m) in acts.iter_mut().zip(masks.iter_mut()) {
                    let mask = a.mapv(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
                    *a *= &mask;
                    *m = Some(mask);
                }
            }
            let convs: Vec<Array2<f64>> = acts.iter().map(|a| conv(a.view(), self.kernel(b), sh.conv_len)).collect();
            let count = (batch * sh.conv_len) as f64;
            let mut mean = Array1::<f64>::zeros(sh.out_channels);
            for c in &convs {
                mean += &c.sum_axis(Axis(1));
            }
            mean /= count;
            let mut var = Array1::<f64>::zeros(sh.out_channels);
            for c in &convs {
                for (q, row) in c.rows().into_iter().enumerate() {
                    var[q] += row.iter().map(|v| (v - mean[q]).powi(2)).sum::<f64>();
                }
            }
            var /= count;
            let gamma = self.vector(gamma_index(b));
            let beta = self.vector(beta_index(b));
            let mut next = Vec::with_capacity(batch);
            for (i, c) in convs.into_iter().enumerate() {
                let mut normalized = c;
                for (q, mut row) in normalized.rows_mut().into_iter().enumerate() {
                    let inv = 1.0 / (var[q] + eps).sqrt();
                    row.mapv_inplace(|v| (v - mean[q]) * inv);
                }
                let mut pre = normalized.clone();
                for (q, mut row) in pre.rows_mut().into_iter().enumerate() {
                    row.mapv_inplace(|v| gamma[q] * v + beta[q]);
                }
                let activated = pre.mapv(elu);
                let (pooled, argmax) = max_pool(&activated, sh.out_len);
                caches[i].push(BlockCache {
                    input: std::mem::take(&mut acts[i]),
                    mask: masks[i].take(),
                    normalized,
                    pre_activation: pre,
                    argmax,
                });
                next.push(pooled);
            }
            acts = next;
            batch_mean.push(mean);
            batch_var.push(var);
        }

        let dense = self.dense_index();
        let dense_w = self.matrix(dense);
        let mut grads: Vec<Vec<f64>> = self.params.iter().map(|t| vec![0.0; t.len()]).collect();
        let mut loss = 0.0;
        let mut probabilities = Vec::with_capacity(batch);
        let mut upstream: Vec<Array2<f64>> = Vec::with_capacity(batch);
        let last = *self.shapes.last().expect("blocks");
        let features = last.out_channels * last.out_len;
        for i in 0..batch {
            let flat = ArrayView1::from_shape(features, acts[i].as_slice().expect("standard layout"))
                .expect("feature vector");
            let p = softmax(self.dense_logits(flat));
            let y = labels[i].index();
            let w = weights[i] / batch as f64;
            loss += -w * p[y].max(f64::MIN_POSITIVE).ln();
            let mut dlogit = [w * p[0], w * p[1]];
            dlogit[y] -= w;
            for (k, &d) in dlogit.iter().enumerate() {
                for (g, &f) in grads[dense][k * features..(k + 1) * features].iter_mut().zip(flat.iter()) {
                    *g += d * f;
                }
                grads[dense + 1][k] += d;
            }
            let dflat = dense_w.row(0).mapv(|v| v * dlogit[0]) + dense_w.row(1).mapv(|v| v * dlogit[1]);
            upstream.push(dflat.into_shape_with_order((last.out_channels, last.out_len)).expect("reshape"));
            probabilities.push(p);
        }

        // Backward through the blocks.
        for (b, sh) in self.shapes.iter().enumerate().rev() {
            let gamma = self.vector(gamma_index(b));
            let count = (batch * sh.conv_len) as f64;
            let mut dnorm: Vec<Array2<f64>> = Vec::with_capacity(batch);
            let mut dgamma = Array1::<f64>::zeros(sh.out_channels);
            let mut dbeta = Array1::<f64>::zeros(sh.out_channels);
            for i in 0..batch {
                let cache = &caches[i][b];
                let mut dpre = Array2::<f64>::zeros((sh.out_channels, sh.conv_len));
                for ((q, t), &g) in upstream[i].indexed_iter() {
                    let at = cache.argmax[[q, t]];
                    dpre[[q, at]] += g * elu_slope(cache.pre_activation[[q, at]]);
                }
                for q in 0..sh.out_channels {
                    let row = dpre.row(q);
                    dgamma[q] += row.dot(&cache.normalized.row(q));
                    dbeta[q] += row.sum();
                }
                for (q, mut row) in dpre.rows_mut().into_iter().enumerate() {
                    row *= gamma[q];
                }
                dnorm.push(dpre);
            }
            let mut s1 = Array1::<f64>::zeros(sh.out_channels);
            let mut s2 = Array1::<f64>::zeros(sh.out_channels);
            for i in 0..batch {
                let norm = &caches[i][b].normalized;
                for q in 0..sh.out_channels {
                    s1[q] += dnorm[i].row(q).sum();
                    s2[q] += dnorm[i].row(q).dot(&norm.row(q));
                }
            }
            let var = &batch_var[b];
            let kernel = self.kernel(b);
            let mut dkernel = Array3::<f64>::zeros(kernel.raw_dim());
            let mut next_upstream = Vec::with_capacity(batch);
            for i in 0..batch {
                let cache = &caches[i][b];
                let mut dconv = std::mem::take(&mut dnorm[i]);
                for (q, mut row) in dconv.rows_mut().into_iter().enumerate() {
                    let inv = 1.0 / (var[q] + eps).sqrt();
                    let (m1, m2) = (s1[q] / count, s2[q] / count);
                    for (d, &n) in row.iter_mut().zip(cache.normalized.row(q)) {
                        *d = (*d - m1 - n * m2) * inv;
                    }
                }
                let mut dinput = Array2::<f64>::zeros((sh.in_channels, sh.in_len));
                for k in 0..kernel.shape()[0] {
                    let window = cache.input.slice(s![.., k..k + sh.conv_len]);
                    general_mat_mul(1.0, &dconv, &window.t(), 1.0, &mut dkernel.index_axis_mut(Axis(0), k));
                    general_mat_mul(
                        1.0,
                        &kernel.index_axis(Axis(0), k).t(),
                        &dconv,
                        1.0,
                        &mut dinput.slice_mut(s![.., k..k + sh.conv_len]),
                    );
                }
                if let Some(mask) = &cache.mask {
                    dinput *= mask;
                }
                next_upstream.push(dinput);
            }
            grads[temporal_index(b)] = dkernel.iter().copied().collect();
            grads[gamma_index(b)] = dgamma.to_vec();
            grads[beta_index(b)] = dbeta.to_vec();
            upstream = next_upstream;
        }
        let mut dspatial = Array2::<f64>::zeros((self.config.first_filters, self.height));
        for (ds, x) in upstream.iter().zip(inputs) {
            general_mat_mul(1.0, ds, &x.t(), 1.0, &mut dspatial);
        }
        grads[SPATIAL] = dspatial.iter().copied().collect();

        Ok(GradientPass {
            loss,
            gradients: grads,
            batch_mean,
            batch_var,
            probabilities,
        })
    }

    /// Moves the running statistics towards a batch's statistics.
    pub fn update_running(&mut self, batch_mean: &[Array1<f64>], batch_var: &[Array1<f64>]) {
        let m = self.config.bn_momentum;
        for (b, (mean, var)) in batch_mean.iter().zip(batch_var).enumerate() {
            for (r, &v) in self.running[2 * b].data.iter_mut().zip(mean.iter()) {
                *r = m * *r + (1.0 - m) * v;
            }
            for (r, &v) in self.running[2 * b + 1].data.iter_mut().zip(var.iter()) {
                *r = m * *r + (1.0 - m) * v;
            }
        }
    }
}
