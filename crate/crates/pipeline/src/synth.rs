//! Synthetic two-class trials from coupled time-varying autoregressions.
//!
//! Every channel is a damped resonator driven by its own innovation.
//! Directed couplings add `gain * s(t) * x_source(t - lag)` to the sink,
//! where `s(t)` is a schedule over the trial. Classes differ only in their
//! couplings, so the ground truth is known exactly.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use causalnet_core::image::Label;
use nalgebra::DMatrix;
use ndarray::{s, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Split, Trial, TrialSet};
use crate::error::{PipelineError, Result};
use crate::filter::BandPass;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Schedule {
    Constant,
    /// Active on `[start * N, end * N)`.
    Window { start: f64, end: f64 },
    /// `sin(2 pi f t / fs + phase)`.
    Sinusoid { frequency: f64, phase: f64 },
}

impl Schedule {
    pub fn value(&self, t: usize, n: usize, sampling_rate: f64) -> f64 {
        match *self {
            Schedule::Constant => 1.0,
            Schedule::Window { start, end } => {
                let u = t as f64;
                if u >= start * n as f64 && u < end * n as f64 {
                    1.0
                } else {
                    0.0
                }
            }
            Schedule::Sinusoid { frequency, phase } => (2.0 * PI * frequency * t as f64 / sampling_rate + phase).sin(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Coupling {
    pub source: usize,
    pub sink: usize,
    pub lag: usize,
    pub gain: f64,
    pub schedule: Schedule,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassGenerator {
    pub label: Label,
    pub couplings: Vec<Coupling>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSpec {
    pub channel_names: Vec<String>,
    pub sampling_rate: f64,
    pub samples: usize,
    pub resonance_hz: f64,
    pub radius: f64,
    pub noise_std: f64,
    /// White noise added after generation, as a standard deviation.
    pub observation_noise: f64,
    pub burn_in: usize,
    /// Band-limits the innovations when set.
    pub innovation_band: Option<(f64, f64)>,
    pub classes: Vec<ClassGenerator>,
    pub train_per_class: usize,
    pub test_per_class: usize,
}

/// Time course of every scheduled coefficient, keyed by `(source, sink, lag)`.
pub type GroundTruth = BTreeMap<(usize, usize, usize), Vec<f64>>;

impl GeneratorSpec {
    /// Left trials carry C4 -> C3 coupling of 0.5 on the middle half of the
    /// trial; right trials carry C3 -> C4.
    pub fn benchmark(train_per_class: usize, test_per_class: usize) -> Self {
        let window = Schedule::Window { start: 0.25, end: 0.75 };
        let link = |source, sink| Coupling {
            source,
            sink,
            lag: 1,
            gain: 0.5,
            schedule: window,
        };
        GeneratorSpec {
            channel_names: ["Fz", "C3", "Cz", "C4", "Pz"].iter().map(|s| s.to_string()).collect(),
            sampling_rate: 250.0,
            samples: 1000,
            resonance_hz: 10.0,
            radius: 0.95,
            noise_std: 1.0,
            observation_noise: 0.0,
            burn_in: 500,
            innovation_band: None,
            classes: vec![
                ClassGenerator {
                    label: Label::Left,
                    couplings: vec![link(3, 1)],
                },
                ClassGenerator {
                    label: Label::Right,
                    couplings: vec![link(1, 3)],
                },
            ],
            train_per_class,
            test_per_class,
        }
    }

    fn order(&self) -> usize {
        self.classes
            .iter()
            .flat_map(|c| c.couplings.iter().map(|k| k.lag))
            .fold(2, usize::max)
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.channel_names.len();
        if d == 0 || self.samples < 3 || !(self.sampling_rate > 0.0) {
            return Err(PipelineError::Config("generator needs channels, samples and a sampling rate".into()));
        }
        if !(self.radius >= 0.0) || !(self.noise_std > 0.0) || !(self.observation_noise >= 0.0) {
            return Err(PipelineError::Config("generator radius and noise levels must be nonnegative".into()));
        }
        if self.classes.is_empty() {
            return Err(PipelineError::Config("generator has no classes".into()));
        }
        for c in &self.classes {
            for k in &c.couplings {
                if k.source >= d || k.sink >= d || k.lag == 0 {
                    return Err(PipelineError::Config(format!("bad coupling {k:?}")));
                }
                if let Schedule::Window { start, end } = k.schedule {
                    if !(0.0..=1.0).contains(&start) || !(start..=1.0).contains(&end) {
                        return Err(PipelineError::Config(format!("bad window [{start}, {end}]")));
                    }
                }
            }
        }
        Ok(())
    }

    /// Lag matrices `A_1..A_p` at sample `t` for `class`.
    pub fn coefficients(&self, class: &ClassGenerator, t: usize) -> Vec<Array2<f64>> {
        let d = self.channel_names.len();
        let mut a = vec![Array2::zeros((d, d)); self.order()];
        let w = 2.0 * PI * self.resonance_hz / self.sampling_rate;
        for c in 0..d {
            a[0][[c, c]] = 2.0 * self.radius * w.cos();
            a[1][[c, c]] = -self.radius * self.radius;
        }
        for k in &class.couplings {
            a[k.lag - 1][[k.sink, k.source]] += k.gain * k.schedule.value(t, self.samples, self.sampling_rate);
        }
        a
    }

    pub fn ground_truth(&self, class: &ClassGenerator) -> GroundTruth {
        let mut out = GroundTruth::new();
        for k in &class.couplings {
            let entry = out
                .entry((k.source, k.sink, k.lag))
                .or_insert_with(|| vec![0.0; self.samples]);
            for (t, v) in entry.iter_mut().enumerate() {
                *v += k.gain * k.schedule.value(t, self.samples, self.sampling_rate);
            }
        }
        out
    }

    /// Largest companion-matrix eigenvalue modulus over the trial, with its sample.
    pub fn max_spectral_radius(&self, class: &ClassGenerator) -> (f64, usize) {
        let d = self.channel_names.len();
        let p = self.order();
        let mut worst = (0.0, 0);
        let mut previous: Option<Vec<Array2<f64>>> = None;
        for t in 0..self.samples {
            let a = self.coefficients(class, t);
            if previous.as_ref() == Some(&a) {
                continue;
            }
            let mut m = DMatrix::<f64>::zeros(d * p, d * p);
            for (k, ak) in a.iter().enumerate() {
                for i in 0..d {
                    for j in 0..d {
                        m[(i, k * d + j)] = ak[[i, j]];
                    }
                }
            }
            for i in d..d * p {
                m[(i, i - d)] = 1.0;
            }
            let r = m.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
            if r > worst.0 {
                worst = (r, t);
            }
            previous = Some(a);
        }
        worst
    }

    pub fn check_stability(&self) -> Result<()> {
        for class in &self.classes {
            let (radius, t) = self.max_spectral_radius(class);
            if radius >= 1.0 {
                return Err(PipelineError::Unstable {
                    class: class.label.to_string(),
                    t,
                    radius,
                });
            }
        }
        Ok(())
    }

    fn generate_trial(&self, class: &ClassGenerator, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let d = self.channel_names.len();
        let total = self.samples + self.burn_in;
        let mut e = Array2::<f64>::from_shape_fn((d, total), |_| {
            let z: f64 = StandardNormal.sample(rng);
            self.noise_std * z
        });
        if let Some((lo, hi)) = self.innovation_band {
            let bp = BandPass::design(lo, hi, self.sampling_rate).expect("band validated");
            e = bp.apply(&e);
        }
        let p = self.order();
        let start = self.coefficients(class, 0);
        let mut x = Array2::<f64>::zeros((d, total));
        let mut current = start.clone();
        for t in 0..total {
            if t >= self.burn_in {
                current = self.coefficients(class, t - self.burn_in);
            }
            for c in 0..d {
                let mut v = e[[c, t]];
                for (k, ak) in current.iter().enumerate().take(p) {
                    if t > k {
                        for j in 0..d {
                            v += ak[[c, j]] * x[[j, t - k - 1]];
                        }
                    }
                }
                x[[c, t]] = v;
            }
        }
        let mut out = x.slice(s![.., self.burn_in..]).to_owned();
        if self.observation_noise > 0.0 {
            out.mapv_inplace(|v| {
                let z: f64 = StandardNormal.sample(rng);
                v + self.observation_noise * z
            });
        }
        out
    }

    /// Generates training trials first, then test trials, with classes
    /// interleaved. Trial `i` draws from stream `i` of the seeded generator.
    pub fn generate(&self, seed: u64) -> Result<TrialSet> {
        self.validate()?;
        if let Some((lo, hi)) = self.innovation_band {
            BandPass::design(lo, hi, self.sampling_rate)?;
        }
        self.check_stability()?;
        let mut trials = Vec::new();
        for (split, count) in [(Split::Train, self.train_per_class), (Split::Test, self.test_per_class)] {
            for _ in 0..count {
                for class in &self.classes {
                    let id = trials.len();
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    rng.set_stream(id as u64);
                    trials.push(Trial {
                        id,
                        label: class.label,
                        split,
                        data: self.generate_trial(class, &mut rng),
                    });
                }
            }
        }
        Ok(TrialSet {
            channel_names: self.channel_names.clone(),
            sampling_rate: self.sampling_rate,
            trials,
        })
    }
}
