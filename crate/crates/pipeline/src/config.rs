//! Run configuration, read from TOML. Every section and key is optional;
//! unknown keys are rejected. The README documents every key.

use std::path::{Path, PathBuf};

use causalnet_convnet::gridsearch::GridSpec;
use causalnet_convnet::{BoostConfig, ConvNetConfig, SampleWeighting, VoteMode};
use causalnet_core::image::{Label, ELECTRODE_ORDER};
use causalnet_core::tfcgc::{CgcConfig, FrequencyGrid, SurrogateConfig};
use causalnet_core::tvarx::{Regularization, RofrConfig, TvarxConfig};
use serde::{Deserialize, Serialize};

use crate::error::{PipelineError, Result};
use crate::synth::{ClassGenerator, Coupling, GeneratorSpec, Schedule};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataSection,
    pub preprocess: PreprocessSection,
    pub crops: CropSection,
    pub causality: CausalitySection,
    pub significance: SignificanceSection,
    pub convnet: ConvNetSection,
    pub boost: BoostSection,
    pub evaluation: EvaluationSection,
    pub gridsearch: GridSearchSection,
    pub artifacts: ArtifactSection,
    pub synth: SynthSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: DataSection::default(),
            preprocess: PreprocessSection::default(),
            crops: CropSection::default(),
            causality: CausalitySection::default(),
            significance: SignificanceSection::default(),
            convnet: ConvNetSection::default(),
            boost: BoostSection::default(),
            evaluation: EvaluationSection::default(),
            gridsearch: GridSearchSection::default(),
            artifacts: ArtifactSection::default(),
            synth: SynthSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    /// Trial manifest; when absent, `run` generates the `[synth]` fixture.
    pub manifest: Option<PathBuf>,
    /// Channel names used as Fz, C3, Cz, C4, Pz, in that order.
    pub electrodes: Vec<String>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            manifest: None,
            electrodes: ELECTRODE_ORDER.iter().map(|e| e.name().to_string()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PreprocessSection {
    pub enabled: bool,
    /// Pass band in Hz.
    pub band: [f64; 2],
}

impl Default for PreprocessSection {
    fn default() -> Self {
        PreprocessSection {
            enabled: true,
            band: [6.0, 15.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CropSection {
    pub seconds: f64,
    pub stride: f64,
}

impl Default for CropSection {
    fn default() -> Self {
        CropSection {
            seconds: 2.0,
            stride: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CausalitySection {
    pub orders: Vec<usize>,
    pub scale: u32,
    pub lag: usize,
    pub forgetting: f64,
    pub init_window: usize,
    /// `relative` (multiple of the mean squared column norm) or `fixed`.
    pub regularization_mode: String,
    pub regularization: f64,
    pub pesr_mu: f64,
    pub elimination_exponent: u32,
    pub max_terms: usize,
    pub pesr_patience: usize,
    pub freq_start: f64,
    pub freq_step: f64,
    pub freq_bins: usize,
    pub time_step: usize,
    pub standardize: bool,
}

impl Default for CausalitySection {
    fn default() -> Self {
        let t = TvarxConfig::default();
        let g = FrequencyGrid::default();
        let (mode, value) = match t.rofr.regularization {
            Regularization::Relative(v) => ("relative", v),
            Regularization::Fixed(v) => ("fixed", v),
        };
        CausalitySection {
            orders: t.orders,
            scale: t.scale,
            lag: t.lag,
            forgetting: t.forgetting,
            init_window: t.init_window,
            regularization_mode: mode.into(),
            regularization: value,
            pesr_mu: t.rofr.pesr_mu,
            elimination_exponent: t.rofr.elimination_exponent,
            max_terms: t.rofr.max_terms,
            pesr_patience: t.rofr.pesr_patience,
            freq_start: g.start,
            freq_step: g.step,
            freq_bins: g.bins,
            time_step: 1,
            standardize: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SignificanceSection {
    /// Mask non-significant cells before building images.
    pub enabled: bool,
    pub surrogates: usize,
    pub level: f64,
}

impl Default for SignificanceSection {
    fn default() -> Self {
        let s = SurrogateConfig::default();
        SignificanceSection {
            enabled: false,
            surrogates: s.surrogates,
            level: s.level,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvNetSection {
    pub temporal_kernel: usize,
    pub first_filters: usize,
    pub blocks: usize,
    pub dropout: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    /// `loss` or `input_scale`.
    pub weighting: String,
}

impl Default for ConvNetSection {
    fn default() -> Self {
        let c = ConvNetConfig::default();
        ConvNetSection {
            temporal_kernel: c.temporal_kernel,
            first_filters: c.first_filters,
            blocks: c.blocks,
            dropout: c.dropout,
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            adam_epsilon: c.adam_epsilon,
            bn_momentum: c.bn_momentum,
            bn_epsilon: c.bn_epsilon,
            batch_size: c.batch_size,
            max_epochs: c.max_epochs,
            patience: c.patience,
            validation_fraction: c.validation_fraction,
            weighting: c.weighting.name().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoostSection {
    pub rounds: usize,
    pub validation_fraction: f64,
}

impl Default for BoostSection {
    fn default() -> Self {
        let b = BoostConfig::default();
        BoostSection {
            rounds: b.rounds,
            validation_fraction: b.validation_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSection {
    /// `majority` or `mean_score`.
    pub vote: String,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        EvaluationSection {
            vote: VoteMode::default().name().into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSearchSection {
    pub kernels: Vec<usize>,
    pub filters: Vec<usize>,
    pub blocks: Vec<usize>,
    pub folds: usize,
}

impl Default for GridSearchSection {
    fn default() -> Self {
        let g = GridSpec::default();
        GridSearchSection {
            kernels: g.kernels,
            filters: g.filters,
            blocks: g.blocks,
            folds: g.folds,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArtifactSection {
    /// Binary grids of every crop image (needed to resume).
    pub image_grids: bool,
    /// P5 graymaps of every crop image.
    pub image_pgm: bool,
    /// Binary grids of every per-pair map (large).
    pub maps: bool,
}

impl Default for ArtifactSection {
    fn default() -> Self {
        ArtifactSection {
            image_grids: true,
            image_pgm: true,
            maps: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub channels: Vec<String>,
    pub seconds: f64,
    pub sampling_rate: f64,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub resonance_hz: f64,
    pub radius: f64,
    pub noise_std: f64,
    pub observation_noise: f64,
    pub burn_in: usize,
    pub innovation_band: Option<[f64; 2]>,
    pub couplings: Vec<CouplingSection>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSection {
    pub class: String,
    pub source: String,
    pub sink: String,
    #[serde(default = "one")]
    pub lag: usize,
    pub gain: f64,
    /// `constant`, `window` or `sinusoid`.
    #[serde(default = "constant")]
    pub schedule: String,
    /// Fractions of the trial for `window`.
    #[serde(default)]
    pub window: Option<[f64; 2]>,
    /// Hz, for `sinusoid`.
    #[serde(default)]
    pub frequency: Option<f64>,
    #[serde(default)]
    pub phase: f64,
}

fn one() -> usize {
    1
}

fn constant() -> String {
    "constant".into()
}

impl Default for SynthSection {
    fn default() -> Self {
        let spec = GeneratorSpec::benchmark(30, 20);
        let link = |class: &str, source: &str, sink: &str| CouplingSection {
            class: class.into(),
            source: source.into(),
            sink: sink.into(),
            lag: 1,
            gain: 0.5,
            schedule: "window".into(),
            window: Some([0.25, 0.75]),
            frequency: None,
            phase: 0.0,
        };
        SynthSection {
            channels: spec.channel_names.clone(),
            seconds: spec.samples as f64 / spec.sampling_rate,
            sampling_rate: spec.sampling_rate,
            train_per_class: spec.train_per_class,
            test_per_class: spec.test_per_class,
            resonance_hz: spec.resonance_hz,
            radius: spec.radius,
            noise_std: spec.noise_std,
            observation_noise: spec.observation_noise,
            burn_in: spec.burn_in,
            innovation_band: None,
            couplings: vec![link("left", "C4", "C3"), link("right", "C3", "C4")],
        }
    }
}

fn bad(msg: impl Into<String>) -> PipelineError {
    PipelineError::Config(msg.into())
}

impl SynthSection {
    /// Classes appear in first-mention order; a class with no couplings can
    /// be declared with a zero gain.
    pub fn generator(&self) -> Result<GeneratorSpec> {
        let samples = self.seconds * self.sampling_rate;
        if !(samples >= 3.0) || (samples - samples.round()).abs() > 1e-9 {
            return Err(bad(format!("synth trial of {} s is not a whole number of samples", self.seconds)));
        }
        let channel = |name: &str| {
            self.channels
                .iter()
                .position(|c| c.eq_ignore_ascii_case(name))
                .ok_or_else(|| bad(format!("synth coupling names unknown channel {name:?}")))
        };
        let mut classes: Vec<ClassGenerator> = Vec::new();
        for c in &self.couplings {
            let label: Label = c.class.parse().map_err(|e: causalnet_core::CoreError| bad(e.to_string()))?;
            let schedule = match c.schedule.as_str() {
                "constant" => Schedule::Constant,
                "window" => {
                    let [start, end] = c.window.ok_or_else(|| bad("window schedule needs `window`"))?;
                    Schedule::Window { start, end }
                }
                "sinusoid" => Schedule::Sinusoid {
                    frequency: c.frequency.ok_or_else(|| bad("sinusoid schedule needs `frequency`"))?,
                    phase: c.phase,
                },
                other => return Err(bad(format!("unknown schedule {other:?}"))),
            };
            let coupling = Coupling {
                source: channel(&c.source)?,
                sink: channel(&c.sink)?,
                lag: c.lag,
                gain: c.gain,
                schedule,
            };
            match classes.iter_mut().find(|k| k.label == label) {
                Some(k) => k.couplings.push(coupling),
                None => classes.push(ClassGenerator {
                    label,
                    couplings: vec![coupling],
                }),
            }
        }
        let spec = GeneratorSpec {
            channel_names: self.channels.clone(),
            sampling_rate: self.sampling_rate,
            samples: samples.round() as usize,
            resonance_hz: self.resonance_hz,
            radius: self.radius,
            noise_std: self.noise_std,
            observation_noise: self.observation_noise,
            burn_in: self.burn_in,
            innovation_band: self.innovation_band.map(|[a, b]| (a, b)),
            classes,
            train_per_class: self.train_per_class,
            test_per_class: self.test_per_class,
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative manifest paths resolve against the
    /// config file's directory.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        if let Some(m) = &cfg.data.manifest {
            if m.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.data.manifest = Some(base.join(m));
            }
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that does not depend on the data.
    pub fn validate(&self) -> Result<()> {
        if self.data.electrodes.len() != ELECTRODE_ORDER.len() {
            return Err(bad(format!(
                "electrodes must name {} channels (for {:?}), got {}",
                ELECTRODE_ORDER.len(),
                ELECTRODE_ORDER.iter().map(|e| e.name()).collect::<Vec<_>>(),
                self.data.electrodes.len()
            )));
        }
        let [lo, hi] = self.preprocess.band;
        if !(lo > 0.0 && lo < hi) {
            return Err(bad(format!("band [{lo}, {hi}] must satisfy 0 < low < high")));
        }
        if !(self.crops.seconds > 0.0 && self.crops.stride > 0.0) {
            return Err(bad("crop length and stride must be positive"));
        }
        self.cgc_config(250.0)?;
        self.convnet_config()?.validate()?;
        if self.significance.enabled {
            self.surrogate_config(0).validate()?;
        }
        if self.boost.rounds == 0 {
            return Err(bad("boost.rounds must be at least 1"));
        }
        if !(self.boost.validation_fraction > 0.0 && self.boost.validation_fraction < 1.0) {
            return Err(bad("boost.validation_fraction must lie in (0, 1)"));
        }
        VoteMode::parse(&self.evaluation.vote)?;
        if self.gridsearch.folds < 2 {
            return Err(bad("gridsearch.folds must be at least 2"));
        }
        Ok(())
    }

    /// Causality settings at the data's sampling rate.
    pub fn cgc_config(&self, sampling_rate: f64) -> Result<CgcConfig> {
        let c = &self.causality;
        let regularization = match c.regularization_mode.as_str() {
            "relative" => Regularization::Relative(c.regularization),
            "fixed" => Regularization::Fixed(c.regularization),
            other => return Err(bad(format!("unknown regularization_mode {other:?}"))),
        };
        let cfg = CgcConfig {
            tvarx: TvarxConfig {
                orders: c.orders.clone(),
                scale: c.scale,
                lag: c.lag,
                rofr: RofrConfig {
                    regularization,
                    pesr_mu: c.pesr_mu,
                    elimination_exponent: c.elimination_exponent,
                    max_terms: c.max_terms,
                    pesr_patience: c.pesr_patience,
                },
                forgetting: c.forgetting,
                init_window: c.init_window,
            },
            sampling_rate,
            grid: FrequencyGrid {
                start: c.freq_start,
                step: c.freq_step,
                bins: c.freq_bins,
            },
            time_step: c.time_step,
            standardize: c.standardize,
        };
        cfg.validate()?;
        if c.orders.is_empty() || c.lag == 0 {
            return Err(bad("causality needs at least one spline order and lag >= 1"));
        }
        if !(c.forgetting > 0.0 && c.forgetting < 1.0) {
            return Err(bad(format!("forgetting factor {} must lie in (0, 1)", c.forgetting)));
        }
        Ok(cfg)
    }

    pub fn surrogate_config(&self, seed: u64) -> SurrogateConfig {
        SurrogateConfig {
            surrogates: self.significance.surrogates,
            level: self.significance.level,
            seed,
        }
    }

    /// Network settings; the seed is filled in per use.
    pub fn convnet_config(&self) -> Result<ConvNetConfig> {
        let c = &self.convnet;
        Ok(ConvNetConfig {
            temporal_kernel: c.temporal_kernel,
            first_filters: c.first_filters,
            blocks: c.blocks,
            dropout: c.dropout,
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            adam_epsilon: c.adam_epsilon,
            bn_momentum: c.bn_momentum,
            bn_epsilon: c.bn_epsilon,
            batch_size: c.batch_size,
            max_epochs: c.max_epochs,
            patience: c.patience,
            validation_fraction: c.validation_fraction,
            weighting: SampleWeighting::parse(&c.weighting)?,
            seed: derive_seed(self.seed, SEED_CONVNET, 0),
        })
    }

    pub fn boost_config(&self) -> BoostConfig {
        BoostConfig {
            rounds: self.boost.rounds,
            validation_fraction: self.boost.validation_fraction,
            seed: derive_seed(self.seed, SEED_BOOST, 0),
        }
    }

    pub fn vote_mode(&self) -> VoteMode {
        VoteMode::parse(&self.evaluation.vote).expect("validated")
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec {
            kernels: self.gridsearch.kernels.clone(),
            filters: self.gridsearch.filters.clone(),
            blocks: self.gridsearch.blocks.clone(),
            folds: self.gridsearch.folds,
        }
    }
}

pub const SEED_SYNTH: u64 = 1;
pub const SEED_CONVNET: u64 = 2;
pub const SEED_BOOST: u64 = 3;
pub const SEED_SURROGATE: u64 = 4;
pub const SEED_GRIDSEARCH: u64 = 5;

/// Seed for work unit `index` of purpose `tag`, independent of scheduling.
pub fn derive_seed(master: u64, tag: u64, index: u64) -> u64 {
    // SplitMix64 finalizer over the combined words.
    let mut z = master
        .wrapping_add(tag.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(index.wrapping_mul(0xd1b5_4a32_d192_ed03));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
