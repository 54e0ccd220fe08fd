use crate::error::{NetError, Result};

/// How boosting weights enter training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SampleWeighting {
    /// Each sample's cross-entropy is multiplied by its weight.
    #[default]
    Loss,
    /// Each input image is multiplied by its weight, loss unweighted.
    InputScale,
}

impl SampleWeighting {
    pub fn name(self) -> &'static str {
        match self {
            SampleWeighting::Loss => "loss",
            SampleWeighting::InputScale => "input_scale",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "loss" => Ok(SampleWeighting::Loss),
            "input_scale" => Ok(SampleWeighting::InputScale),
            other => Err(NetError::InvalidConfig(format!("unknown weighting '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvNetConfig {
    /// Temporal kernel length in samples.
    pub temporal_kernel: usize,
    /// Filters of the first block; each later block doubles.
    pub first_filters: usize,
    pub blocks: usize,
    /// Drop probability on the inputs of blocks after the first.
    pub dropout: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_epsilon: f64,
    pub bn_momentum: f64,
    pub bn_epsilon: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub validation_fraction: f64,
    pub weighting: SampleWeighting,
    pub seed: u64,
}

pub const POOL: usize = 2;
pub const MAX_BLOCKS: usize = 5;

impl Default for ConvNetConfig {
    fn default() -> Self {
        ConvNetConfig {
            temporal_kernel: 15,
            first_filters: 10,
            blocks: 2,
            dropout: 0.5,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_epsilon: 1e-8,
            bn_momentum: 0.9,
            bn_epsilon: 1e-5,
            batch_size: 16,
            max_epochs: 200,
            patience: 50,
            validation_fraction: 0.2,
            weighting: SampleWeighting::Loss,
            seed: 0,
        }
    }
}

impl ConvNetConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NetError::InvalidConfig(m));
        if self.temporal_kernel == 0 {
            return bad("temporal kernel must be positive".into());
        }
        if self.first_filters == 0 {
            return bad("first block needs at least one filter".into());
        }
        if !(1..=MAX_BLOCKS).contains(&self.blocks) {
            return bad(format!("blocks {} outside 1..={MAX_BLOCKS}", self.blocks));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.learning_rate > 0.0) || !(self.adam_epsilon > 0.0) || !(self.bn_epsilon > 0.0) {
            return bad("learning rate and epsilons must be positive".into());
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2), ("bn_momentum", self.bn_momentum)] {
            if !(0.0..1.0).contains(&b) {
                return bad(format!("{name} {b} outside [0, 1)"));
            }
        }
        if self.batch_size == 0 {
            return bad("batch size must be positive".into());
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad(format!("validation fraction {}", self.validation_fraction));
        }
        Ok(())
    }

    /// Filters of block `b` (0-based).
    pub fn filters(&self, b: usize) -> usize {
        self.first_filters << b
    }

    /// `key=value` lines; stored in checkpoints and run reports.
    pub fn to_text(&self) -> String {
        format!(
            "temporal_kernel={}\nfirst_filters={}\nblocks={}\ndropout={}\nlearning_rate={}\nbeta1={}\nbeta2={}\n\
             adam_epsilon={}\nbn_momentum={}\nbn_epsilon={}\nbatch_size={}\nmax_epochs={}\npatience={}\n\
             validation_fraction={}\nweighting={}\nseed={}\n",
            self.temporal_kernel,
            self.first_filters,
            self.blocks,
            self.dropout,
            self.learning_rate,
            self.beta1,
            self.beta2,
            self.adam_epsilon,
            self.bn_momentum,
            self.bn_epsilon,
            self.batch_size,
            self.max_epochs,
            self.patience,
            self.validation_fraction,
            self.weighting.name(),
            self.seed
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = ConvNetConfig::default();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| NetError::Format(format!("config line '{line}'")))?;
            let num = |v: &str| v.parse::<f64>().map_err(|_| NetError::Format(format!("{k}={v}")));
            let int = |v: &str| v.parse::<usize>().map_err(|_| NetError::Format(format!("{k}={v}")));
            match k {
                "temporal_kernel" => c.temporal_kernel = int(v)?,
                "first_filters" => c.first_filters = int(v)?,
                "blocks" => c.blocks = int(v)?,
                "dropout" => c.dropout = num(v)?,
                "learning_rate" => c.learning_rate = num(v)?,
                "beta1" => c.beta1 = num(v)?,
                "beta2" => c.beta2 = num(v)?,
                "adam_epsilon" => c.adam_epsilon = num(v)?,
                "bn_momentum" => c.bn_momentum = num(v)?,
                "bn_epsilon" => c.bn_epsilon = num(v)?,
                "batch_size" => c.batch_size = int(v)?,
                "max_epochs" => c.max_epochs = int(v)?,
                "patience" => c.patience = int(v)?,
                "validation_fraction" => c.validation_fraction = num(v)?,
                "weighting" => c.weighting = SampleWeighting::parse(v)?,
                "seed" => c.seed = v.parse().map_err(|_| NetError::Format(format!("seed={v}")))?,
                other => return Err(NetError::Format(format!("unknown config key '{other}'"))),
            }
        }
        Ok(c)
    }
}
