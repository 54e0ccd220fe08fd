//! Pipeline stages: load, band-limit, crop, causality images, boosting,
//! trial voting and reports.
//!
//! Crop images and the trained ensemble are cached in the output directory
//! under content keys (config text plus data bytes), so a later command can
//! resume from them and recomputation gives the same bits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use causalnet_convnet::boost::{ensemble_scores, StopReason};
use causalnet_convnet::checkpoint::{load_ensemble, save_ensemble};
use causalnet_convnet::{adaboost_train, evaluate, vote, BoostEnsemble, ConvNet, ConvNetLearner, Dataset, EvalReport};
use causalnet_core::grid::{hex, Grid};
use causalnet_core::image::{
    crop_trial, directed_pairs, export_image, image_from_maps, write_atomic, Crop, Label, MapSet, ELECTRODE_ORDER,
};
use causalnet_core::tfcgc::{tf_cgc_maps, tf_cgc_significance, CgcConfig};
use ndarray::{s, Array2, ArrayView2};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::config::{derive_seed, RunConfig, SEED_BOOST, SEED_CONVNET, SEED_SURROGATE, SEED_SYNTH};
use crate::data::{load_trials, write_trial_set, Split, Trial, TrialSet};
use crate::error::{PipelineError, Result, StageExt};
use crate::filter::BandPass;

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out: PathBuf,
    pub verbose: bool,
    /// Reuse cached crop images and ensembles whose keys match.
    pub reuse: bool,
}

impl RunOptions {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        RunOptions {
            out: out.into(),
            verbose: false,
            reuse: true,
        }
    }

    fn log(&self, msg: impl AsRef<str>) {
        if self.verbose {
            eprintln!("[causalnet] {}", msg.as_ref());
        }
    }
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| PipelineError::io(path, e))
}

/// Loads the configured manifest, or generates the synthetic fixture into
/// `<out>/data` and loads it back.
pub fn obtain_trials(cfg: &RunConfig, opts: &RunOptions) -> Result<TrialSet> {
    match &cfg.data.manifest {
        Some(m) => load_trials(m),
        None => {
            let dir = opts.out.join("data");
            let manifest = generate_fixture(cfg, &dir)?;
            opts.log(format!("generated synthetic trials in {}", dir.display()));
            load_trials(&manifest)
        }
    }
}

/// Writes the `[synth]` fixture and its ground truth to `dir`; returns the manifest path.
pub fn generate_fixture(cfg: &RunConfig, dir: &Path) -> Result<PathBuf> {
    let spec = cfg.synth.generator()?;
    let set = spec.generate(derive_seed(cfg.seed, SEED_SYNTH, 0))?;
    create_dir(dir)?;
    let manifest = write_trial_set(&set, dir)?;
    let mut truth = String::from("class,source,sink,lag,active_samples,mean_abs_coefficient\n");
    for class in &spec.classes {
        for ((source, sink, lag), v) in spec.ground_truth(class) {
            let active = v.iter().filter(|x| **x != 0.0).count();
            let mean = v.iter().map(|x| x.abs()).sum::<f64>() / v.len() as f64;
            let _ = writeln!(
                truth,
                "{},{},{},{lag},{active},{mean}",
                class.label, spec.channel_names[source], spec.channel_names[sink]
            );
        }
    }
    write_atomic(&dir.join("truth.csv"), truth.as_bytes())?;
    Ok(manifest)
}

/// Selects the five electrodes (in standard order) and band-limits every trial.
pub fn preprocess(cfg: &RunConfig, set: &TrialSet) -> Result<TrialSet> {
    let mut out = set.select(&cfg.data.electrodes)?;
    if cfg.preprocess.enabled {
        let [lo, hi] = cfg.preprocess.band;
        let bp = BandPass::design(lo, hi, out.sampling_rate)?;
        out.trials = out
            .trials
            .into_par_iter()
            .map(|t| Trial {
                data: bp.apply(&t.data),
                ..t
            })
            .collect();
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CropImage {
    pub trial_id: usize,
    pub label: Label,
    pub split: Split,
    pub crop: Crop,
    /// Rows x time.
    pub image: Array2<f64>,
    /// Content key of the crop data and image settings.
    pub key: [u8; 32],
}

/// `(source, sink)` channel indices of the 20 directed pairs, in the order
/// of [`directed_pairs`], given channels laid out as [`ELECTRODE_ORDER`].
pub fn index_pairs() -> Vec<(usize, usize)> {
    let pos = |e| ELECTRODE_ORDER.iter().position(|x| *x == e).expect("standard electrode");
    directed_pairs().into_iter().map(|(a, b)| (pos(a), pos(b))).collect()
}

fn image_settings_text(cfg: &RunConfig) -> String {
    let sig_seed = cfg.significance.enabled.then_some(cfg.seed);
    format!(
        "{:?}|{:?}|{:?}|{:?}|{:?}|{:?}",
        cfg.data.electrodes, cfg.preprocess, cfg.crops, cfg.causality, cfg.significance, sig_seed
    )
}

fn unit_key(settings: &str, signals: ArrayView2<f64>, crop: &Crop) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(settings.as_bytes());
    h.update((crop.start_sample as u64).to_le_bytes());
    h.update((crop.length as u64).to_le_bytes());
    for v in signals.iter() {
        h.update(v.to_le_bytes());
    }
    h.finalize().into()
}

fn image_path(out: &Path, crop: &Crop) -> PathBuf {
    out.join("images")
        .join(format!("trial_{:04}_crop_{}.cgrd", crop.trial_id, crop.index))
}

/// Per-pair maps of one crop (channels in standard order), significance-masked when enabled.
pub fn crop_maps(cfg: &RunConfig, cgc: &CgcConfig, signals: ArrayView2<f64>, unit: u64) -> Result<Vec<(usize, usize, causalnet_core::tfcgc::CgcMap)>> {
    let pairs = index_pairs();
    let channels: Vec<usize> = (0..ELECTRODE_ORDER.len()).collect();
    let mut maps = tf_cgc_maps(signals, &channels, &pairs, cgc)?;
    if cfg.significance.enabled {
        for (k, map) in maps.iter_mut().enumerate() {
            let seed = derive_seed(cfg.seed, SEED_SURROGATE, unit * 32 + k as u64);
            tf_cgc_significance(map, signals, cgc, &cfg.surrogate_config(seed))?;
        }
    }
    Ok(pairs.into_iter().zip(maps).map(|((a, b), m)| (a, b, m)).collect())
}

fn compute_crop(cfg: &RunConfig, cgc: &CgcConfig, settings: &str, trial: &Trial, crop: Crop, opts: &RunOptions) -> Result<CropImage> {
    let signals = trial.data.slice(s![.., crop.range()]);
    let key = unit_key(settings, signals, &crop);
    let path = image_path(&opts.out, &crop);
    let made = |image: Array2<f64>| CropImage {
        trial_id: trial.id,
        label: trial.label,
        split: trial.split,
        crop,
        image,
        key,
    };
    if opts.reuse && path.exists() {
        if let Ok(g) = Grid::read(&path) {
            if g.config_hash == key {
                return Ok(made(g.values));
            }
        }
    }
    let unit = (trial.id as u64) << 16 | crop.index as u64;
    let maps = crop_maps(cfg, cgc, signals, unit)?;
    let mut set = MapSet::new();
    for (a, b, map) in &maps {
        let values = if cfg.significance.enabled {
            map.masked_values()
        } else {
            map.values.clone()
        };
        set.insert((ELECTRODE_ORDER[*a], ELECTRODE_ORDER[*b]), values);
        if cfg.artifacts.maps {
            let dir = opts.out.join("maps");
            create_dir(&dir)?;
            let name = format!(
                "trial_{:04}_crop_{}_{}_{}.cgrd",
                trial.id, crop.index, ELECTRODE_ORDER[*a], ELECTRODE_ORDER[*b]
            );
            Grid::from_map(map, &|c| ELECTRODE_ORDER[c].name().to_string(), key).write(&dir.join(name))?;
        }
    }
    let mut image = image_from_maps(&set)?;
    image.crop = Some(crop);
    if cfg.artifacts.image_grids {
        Grid::from_image(&image, "", key).write(&path)?;
    }
    if cfg.artifacts.image_pgm {
        export_image(&image, &path.with_extension("pgm"))?;
    }
    Ok(made(image.values))
}

/// Images of every crop of the selected trials, in trial then crop order.
pub fn compute_images(cfg: &RunConfig, set: &TrialSet, split: Option<Split>, opts: &RunOptions) -> Result<Vec<CropImage>> {
    let cgc = cfg.cgc_config(set.sampling_rate)?;
    let settings = image_settings_text(cfg);
    create_dir(&opts.out.join("images"))?;
    let mut units = Vec::new();
    for trial in set.trials.iter().filter(|t| split.is_none_or(|s| t.split == s)) {
        for crop in crop_trial(
            trial.data.ncols(),
            set.sampling_rate,
            cfg.crops.seconds,
            cfg.crops.stride,
            trial.id,
            Some(trial.label),
        )? {
            units.push((trial, crop));
        }
    }
    opts.log(format!("computing {} crop images", units.len()));
    units
        .into_par_iter()
        .map(|(trial, crop)| compute_crop(cfg, &cgc, &settings, trial, crop, opts))
        .collect()
}

pub fn dataset(images: &[CropImage]) -> Result<Dataset> {
    Ok(Dataset::new(
        images.iter().map(|c| c.image.clone()).collect(),
        images.iter().map(|c| c.label).collect(),
        images.iter().map(|c| c.trial_id).collect(),
    )?)
}

fn model_key(cfg: &RunConfig, images: &[CropImage]) -> String {
    let mut h = Sha256::new();
    h.update(format!("{:?}|{:?}|{}", cfg.convnet, cfg.boost, cfg.seed).as_bytes());
    for c in images {
        h.update(c.key);
        h.update([c.label.index() as u8]);
    }
    hex(&h.finalize())
}

pub fn ensemble_path(out: &Path) -> PathBuf {
    out.join("model").join("ensemble.bin")
}

/// Boosted ensemble on the given training crops, reusing a cached one with a matching key.
pub fn train_ensemble(cfg: &RunConfig, images: &[CropImage], opts: &RunOptions) -> Result<BoostEnsemble<ConvNet>> {
    if images.is_empty() {
        return Err(PipelineError::Empty("no training crops".into()));
    }
    let path = ensemble_path(&opts.out);
    let key_path = path.with_extension("key");
    let key = model_key(cfg, images);
    if opts.reuse && path.exists() && fs::read_to_string(&key_path).is_ok_and(|k| k.trim() == key) {
        opts.log("reusing cached ensemble");
        return load_ensemble(&path).map_err(Into::into);
    }
    let data = dataset(images)?;
    let learner = ConvNetLearner {
        data: &data,
        base: cfg.convnet_config()?,
    };
    let samples: Vec<usize> = (0..data.len()).collect();
    opts.log(format!("boosting on {} crops", samples.len()));
    let ensemble = adaboost_train(&learner, &data.labels, &data.groups, &samples, &cfg.boost_config())?;
    create_dir(path.parent().expect("model dir"))?;
    save_ensemble(&ensemble, &path)?;
    write_atomic(&key_path, key.as_bytes())?;
    Ok(ensemble)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialPrediction {
    pub trial_id: usize,
    pub truth: Label,
    pub predicted: Label,
    /// Ensemble score per crop; positive means left.
    pub crop_scores: Vec<f64>,
}

/// Votes the crop-level ensemble labels of each trial.
pub fn predict_trials(cfg: &RunConfig, ensemble: &BoostEnsemble<ConvNet>, images: &[CropImage]) -> Result<Vec<TrialPrediction>> {
    let views: Vec<ArrayView2<f64>> = images.iter().map(|c| c.image.view()).collect();
    let scores = ensemble_scores(ensemble, &views)?;
    let mut by_trial: BTreeMap<usize, (Label, Vec<f64>)> = BTreeMap::new();
    for (c, s) in images.iter().zip(scores) {
        by_trial.entry(c.trial_id).or_insert_with(|| (c.label, Vec::new())).1.push(s);
    }
    by_trial
        .into_iter()
        .map(|(trial_id, (truth, crop_scores))| {
            let predicted = vote(&crop_scores, cfg.vote_mode())?;
            Ok(TrialPrediction {
                trial_id,
                truth,
                predicted,
                crop_scores,
            })
        })
        .collect()
}

/// Label for one trial: crops, images, ensemble scores and the vote.
pub fn predict_trial(
    cfg: &RunConfig,
    ensemble: &BoostEnsemble<ConvNet>,
    trial: &Trial,
    sampling_rate: f64,
    opts: &RunOptions,
) -> Result<Label> {
    let set = TrialSet {
        channel_names: cfg.data.electrodes.clone(),
        sampling_rate,
        trials: vec![trial.clone()],
    };
    let images = compute_images(cfg, &set, None, opts)?;
    Ok(predict_trials(cfg, ensemble, &images)?[0].predicted)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub train_trials: usize,
    pub test_trials: usize,
    pub train_crops: usize,
    pub test_crops: usize,
    pub sampling_rate: f64,
    pub band: Option<[f64; 2]>,
    pub member_rows: Vec<(f64, f64, f64)>,
    pub best_prefix: usize,
    pub best_accuracy: f64,
    pub stop: StopReason,
    pub predictions: Vec<TrialPrediction>,
    pub eval: Option<EvalReport>,
    pub config_hash: String,
}

impl RunReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "causalnet run report");
        let _ = writeln!(s, "config sha256: {}", self.config_hash);
        match self.band {
            Some([lo, hi]) => {
                let _ = writeln!(s, "preprocessing: zero-phase Butterworth band-pass {lo}-{hi} Hz (substitute for NA-MEMD)");
            }
            None => {
                let _ = writeln!(s, "preprocessing: none");
            }
        }
        let _ = writeln!(s, "sampling rate: {} Hz", self.sampling_rate);
        let _ = writeln!(s, "train: {} trials, {} crops", self.train_trials, self.train_crops);
        let _ = writeln!(s, "test: {} trials, {} crops", self.test_trials, self.test_crops);
        let _ = writeln!(
            s,
            "ensemble: {} members, selected prefix {} (validation accuracy {:.4}), stop: {}",
            self.member_rows.len(),
            self.best_prefix,
            self.best_accuracy,
            stop_text(&self.stop)
        );
        match &self.eval {
            Some(r) => s.push_str(&r.to_text()),
            None => s.push_str("no test trials: train-only report\n"),
        }
        s
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!(
            "train_trials,test_trials,train_crops,test_crops,members,best_prefix,best_validation_accuracy,{}\n",
            EvalReport::csv_header()
        );
        let metrics = match &self.eval {
            Some(r) => r.to_csv_row(),
            None => ",,,,,,,".into(),
        };
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{:.6},{}",
            self.train_trials,
            self.test_trials,
            self.train_crops,
            self.test_crops,
            self.member_rows.len(),
            self.best_prefix,
            self.best_accuracy,
            metrics
        );
        s
    }

    pub fn predictions_csv(&self) -> String {
        let mut s = String::from("trial_id,truth,predicted,crop_scores\n");
        for p in &self.predictions {
            let scores: Vec<String> = p.crop_scores.iter().map(|v| format!("{v:.6}")).collect();
            let _ = writeln!(s, "{},{},{},{}", p.trial_id, p.truth, p.predicted, scores.join(";"));
        }
        s
    }

    pub fn boost_csv(&self) -> String {
        let mut s = String::from("round,weighted_error,vote_weight,prefix_validation_accuracy,selected\n");
        for (k, (err, w, acc)) in self.member_rows.iter().enumerate() {
            let _ = writeln!(s, "{},{err:.8},{w:.8},{acc:.6},{}", k + 1, k < self.best_prefix);
        }
        s
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        write_atomic(&out.join("report.txt"), self.to_text().as_bytes())?;
        write_atomic(&out.join("report.csv"), self.to_csv().as_bytes())?;
        write_atomic(&out.join("predictions.csv"), self.predictions_csv().as_bytes())?;
        write_atomic(&out.join("boost.csv"), self.boost_csv().as_bytes())?;
        Ok(())
    }
}

fn stop_text(stop: &StopReason) -> String {
    match stop {
        StopReason::Rounds => "round limit".into(),
        StopReason::PerfectMember => "member without training errors".into(),
        StopReason::WeakMember { round, error } => format!("round {round} error {error:.4} >= 0.5"),
    }
}

/// Writes the effective configuration and derived seeds.
pub fn write_snapshot(cfg: &RunConfig, out: &Path) -> Result<()> {
    create_dir(out)?;
    write_atomic(&out.join("config.toml"), cfg.to_toml().as_bytes())?;
    let seeds = format!(
        "master={}\nsynth={}\nconvnet={}\nboost={}\nsurrogate_base={}\n",
        cfg.seed,
        derive_seed(cfg.seed, SEED_SYNTH, 0),
        derive_seed(cfg.seed, SEED_CONVNET, 0),
        derive_seed(cfg.seed, SEED_BOOST, 0),
        derive_seed(cfg.seed, SEED_SURROGATE, 0),
    );
    write_atomic(&out.join("seeds.txt"), seeds.as_bytes())?;
    Ok(())
}

pub fn report_for(
    cfg: &RunConfig,
    set: &TrialSet,
    train: &[CropImage],
    test: &[CropImage],
    ensemble: &BoostEnsemble<ConvNet>,
    predictions: Vec<TrialPrediction>,
) -> Result<RunReport> {
    let eval = if predictions.is_empty() {
        None
    } else {
        let pred: Vec<Label> = predictions.iter().map(|p| p.predicted).collect();
        let truth: Vec<Label> = predictions.iter().map(|p| p.truth).collect();
        Some(evaluate(&pred, &truth)?)
    };
    Ok(RunReport {
        train_trials: set.count(Split::Train),
        test_trials: set.count(Split::Test),
        train_crops: train.len(),
        test_crops: test.len(),
        sampling_rate: set.sampling_rate,
        band: cfg.preprocess.enabled.then_some(cfg.preprocess.band),
        member_rows: ensemble
            .members
            .iter()
            .zip(&ensemble.prefix_accuracy)
            .map(|(m, a)| (m.error, m.weight, *a))
            .collect(),
        best_prefix: ensemble.best_prefix,
        best_accuracy: ensemble.best_accuracy,
        stop: ensemble.stop,
        predictions,
        eval,
        config_hash: hex(&causalnet_core::grid::hash_config(&cfg.to_toml())),
    })
}

/// Load, preprocess and crop-image stages shared by the commands.
pub fn prepare_images(cfg: &RunConfig, opts: &RunOptions, split: Option<Split>) -> Result<(TrialSet, Vec<CropImage>)> {
    let raw = obtain_trials(cfg, opts).stage("load")?;
    let set = preprocess(cfg, &raw).stage("preprocess")?;
    let images = compute_images(cfg, &set, split, opts).stage("images")?;
    Ok((set, images))
}

/// Full pipeline: data, images, boosting on the training split, voting on
/// the test split, and reports in `opts.out`.
pub fn run_pipeline(cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport> {
    cfg.validate()?;
    write_snapshot(cfg, &opts.out).stage("report")?;
    let (set, images) = prepare_images(cfg, opts, None)?;
    if set.count(Split::Train) == 0 {
        return Err(PipelineError::Empty("no training trials".into())).stage("train");
    }
    let (train, test): (Vec<CropImage>, Vec<CropImage>) = images.into_iter().partition(|c| c.split == Split::Train);
    let ensemble = train_ensemble(cfg, &train, opts).stage("train")?;
    let predictions = predict_trials(cfg, &ensemble, &test).stage("evaluate")?;
    let report = report_for(cfg, &set, &train, &test, &ensemble, predictions).stage("evaluate")?;
    report.write(&opts.out).stage("report")?;
    opts.log(format!("report written to {}", opts.out.display()));
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_pairs_over_five_channels() {
        let pairs = index_pairs();
        assert_eq!(pairs.len(), 20);
        let distinct: std::collections::BTreeSet<_> = pairs.iter().collect();
        assert_eq!(distinct.len(), 20);
        assert!(pairs.iter().all(|&(a, b)| a != b && a < 5 && b < 5));
    }
}
