//! Command-line interface.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use causalnet_convnet::checkpoint::load_ensemble;
use causalnet_convnet::gridsearch::{best_result, grid_search, results_csv};
use causalnet_core::grid::{hash_config, Grid};
use causalnet_core::image::{write_atomic, Electrode, ELECTRODE_ORDER};
use causalnet_core::tfcgc::tf_cgc_maps;
use clap::{Parser, Subcommand};
use ndarray::s;

use crate::config::{derive_seed, RunConfig, SEED_GRIDSEARCH};
use crate::data::Split;
use crate::error::{PipelineError, Result, StageExt};
use crate::run::{self, RunOptions};

#[derive(Debug, Parser)]
#[command(name = "causalnet", version, about = "Causality-image EEG classification pipeline")]
pub struct Cli {
    /// TOML configuration file; defaults apply when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "causalnet-out")]
    pub out: PathBuf,
    /// Worker threads (default: all cores). Results do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub verbose: bool,
    /// Recompute cached images and models instead of reusing them.
    #[arg(long, global = true)]
    pub fresh: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic fixture into <out>/data.
    Synth,
    /// Causality maps of one trial and directed pair.
    Causality {
        /// Trial id (position in the manifest).
        #[arg(long)]
        trial: usize,
        #[arg(long)]
        source: String,
        #[arg(long)]
        sink: String,
        /// First sample, 1-based.
        #[arg(long, default_value_t = 1)]
        start: usize,
        /// Window length in samples (default: the crop length).
        #[arg(long)]
        length: Option<usize>,
    },
    /// Build and export crop images for all trials.
    Image,
    /// Train the boosted ensemble on the training split.
    Train,
    /// Evaluate a trained ensemble on the test split.
    Eval {
        /// Ensemble file (default: <out>/model/ensemble.bin).
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Full pipeline: images, training, evaluation and reports.
    Run,
    /// Cross-validated architecture search on the training split.
    Gridsearch,
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    let opts = RunOptions {
        out: cli.out.clone(),
        verbose: cli.verbose,
        reuse: !cli.fresh,
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, &cfg, &opts))
}

fn dispatch(command: &Command, cfg: &RunConfig, opts: &RunOptions) -> Result<()> {
    match command {
        Command::Synth => {
            let manifest = run::generate_fixture(cfg, &opts.out.join("data"))?;
            println!("{}", manifest.display());
            Ok(())
        }
        Command::Causality {
            trial,
            source,
            sink,
            start,
            length,
        } => causality(cfg, opts, *trial, source, sink, *start, *length),
        Command::Image => {
            run::write_snapshot(cfg, &opts.out).stage("report")?;
            let (_, images) = run::prepare_images(cfg, opts, None)?;
            println!("{} crop images in {}", images.len(), opts.out.join("images").display());
            Ok(())
        }
        Command::Train => {
            run::write_snapshot(cfg, &opts.out).stage("report")?;
            let (_, images) = run::prepare_images(cfg, opts, Some(Split::Train))?;
            let ensemble = run::train_ensemble(cfg, &images, opts).stage("train")?;
            println!(
                "ensemble of {} members (prefix {}) in {}",
                ensemble.members.len(),
                ensemble.best_prefix,
                run::ensemble_path(&opts.out).display()
            );
            Ok(())
        }
        Command::Eval { model } => {
            let path = model.clone().unwrap_or_else(|| run::ensemble_path(&opts.out));
            let ensemble = load_ensemble(&path).stage("load")?;
            let (set, images) = run::prepare_images(cfg, opts, Some(Split::Test))?;
            let predictions = run::predict_trials(cfg, &ensemble, &images).stage("evaluate")?;
            let report = run::report_for(cfg, &set, &[], &images, &ensemble, predictions).stage("evaluate")?;
            report.write(&opts.out).stage("report")?;
            print!("{}", report.to_text());
            Ok(())
        }
        Command::Run => {
            let report = run::run_pipeline(cfg, opts)?;
            print!("{}", report.to_text());
            Ok(())
        }
        Command::Gridsearch => {
            let (_, images) = run::prepare_images(cfg, opts, Some(Split::Train))?;
            let data = run::dataset(&images).stage("gridsearch")?;
            let results = grid_search(
                &data,
                &cfg.convnet_config()?,
                &cfg.grid_spec(),
                derive_seed(cfg.seed, SEED_GRIDSEARCH, 0),
            )
            .stage("gridsearch")?;
            write_atomic(&opts.out.join("gridsearch.csv"), results_csv(&results).as_bytes())?;
            match best_result(&results) {
                Some(b) => println!(
                    "best: temporal_kernel={} first_filters={} blocks={} mean accuracy {:.4}",
                    b.temporal_kernel,
                    b.first_filters,
                    b.blocks,
                    b.mean_accuracy.expect("feasible")
                ),
                None => println!("no feasible architecture"),
            }
            Ok(())
        }
    }
}

fn electrode_position(name: &str) -> Result<usize> {
    let e: Electrode = name.parse().map_err(|e: causalnet_core::CoreError| PipelineError::Config(e.to_string()))?;
    Ok(ELECTRODE_ORDER.iter().position(|x| *x == e).expect("standard electrode"))
}

/// Writes the map of one directed pair, conditioned on the other three
/// electrodes, as a binary grid and a CSV.
fn causality(
    cfg: &RunConfig,
    opts: &RunOptions,
    trial: usize,
    source: &str,
    sink: &str,
    start: usize,
    length: Option<usize>,
) -> Result<()> {
    let (src, snk) = (electrode_position(source)?, electrode_position(sink)?);
    if src == snk {
        return Err(PipelineError::Config("source and sink must differ".into()));
    }
    let raw = run::obtain_trials(cfg, opts).stage("load")?;
    let set = run::preprocess(cfg, &raw).stage("preprocess")?;
    let t = set
        .trials
        .iter()
        .find(|t| t.id == trial)
        .ok_or_else(|| PipelineError::Config(format!("no trial {trial} (have {})", set.trials.len())))?;
    let length = length.unwrap_or((cfg.crops.seconds * set.sampling_rate).round() as usize);
    let n = t.data.ncols();
    if start == 0 || start - 1 + length > n || length == 0 {
        return Err(PipelineError::Config(format!(
            "window of {length} samples from {start} does not fit a trial of {n}"
        )));
    }
    let signals = t.data.slice(s![.., start - 1..start - 1 + length]);
    let cgc = cfg.cgc_config(set.sampling_rate)?;
    let channels: Vec<usize> = (0..ELECTRODE_ORDER.len()).collect();
    let mut map = tf_cgc_maps(signals, &channels, &[(src, snk)], &cgc).stage("causality")?.remove(0);
    if cfg.significance.enabled {
        let seed = derive_seed(cfg.seed, crate::config::SEED_SURROGATE, (trial as u64) << 32 | start as u64);
        causalnet_core::tfcgc::tf_cgc_significance(&mut map, signals, &cgc, &cfg.surrogate_config(seed))
            .stage("causality")?;
    }
    let key = hash_config(&format!("{}|{trial}|{start}|{length}", cfg.to_toml()));
    let grid = Grid::from_map(&map, &|c| ELECTRODE_ORDER[c].name().to_string(), key);
    let dir = opts.out.join("causality");
    std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
    let stem = format!("trial_{trial:04}_{}_{}_{start}", ELECTRODE_ORDER[src], ELECTRODE_ORDER[snk]);
    let path: PathBuf = dir.join(format!("{stem}.cgrd"));
    grid.write(&path)?;
    grid.write_csv(&path.with_extension("csv"))?;
    let (rows, cols) = map.dim();
    println!("{rows}x{cols} map in {}", display(&path));
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}
