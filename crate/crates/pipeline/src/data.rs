//! Trial sets and their CSV layout.
//!
//! A manifest is a CSV with the header `trial_file,label,split`. Paths are
//! relative to the manifest's directory; labels are `left`/`right` and
//! splits `train`/`test`. Each trial file starts with a sidecar line
//! `# sampling_rate = <Hz>`, then a header row of channel names, then one
//! row of samples per time step.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use causalnet_core::image::{write_atomic, Label};
use ndarray::Array2;

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "test" => Ok(Split::Test),
            other => Err(format!("unknown split {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    /// Position in the manifest.
    pub id: usize,
    pub label: Label,
    pub split: Split,
    /// Channels x samples.
    pub data: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialSet {
    pub channel_names: Vec<String>,
    pub sampling_rate: f64,
    pub trials: Vec<Trial>,
}

impl TrialSet {
    pub fn count(&self, split: Split) -> usize {
        self.trials.iter().filter(|t| t.split == split).count()
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.channel_names.iter().position(|c| c.eq_ignore_ascii_case(name.trim()))
    }

    /// Keeps only `names`, in that order.
    pub fn select(&self, names: &[String]) -> Result<TrialSet> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.channel_index(n)
                    .ok_or_else(|| PipelineError::Config(format!("channel {n:?} not in data ({:?})", self.channel_names)))
            })
            .collect::<Result<_>>()?;
        let trials = self
            .trials
            .iter()
            .map(|t| Trial {
                data: t.data.select(ndarray::Axis(0), &idx),
                ..t.clone()
            })
            .collect();
        Ok(TrialSet {
            channel_names: idx.iter().map(|&i| self.channel_names[i].clone()).collect(),
            sampling_rate: self.sampling_rate,
            trials,
        })
    }
}

/// Parses one trial file into its channel names, sampling rate and a
/// channels x samples matrix.
pub fn read_trial(path: &Path) -> Result<(Vec<String>, f64, Array2<f64>)> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    let mut lines = text.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| PipelineError::load(path, 1, "empty trial file"))?;
    let fs_text = first
        .strip_prefix('#')
        .and_then(|s| s.split_once('='))
        .filter(|(k, _)| k.trim() == "sampling_rate")
        .map(|(_, v)| v.trim())
        .ok_or_else(|| PipelineError::load(path, 1, "expected '# sampling_rate = <Hz>'"))?;
    let sampling_rate: f64 = fs_text
        .parse()
        .ok()
        .filter(|v: &f64| *v > 0.0 && v.is_finite())
        .ok_or_else(|| PipelineError::load(path, 1, format!("bad sampling rate {fs_text:?}")))?;

    let (_, header) = lines.next().ok_or_else(|| PipelineError::load(path, 2, "missing channel header"))?;
    let names: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
    if names.iter().any(|n| n.is_empty()) {
        return Err(PipelineError::load(path, 2, "empty channel name"));
    }
    for (i, n) in names.iter().enumerate() {
        if names[..i].iter().any(|m| m.eq_ignore_ascii_case(n)) {
            return Err(PipelineError::load(path, 2, format!("duplicate channel {n:?}")));
        }
    }

    let mut values = Vec::new();
    let mut rows = 0;
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(PipelineError::load(
                path,
                i + 1,
                format!("{} cells for {} channels", cells.len(), names.len()),
            ));
        }
        for c in cells {
            let v: f64 = c
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| PipelineError::load(path, i + 1, format!("non-numeric cell {:?}", c.trim())))?;
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(PipelineError::load(path, 3, "no samples"));
    }
    let samples_by_channel = Array2::from_shape_vec((rows, names.len()), values)
        .expect("row lengths checked")
        .reversed_axes()
        .as_standard_layout()
        .into_owned();
    Ok((names, sampling_rate, samples_by_channel))
}

/// Loads every trial listed in a manifest. Channel order follows the first
/// trial; later trials may list the same channels in any order.
pub fn load_trials(manifest: &Path) -> Result<TrialSet> {
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(manifest)
        .map_err(|e| PipelineError::load(manifest, 1, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| PipelineError::load(manifest, 1, e.to_string()))?
        .clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| PipelineError::load(manifest, 1, format!("manifest lacks column {name:?}")))
    };
    let (c_file, c_label, c_split) = (column("trial_file")?, column("label")?, column("split")?);

    let mut set: Option<TrialSet> = None;
    for (id, record) in reader.records().enumerate() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(id + 2, |p| p.line() as usize);
            PipelineError::load(manifest, line, e.to_string())
        })?;
        let line = record.position().map_or(id + 2, |p| p.line() as usize);
        let field = |c: usize| record.get(c).unwrap_or("");
        let label: Label = field(c_label)
            .parse()
            .map_err(|e: causalnet_core::CoreError| PipelineError::load(manifest, line, e.to_string()))?;
        let split: Split = field(c_split).parse().map_err(|e: String| PipelineError::load(manifest, line, e))?;
        let path: PathBuf = base.join(field(c_file));
        let (names, fs_hz, data) = read_trial(&path)?;
        let set = set.get_or_insert_with(|| TrialSet {
            channel_names: names.clone(),
            sampling_rate: fs_hz,
            trials: Vec::new(),
        });
        if fs_hz != set.sampling_rate {
            return Err(PipelineError::load(
                &path,
                1,
                format!("sampling rate {fs_hz} differs from {}", set.sampling_rate),
            ));
        }
        let data = if names == set.channel_names {
            data
        } else {
            let order: Vec<usize> = set
                .channel_names
                .iter()
                .map(|n| names.iter().position(|m| m.eq_ignore_ascii_case(n)))
                .collect::<Option<_>>()
                .filter(|_| names.len() == set.channel_names.len())
                .ok_or_else(|| {
                    PipelineError::load(
                        &path,
                        2,
                        format!("channels {names:?} do not match {:?}", set.channel_names),
                    )
                })?;
            data.select(ndarray::Axis(0), &order)
        };
        set.trials.push(Trial { id, label, split, data });
    }
    set.ok_or_else(|| PipelineError::Empty(format!("manifest {} lists no trials", manifest.display())))
}

/// Writes a trial file. Values use the shortest round-trip representation,
/// so reloading is exact.
pub fn write_trial(path: &Path, names: &[String], sampling_rate: f64, data: &Array2<f64>) -> Result<()> {
    let mut s = format!("# sampling_rate = {sampling_rate}\n{}\n", names.join(","));
    for t in 0..data.ncols() {
        let row: Vec<String> = data.column(t).iter().map(|v| v.to_string()).collect();
        s.push_str(&row.join(","));
        s.push('\n');
    }
    Ok(write_atomic(path, s.as_bytes())?)
}

/// Writes `set` as `dir/manifest.csv` plus `dir/trials/trial_NNNN.csv`.
pub fn write_trial_set(set: &TrialSet, dir: &Path) -> Result<PathBuf> {
    let trials_dir = dir.join("trials");
    fs::create_dir_all(&trials_dir).map_err(|e| PipelineError::io(&trials_dir, e))?;
    let mut manifest = String::from("trial_file,label,split\n");
    for t in &set.trials {
        let name = format!("trial_{:04}.csv", t.id);
        write_trial(&trials_dir.join(&name), &set.channel_names, set.sampling_rate, &t.data)?;
        manifest.push_str(&format!("trials/{name},{},{}\n", t.label, t.split));
    }
    let path = dir.join("manifest.csv");
    write_atomic(&path, manifest.as_bytes())?;
    Ok(path)
}
