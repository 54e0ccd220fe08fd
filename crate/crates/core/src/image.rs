//! Multi-electrode causality images built from per-pair maps.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::{Array2, ArrayView2};

use crate::error::{CoreError, Result};

/// Rows of the stacked representation averaged into one image row.
pub const BLOCK_ROWS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Electrode {
    Fz,
    C3,
    Cz,
    C4,
    Pz,
}

pub const ELECTRODE_ORDER: [Electrode; 5] = [
    Electrode::Fz,
    Electrode::C3,
    Electrode::Cz,
    Electrode::C4,
    Electrode::Pz,
];

impl Electrode {
    pub fn name(self) -> &'static str {
        match self {
            Electrode::Fz => "Fz",
            Electrode::C3 => "C3",
            Electrode::Cz => "Cz",
            Electrode::C4 => "C4",
            Electrode::Pz => "Pz",
        }
    }

    /// Signed `(source, sink)` maps whose sum forms this electrode's representation.
    pub fn terms(self) -> Vec<(f64, Electrode, Electrode)> {
        use Electrode::*;
        match self {
            C3 => vec![(1.0, C3, C4), (-1.0, C4, C3)],
            C4 => vec![(1.0, C4, C3), (-1.0, C3, C4)],
            e => vec![(1.0, C3, e), (-1.0, e, C3), (-1.0, C4, e), (1.0, e, C4)],
        }
    }
}

impl fmt::Display for Electrode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Electrode {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        ELECTRODE_ORDER
            .iter()
            .copied()
            .find(|e| e.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| CoreError::InvalidSpec(format!("unknown electrode {s:?}")))
    }
}

/// All 20 ordered pairs among the five electrodes as `(source, sink)`.
pub fn directed_pairs() -> Vec<(Electrode, Electrode)> {
    let mut out = Vec::with_capacity(20);
    for &sink in &ELECTRODE_ORDER {
        for &source in &ELECTRODE_ORDER {
            if source != sink {
                out.push((source, sink));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Left,
    Right,
}

impl Label {
    /// +1 for left, -1 for right.
    pub fn sign(self) -> f64 {
        match self {
            Label::Left => 1.0,
            Label::Right => -1.0,
        }
    }

    pub fn from_sign(v: f64) -> Label {
        if v >= 0.0 {
            Label::Left
        } else {
            Label::Right
        }
    }

    /// Class index used by the network's output layer.
    pub fn index(self) -> usize {
        match self {
            Label::Left => 0,
            Label::Right => 1,
        }
    }

    pub fn from_index(i: usize) -> Label {
        if i == 0 {
            Label::Left
        } else {
            Label::Right
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Label::Left => "left",
            Label::Right => "right",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Label {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "left" => Ok(Label::Left),
            "right" => Ok(Label::Right),
            other => Err(CoreError::InvalidSpec(format!("unknown label {other:?}"))),
        }
    }
}

/// A window of a trial. `start_sample` is 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Crop {
    pub trial_id: usize,
    pub index: usize,
    pub start_sample: usize,
    pub length: usize,
    pub label: Option<Label>,
}

impl Crop {
    /// 0-based half-open sample range.
    pub fn range(&self) -> std::ops::Range<usize> {
        self.start_sample - 1..self.start_sample - 1 + self.length
    }
}

fn whole_samples(seconds: f64, sampling_rate: f64, what: &str) -> Result<usize> {
    let v = seconds * sampling_rate;
    let r = v.round();
    if !(r >= 1.0) || (v - r).abs() > 1e-9 * v.abs().max(1.0) {
        return Err(CoreError::InvalidCrop(format!(
            "{what} of {seconds} s is not a whole number of samples at {sampling_rate} Hz"
        )));
    }
    Ok(r as usize)
}

/// Crops of `crop_seconds` every `stride_seconds` over a trial of `n_samples`.
pub fn crop_trial(
    n_samples: usize,
    sampling_rate: f64,
    crop_seconds: f64,
    stride_seconds: f64,
    trial_id: usize,
    label: Option<Label>,
) -> Result<Vec<Crop>> {
    let length = whole_samples(crop_seconds, sampling_rate, "crop")?;
    let stride = whole_samples(stride_seconds, sampling_rate, "stride")?;
    if length > n_samples {
        return Err(CoreError::InvalidCrop(format!(
            "crop of {length} samples exceeds trial of {n_samples}"
        )));
    }
    let count = (n_samples - length) / stride + 1;
    Ok((0..count)
        .map(|i| Crop {
            trial_id,
            index: i,
            start_sample: 1 + i * stride,
            length,
            label,
        })
        .collect())
}

/// Per-pair maps (time x frequency) keyed by `(source, sink)`.
pub type MapSet = BTreeMap<(Electrode, Electrode), Array2<f64>>;

/// Signed combination of maps for one electrode; time x frequency.
pub fn electrode_representation(maps: &MapSet, electrode: Electrode) -> Result<Array2<f64>> {
    let mut out: Option<Array2<f64>> = None;
    for (sign, source, sink) in electrode.terms() {
        let map = maps
            .get(&(source, sink))
            .ok_or_else(|| CoreError::Incomplete(format!("missing map {source}->{sink}")))?;
        match out.as_mut() {
            None => out = Some(map.mapv(|v| sign * v)),
            Some(acc) => {
                if acc.dim() != map.dim() {
                    return Err(CoreError::Shape(format!(
                        "map {source}->{sink} is {:?}, expected {:?}",
                        map.dim(),
                        acc.dim()
                    )));
                }
                acc.scaled_add(sign, map);
            }
        }
    }
    Ok(out.expect("every electrode has terms"))
}

/// Frequency-major image, rows x time.
#[derive(Debug, Clone, PartialEq)]
pub struct CausalityImage {
    pub values: Array2<f64>,
    pub crop: Option<Crop>,
}

impl CausalityImage {
    pub fn rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn cols(&self) -> usize {
        self.values.ncols()
    }
}

/// Stacks the representations (each time x freq) electrode-major, averages
/// blocks of [`BLOCK_ROWS`] adjacent rows and transposes to rows x time.
pub fn assemble_image(representations: &[ArrayView2<f64>]) -> Result<CausalityImage> {
    if representations.len() != ELECTRODE_ORDER.len() {
        return Err(CoreError::Shape(format!(
            "expected {} electrode representations, got {}",
            ELECTRODE_ORDER.len(),
            representations.len()
        )));
    }
    let (t, nf) = representations[0].dim();
    if nf == 0 || nf % BLOCK_ROWS != 0 || t == 0 {
        return Err(CoreError::Shape(format!(
            "representation {t}x{nf} cannot be averaged in blocks of {BLOCK_ROWS}"
        )));
    }
    if representations.iter().any(|r| r.dim() != (t, nf)) {
        return Err(CoreError::Shape("electrode representations differ in shape".into()));
    }
    if representations.iter().any(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(CoreError::Shape("non-finite value in a representation".into()));
    }
    let bands = nf / BLOCK_ROWS;
    let rows = bands * representations.len();
    let mut values = Array2::zeros((rows, t));
    for (e, rep) in representations.iter().enumerate() {
        for b in 0..bands {
            let row = e * bands + b;
            for col in 0..t {
                let mut s = 0.0;
                for k in 0..BLOCK_ROWS {
                    s += rep[[col, b * BLOCK_ROWS + k]];
                }
                values[[row, col]] = s / BLOCK_ROWS as f64;
            }
        }
    }
    Ok(CausalityImage { values, crop: None })
}

/// Image for one crop from its full map set.
pub fn image_from_maps(maps: &MapSet) -> Result<CausalityImage> {
    let reps: Vec<Array2<f64>> = ELECTRODE_ORDER
        .iter()
        .map(|&e| electrode_representation(maps, e))
        .collect::<Result<_>>()?;
    let views: Vec<ArrayView2<f64>> = reps.iter().map(|r| r.view()).collect();
    assemble_image(&views)
}

/// Sidecar path written next to an exported graymap.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

/// 8-bit pixel for `v` under min-max scaling; constant images map to 128.
pub fn quantize(v: f64, min: f64, max: f64) -> u8 {
    if max > min {
        (((v - min) / (max - min)) * 255.0).round().clamp(0.0, 255.0) as u8
    } else {
        128
    }
}

/// Writes a binary P5 graymap plus a sidecar with min, max and axes.
pub fn export_image(image: &CausalityImage, path: &Path) -> Result<()> {
    let v = &image.values;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(CoreError::Shape("cannot export non-finite image".into()));
    }
    let min = v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (rows, cols) = v.dim();
    let mut bytes = format!("P5\n{cols} {rows}\n255\n").into_bytes();
    bytes.extend(v.iter().map(|&x| quantize(x, min, max)));
    write_atomic(path, &bytes)?;

    let mut side = String::new();
    side.push_str(&format!("min = {min:.17e}\nmax = {max:.17e}\n"));
    side.push_str(&format!("rows = {rows}\ncols = {cols}\n"));
    side.push_str("row_axis = electrode-major frequency bands (");
    let names: Vec<&str> = ELECTRODE_ORDER.iter().map(|e| e.name()).collect();
    side.push_str(&names.join(","));
    side.push_str(&format!("), {} bands per electrode\n", rows / ELECTRODE_ORDER.len().max(1)));
    side.push_str("col_axis = samples\n");
    if let Some(c) = &image.crop {
        side.push_str(&format!(
            "trial = {}\ncrop = {}\nstart_sample = {}\nlength = {}\n",
            c.trial_id, c.index, c.start_sample, c.length
        ));
    }
    write_atomic(&sidecar_path(path), side.as_bytes())
}

/// Pixels and the `(min, max)` recorded in the sidecar.
pub fn read_exported(path: &Path) -> Result<(Array2<u8>, f64, f64)> {
    let bytes = fs::read(path)?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(CoreError::Format("truncated P5 header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" || fields[3] != "255" {
        return Err(CoreError::Format("not an 8-bit P5 graymap".into()));
    }
    let parse = |s: &str| s.parse::<usize>().map_err(|_| CoreError::Format(format!("bad dimension {s:?}")));
    let cols = parse(&fields[1])?;
    let rows = parse(&fields[2])?;
    let data = bytes
        .get(pos..pos + rows * cols)
        .ok_or_else(|| CoreError::Format("truncated P5 payload".into()))?;
    let pixels = Array2::from_shape_vec((rows, cols), data.to_vec()).map_err(|e| CoreError::Format(e.to_string()))?;

    let side = fs::read_to_string(sidecar_path(path))?;
    let lookup = |key: &str| -> Result<f64> {
        side.lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| k.trim() == key)
            .and_then(|(_, v)| v.trim().parse().ok())
            .ok_or_else(|| CoreError::Format(format!("sidecar lacks {key}")))
    };
    Ok((pixels, lookup("min")?, lookup("max")?))
}

/// Writes to a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| CoreError::InvalidSpec(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".tmp");
    let tmp = dir.join(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}
