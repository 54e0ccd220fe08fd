//! Binary grid files for maps and images.
//!
//! Layout, all integers and reals little-endian:
//!
//! | field        | type                                   |
//! |--------------|----------------------------------------|
//! | magic        | `b"CGRD"`                              |
//! | version      | u32 (= 1)                              |
//! | rows, cols   | u64, u64                               |
//! | row axis     | `rows` x f64                           |
//! | col axis     | `cols` x f64                           |
//! | labels       | u32 byte length + UTF-8 `key=value` lines |
//! | config hash  | 32 bytes (SHA-256 of the config text)  |
//! | values       | `rows * cols` x f64, row-major         |
//! | mask flag    | u8, 0 or 1                             |
//! | mask         | `rows * cols` bytes when flagged       |

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::error::{CoreError, Result};
use crate::image::{write_atomic, CausalityImage};
use crate::tfcgc::CgcMap;

pub const MAGIC: &[u8; 4] = b"CGRD";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    pub row_axis: Vec<f64>,
    pub col_axis: Vec<f64>,
    /// `key=value` lines.
    pub labels: String,
    pub config_hash: [u8; 32],
    pub values: Array2<f64>,
    pub mask: Option<Array2<bool>>,
}

pub fn hash_config(text: &str) -> [u8; 32] {
    Sha256::digest(text.as_bytes()).into()
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

impl Grid {
    pub fn label(&self, key: &str) -> Option<&str> {
        self.labels
            .lines()
            .filter_map(|l| l.split_once('='))
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v)
    }

    pub fn from_map(map: &CgcMap, names: &dyn Fn(usize) -> String, config_hash: [u8; 32]) -> Self {
        let cond: Vec<String> = map.conditioning.iter().map(|&c| names(c)).collect();
        let mut labels = format!(
            "kind=cgc_map\nsource={}\nsink={}\nconditioning={}\nrows=time\ncols=frequency_hz\n",
            names(map.source),
            names(map.sink),
            cond.join(",")
        );
        if let Some(m) = &map.test_meta {
            let _ = write!(
                labels,
                "surrogates={}\nlevel={}\nsurrogate_seed={}\n",
                m.surrogates, m.level, m.seed
            );
        }
        Grid {
            row_axis: map.time_axis.iter().map(|&t| t as f64).collect(),
            col_axis: map.freq_axis.clone(),
            labels,
            config_hash,
            values: map.values.clone(),
            mask: map.mask.clone(),
        }
    }

    pub fn from_image(image: &CausalityImage, extra_labels: &str, config_hash: [u8; 32]) -> Self {
        let (rows, cols) = image.values.dim();
        let mut labels = String::from("kind=causality_image\nrows=electrode_band\ncols=sample\n");
        if let Some(c) = &image.crop {
            let _ = write!(
                labels,
                "trial={}\ncrop={}\nstart_sample={}\nlength={}\n",
                c.trial_id, c.index, c.start_sample, c.length
            );
            if let Some(l) = c.label {
                let _ = writeln!(labels, "label={l}");
            }
        }
        labels.push_str(extra_labels);
        Grid {
            row_axis: (0..rows).map(|r| r as f64).collect(),
            col_axis: (0..cols).map(|c| c as f64).collect(),
            labels,
            config_hash,
            values: image.values.clone(),
            mask: None,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (rows, cols) = self.values.dim();
        let mut out = Vec::with_capacity(64 + 8 * (rows * cols + rows + cols) + self.labels.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(rows as u64).to_le_bytes());
        out.extend_from_slice(&(cols as u64).to_le_bytes());
        for v in self.row_axis.iter().chain(&self.col_axis) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&(self.labels.len() as u32).to_le_bytes());
        out.extend_from_slice(self.labels.as_bytes());
        out.extend_from_slice(&self.config_hash);
        for v in self.values.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        match &self.mask {
            Some(m) => {
                out.push(1);
                out.extend(m.iter().map(|&b| b as u8));
            }
            None => out.push(0),
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(CoreError::Format("bad grid magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(CoreError::Format(format!("unsupported grid version {version}")));
        }
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let cells = rows
            .checked_mul(cols)
            .filter(|&c| c.saturating_mul(8) <= bytes.len())
            .ok_or_else(|| CoreError::Format("grid dimensions exceed file size".into()))?;
        let row_axis = r.f64s(rows)?;
        let col_axis = r.f64s(cols)?;
        let label_len = r.u32()? as usize;
        let labels = String::from_utf8(r.take(label_len)?.to_vec())
            .map_err(|_| CoreError::Format("grid labels are not UTF-8".into()))?;
        let mut config_hash = [0u8; 32];
        config_hash.copy_from_slice(r.take(32)?);
        let values = Array2::from_shape_vec((rows, cols), r.f64s(cells)?)
            .map_err(|e| CoreError::Format(e.to_string()))?;
        let mask = match r.take(1)?[0] {
            0 => None,
            1 => {
                let raw = r.take(cells)?;
                if raw.iter().any(|&b| b > 1) {
                    return Err(CoreError::Format("mask bytes must be 0 or 1".into()));
                }
                Some(
                    Array2::from_shape_vec((rows, cols), raw.iter().map(|&b| b == 1).collect())
                        .map_err(|e| CoreError::Format(e.to_string()))?,
                )
            }
            other => return Err(CoreError::Format(format!("bad mask flag {other}"))),
        };
        if r.pos != bytes.len() {
            return Err(CoreError::Format("trailing bytes after grid".into()));
        }
        Ok(Grid {
            row_axis,
            col_axis,
            labels,
            config_hash,
            values,
            mask,
        })
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }

    /// Debug CSV: header `row\col,<col axis...>`, then one line per row.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("row");
        for c in &self.col_axis {
            let _ = write!(s, ",{c}");
        }
        s.push('\n');
        for (r, row) in self.values.rows().into_iter().enumerate() {
            let _ = write!(s, "{}", self.row_axis.get(r).copied().unwrap_or(r as f64));
            for v in row {
                let _ = write!(s, ",{v:e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_csv().as_bytes())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| CoreError::Format("truncated grid file".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| CoreError::Format("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }
}
