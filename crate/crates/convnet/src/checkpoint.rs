//! Binary checkpoints.
//!
//! Network, little-endian throughout:
//!
//! ```text
//! "CNNW" | u32 version | u32 len + config text | u64 height | u64 width
//! | u32 n_params | tensors | u32 n_running | tensors
//! tensor = u32 len + name | u32 ndim | ndim x u64 dims | prod(dims) x f64
//! ```
//!
//! Ensemble: `"CNBE" | u32 version | u32 members | u32 best_prefix |
//! f64 best_accuracy | u8 stop code | u32 stop round | f64 stop error |
//! u32 + u64 train indices | u32 + u64 validation indices |` then per member
//! `f64 weight | f64 error | f64 prefix accuracy | u64 len + network`.

use std::fs;
use std::path::Path;

use causalnet_core::image::write_atomic;

use crate::boost::{BoostEnsemble, Member, StopReason};
use crate::config::ConvNetConfig;
use crate::error::{NetError, Result};
use crate::model::{ConvNet, Tensor};

const NET_MAGIC: &[u8; 4] = b"CNNW";
const ENSEMBLE_MAGIC: &[u8; 4] = b"CNBE";
const VERSION: u32 = 1;

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn text(&mut self, s: &str) {
        self.u32(s.len() as u32);
        self.0.extend_from_slice(s.as_bytes());
    }
    fn indices(&mut self, v: &[usize]) {
        self.u32(v.len() as u32);
        for &i in v {
            self.u64(i as u64);
        }
    }
    fn tensors(&mut self, ts: &[Tensor]) {
        self.u32(ts.len() as u32);
        for t in ts {
            self.text(&t.name);
            self.u32(t.shape.len() as u32);
            for &d in &t.shape {
                self.u64(d as u64);
            }
            for &v in &t.data {
                self.f64(v);
            }
        }
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
            .ok_or_else(|| NetError::Format("truncated checkpoint".into()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
    fn size(&mut self) -> Result<usize> {
        usize::try_from(self.u64()?).map_err(|_| NetError::Format("size overflow".into()))
    }
    fn text(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| NetError::Format("text is not UTF-8".into()))
    }
    fn indices(&mut self) -> Result<Vec<usize>> {
        let n = self.u32()? as usize;
        (0..n).map(|_| self.size()).collect()
    }
    fn tensors(&mut self) -> Result<Vec<Tensor>> {
        let n = self.u32()? as usize;
        let mut out = Vec::with_capacity(n.min(64));
        for _ in 0..n {
            let name = self.text()?;
            let ndim = self.u32()? as usize;
            let shape: Vec<usize> = (0..ndim).map(|_| self.size()).collect::<Result<_>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .filter(|&l| l.saturating_mul(8) <= self.bytes.len())
                .ok_or_else(|| NetError::Format(format!("tensor {name} too large")))?;
            let data = (0..len).map(|_| self.f64()).collect::<Result<_>>()?;
            out.push(Tensor { name, shape, data });
        }
        Ok(out)
    }
    fn magic(&mut self, expected: &[u8; 4]) -> Result<()> {
        if self.take(4)? != expected {
            return Err(NetError::Format("bad checkpoint magic".into()));
        }
        let v = self.u32()?;
        if v != VERSION {
            return Err(NetError::Format(format!("unsupported checkpoint version {v}")));
        }
        Ok(())
    }
    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(NetError::Format("trailing bytes in checkpoint".into()));
        }
        Ok(())
    }
}

pub fn network_to_bytes(net: &ConvNet) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(NET_MAGIC);
    w.u32(VERSION);
    w.text(&net.config().to_text());
    let (h, wd) = net.input_shape();
    w.u64(h as u64);
    w.u64(wd as u64);
    w.tensors(net.params());
    w.tensors(net.running());
    w.0
}

fn read_network(r: &mut Reader) -> Result<ConvNet> {
    r.magic(NET_MAGIC)?;
    let config = ConvNetConfig::from_text(&r.text()?)?;
    let h = r.size()?;
    let w = r.size()?;
    let params = r.tensors()?;
    let running = r.tensors()?;
    ConvNet::from_parts(&config, h, w, params, running)
}

pub fn network_from_bytes(bytes: &[u8]) -> Result<ConvNet> {
    let mut r = Reader { bytes, pos: 0 };
    let net = read_network(&mut r)?;
    r.finish()?;
    Ok(net)
}

pub fn save_network(net: &ConvNet, path: &Path) -> Result<()> {
    Ok(write_atomic(path, &network_to_bytes(net))?)
}

pub fn load_network(path: &Path) -> Result<ConvNet> {
    network_from_bytes(&fs::read(path)?)
}

pub fn ensemble_to_bytes(e: &BoostEnsemble<ConvNet>) -> Vec<u8> {
    let mut w = Writer(Vec::new());
    w.0.extend_from_slice(ENSEMBLE_MAGIC);
    w.u32(VERSION);
    w.u32(e.members.len() as u32);
    w.u32(e.best_prefix as u32);
    w.f64(e.best_accuracy);
    let (code, round, error) = match e.stop {
        StopReason::Rounds => (0, 0, 0.0),
        StopReason::PerfectMember => (1, 0, 0.0),
        StopReason::WeakMember { round, error } => (2, round as u32, error),
    };
    w.u8(code);
    w.u32(round);
    w.f64(error);
    w.indices(&e.train);
    w.indices(&e.validation);
    for (m, acc) in e.members.iter().zip(&e.prefix_accuracy) {
        w.f64(m.weight);
        w.f64(m.error);
        w.f64(*acc);
        let net = network_to_bytes(&m.model);
        w.u64(net.len() as u64);
        w.0.extend_from_slice(&net);
    }
    w.0
}

/// Weight histories are not stored; the loaded ensemble has none.
pub fn ensemble_from_bytes(bytes: &[u8]) -> Result<BoostEnsemble<ConvNet>> {
    let mut r = Reader { bytes, pos: 0 };
    r.magic(ENSEMBLE_MAGIC)?;
    let count = r.u32()? as usize;
    let best_prefix = r.u32()? as usize;
    let best_accuracy = r.f64()?;
    let code = r.u8()?;
    let round = r.u32()? as usize;
    let error = r.f64()?;
    let stop = match code {
        0 => StopReason::Rounds,
        1 => StopReason::PerfectMember,
        2 => StopReason::WeakMember { round, error },
        other => return Err(NetError::Format(format!("bad stop code {other}"))),
    };
    let train = r.indices()?;
    let validation = r.indices()?;
    let mut members = Vec::new();
    let mut prefix_accuracy = Vec::new();
    for _ in 0..count {
        let weight = r.f64()?;
        let err = r.f64()?;
        prefix_accuracy.push(r.f64()?);
        let len = r.size()?;
        let model = network_from_bytes(r.take(len)?)?;
        members.push(Member {
            model,
            weight,
            error: err,
        });
    }
    r.finish()?;
    if best_prefix == 0 || best_prefix > members.len() {
        return Err(NetError::Format(format!(
            "best prefix {best_prefix} with {} members",
            members.len()
        )));
    }
    Ok(BoostEnsemble {
        members,
        best_prefix,
        best_accuracy,
        prefix_accuracy,
        weight_history: Vec::new(),
        train,
        validation,
        stop,
    })
}

pub fn save_ensemble(e: &BoostEnsemble<ConvNet>, path: &Path) -> Result<()> {
    Ok(write_atomic(path, &ensemble_to_bytes(e))?)
}

pub fn load_ensemble(path: &Path) -> Result<BoostEnsemble<ConvNet>> {
    ensemble_from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ConvNet {
        let c = ConvNetConfig {
            temporal_kernel: 3,
            first_filters: 2,
            blocks: 2,
            seed: 4,
            ..Default::default()
        };
        ConvNet::build(&c, 6, 30).unwrap()
    }

    #[test]
    fn network_round_trip() {
        let net = small();
        let bytes = network_to_bytes(&net);
        assert_eq!(network_from_bytes(&bytes).unwrap(), net);
        assert!(network_from_bytes(&bytes[..bytes.len() - 3]).is_err());
        let mut extra = bytes.clone();
        extra.push(1);
        assert!(network_from_bytes(&extra).is_err());
    }

    #[test]
    fn ensemble_round_trip() {
        let e = BoostEnsemble {
            members: vec![
                Member {
                    model: small(),
                    weight: 0.8,
                    error: 0.17,
                },
                Member {
                    model: small(),
                    weight: 0.3,
                    error: 0.35,
                },
            ],
            best_prefix: 2,
            best_accuracy: 0.9,
            prefix_accuracy: vec![0.8, 0.9],
            weight_history: Vec::new(),
            train: vec![0, 2, 3],
            validation: vec![1],
            stop: StopReason::WeakMember { round: 3, error: 0.6 },
        };
        let back = ensemble_from_bytes(&ensemble_to_bytes(&e)).unwrap();
        assert_eq!(back.members.len(), 2);
        assert_eq!(back.members[1].model, e.members[1].model);
        assert_eq!(back.members[0].weight, 0.8);
        assert_eq!(back.prefix_accuracy, e.prefix_accuracy);
        assert_eq!(back.stop, e.stop);
        assert_eq!(back.train, e.train);
    }
}
