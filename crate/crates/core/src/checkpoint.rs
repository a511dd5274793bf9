//! The "PS8N" checkpoint container.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! "PS8N" version
//! text_len  text            key=value lines, UTF-8
//! entry_count
//! entry*    name_len name rank dim* f32-data
//! ```
//!
//! Model parameters are stored as `param/<name>`, batch-norm statistics as
//! `stats/<name>/mean` and `stats/<name>/var`. Config keys are prefixed with
//! `model.`; other components add their own prefixes.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{ParamStore, Ps8Config, Ps8Net, StatsStore};
use crate::ops::RunningStats;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"PS8N";
pub const VERSION: u32 = 1;

const MODEL_PREFIX: &str = "model.";
const PARAM_PREFIX: &str = "param/";
const STATS_PREFIX: &str = "stats/";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

impl Checkpoint {
    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn require_meta(&self, key: &str) -> Result<&str> {
        self.meta(key)
            .ok_or_else(|| Error::format(format!("checkpoint is missing `{key}`")))
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor<f32>> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    /// Entries whose name starts with `prefix`, with the prefix removed.
    pub fn tensors_with_prefix<'a>(&'a self, prefix: &'a str) -> impl Iterator<Item = (&'a str, &'a Tensor<f32>)> {
        self.tensors
            .iter()
            .filter_map(move |(n, t)| n.strip_prefix(prefix).map(|rest| (rest, t)))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut text = String::new();
        for (k, v) in &self.meta {
            if k.contains(['=', '\n']) || v.contains('\n') {
                return Err(Error::invalid(format!("metadata entry {k:?} cannot be encoded")));
            }
            text.push_str(k);
            text.push('=');
            text.push_str(v);
            text.push('\n');
        }
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        put_len(&mut out, text.len())?;
        out.extend_from_slice(text.as_bytes());
        put_len(&mut out, self.tensors.len())?;
        for (name, t) in &self.tensors {
            put_len(&mut out, name.len())?;
            out.extend_from_slice(name.as_bytes());
            put_len(&mut out, t.rank())?;
            for &d in t.shape() {
                put_len(&mut out, d)?;
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::format("not a PS8N checkpoint (bad magic)"));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::format(format!("unsupported checkpoint version {version}")));
        }
        let text_len = r.u32()? as usize;
        let text = std::str::from_utf8(r.take(text_len)?)
            .map_err(|_| Error::format("checkpoint metadata is not UTF-8"))?;
        let mut meta = Vec::new();
        for line in text.lines() {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("malformed metadata line {line:?}")))?;
            meta.push((k.to_string(), v.to_string()));
        }
        let count = r.u32()? as usize;
        let mut tensors = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let name_len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(name_len)?)
                .map_err(|_| Error::format("tensor name is not UTF-8"))?
                .to_string();
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::format(format!("tensor {name} is too large")))?;
            let raw = r.take(numel.checked_mul(4).ok_or_else(|| Error::format("tensor too large"))?)?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            let t = Tensor::new(shape, data).map_err(|e| Error::format(format!("tensor {name}: {e}")))?;
            tensors.push((name, t));
        }
        if r.pos != bytes.len() {
            return Err(Error::format(format!(
                "{} trailing bytes after checkpoint",
                bytes.len() - r.pos
            )));
        }
        Ok(Checkpoint { meta, tensors })
    }

    /// Write via a temporary sibling file and rename, so readers never see a partial file.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let bytes = self.to_bytes()?;
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&bytes)?;
            f.sync_all()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Checkpoint::from_bytes(&fs::read(path).map_err(|e| Error::file(path, e))?)
    }

    /// Append a network's configuration, parameters and running statistics.
    pub fn push_model(&mut self, net: &Ps8Net<f32>) {
        for (k, v) in net.config().to_pairs() {
            self.meta.push((format!("{MODEL_PREFIX}{k}"), v));
        }
        for (name, t) in net.params().iter() {
            self.tensors.push((format!("{PARAM_PREFIX}{name}"), t.clone()));
        }
        for (name, s) in net.stats().iter() {
            let c = s.mean.len();
            let vec = |v: &[f32]| Tensor::new([c], v.to_vec()).expect("channel vector");
            self.tensors.push((format!("{STATS_PREFIX}{name}/mean"), vec(&s.mean)));
            self.tensors.push((format!("{STATS_PREFIX}{name}/var"), vec(&s.var)));
        }
    }

    pub fn model_config(&self) -> Result<Ps8Config> {
        let pairs = self
            .meta
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(MODEL_PREFIX).map(|k| (k.to_string(), v.clone())))
            .collect();
        Ps8Config::from_pairs(&pairs)
    }

    /// Rebuild the network stored by [`Checkpoint::push_model`].
    pub fn to_model(&self) -> Result<Ps8Net<f32>> {
        let config = self.model_config()?;
        if self.meta("model.labels").is_none() {
            return Err(Error::format("checkpoint has no label mapping"));
        }
        let mut net = Ps8Net::build(config, 0)?;
        let mut params = ParamStore::new();
        for name in net.params().names() {
            let t = self
                .tensor(&format!("{PARAM_PREFIX}{name}"))
                .ok_or_else(|| Error::format(format!("checkpoint is missing parameter {name}")))?;
            params.push(name.clone(), t.clone());
        }
        let mut stats = StatsStore::new();
        let names: Vec<String> = net.stats().iter().map(|(n, _)| n.to_string()).collect();
        for name in names {
            let get = |part: &str| {
                self.tensor(&format!("{STATS_PREFIX}{name}/{part}"))
                    .map(|t| t.data().to_vec())
                    .ok_or_else(|| Error::format(format!("checkpoint is missing statistics {name}/{part}")))
            };
            stats.push(name.clone(), RunningStats { mean: get("mean")?, var: get("var")? });
        }
        net.load_state(params, stats)?;
        Ok(net)
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_len(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid(format!("length {v} exceeds the u32 range")))?;
    put_u32(out, v);
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(format!(
                "truncated checkpoint: wanted {n} bytes at offset {}, file has {}",
                self.pos,
                self.bytes.len()
            ))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Checkpoint {
        let mut ck = Checkpoint::default();
        ck.push_model(&Ps8Net::build(Ps8Config::uniform(3), 4).unwrap());
        ck.meta.push(("train.lr".into(), format!("{:?}", 2e-4f64)));
        ck
    }

    #[test]
    fn bytes_round_trip() {
        let ck = sample();
        let bytes = ck.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn model_round_trip() {
        let net = Ps8Net::<f32>::build(Ps8Config::uniform(3), 4).unwrap();
        let mut ck = Checkpoint::default();
        ck.push_model(&net);
        let back = ck.to_model().unwrap();
        assert_eq!(back.params(), net.params());
        assert_eq!(back.stats(), net.stats());
        assert_eq!(back.config(), net.config());
    }

    #[test]
    fn every_truncation_is_rejected() {
        let bytes = sample().to_bytes().unwrap();
        for cut in (0..bytes.len()).step_by(97).chain([bytes.len() - 1]) {
            assert!(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(Error::Format(_))), "cut {cut}");
        }
    }

    #[test]
    fn bad_magic_and_version() {
        let mut bytes = sample().to_bytes().unwrap();
        bytes[0] = b'X';
        assert!(Checkpoint::from_bytes(&bytes).unwrap_err().to_string().contains("magic"));
        let mut bytes = sample().to_bytes().unwrap();
        bytes[4] = 9;
        assert!(Checkpoint::from_bytes(&bytes).unwrap_err().to_string().contains("version"));
    }

    #[test]
    fn missing_parameter_is_reported() {
        let mut ck = sample();
        ck.tensors.retain(|(n, _)| n != "param/embedding");
        assert!(ck.to_model().unwrap_err().to_string().contains("embedding"));
    }
}
