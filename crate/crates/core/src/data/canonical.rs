//! The "PSD8" canonical dataset file.
//!
//! ```text
//! "PSD8" u32:version [8]u8:label_order u32:name_len name u32:count u32:window
//! record* = f32[window×21] onehot, f32[window×21] profile, u8[window] labels, u8[window] mask
//! ```
//!
//! Integers and floats are little-endian.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::record::{Dataset, ProteinRecord};
use crate::error::{Error, Result};
use crate::labels::{LabelOrder, NUM_CLASSES};
use crate::model::BLOCK_WIDTH;

pub const MAGIC: &[u8; 4] = b"PSD8";
pub const VERSION: u32 = 1;

pub fn write_canonical(dataset: &Dataset, out: &mut impl Write) -> Result<()> {
    let window = dataset.records.first().map_or(0, ProteinRecord::window);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(dataset.labels.as_bytes())?;
    write_u32(out, dataset.name.len())?;
    out.write_all(dataset.name.as_bytes())?;
    write_u32(out, dataset.len())?;
    write_u32(out, window)?;
    let mut buf = Vec::new();
    for (i, rec) in dataset.records.iter().enumerate() {
        if rec.window() != window {
            return Err(Error::Validation {
                protein: i,
                reason: format!("window {} differs from the dataset's {window}", rec.window()),
            });
        }
        buf.clear();
        for v in rec.seq_onehot.iter().chain(&rec.profile) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        buf.extend_from_slice(&rec.labels);
        buf.extend(rec.mask.iter().map(|&m| m as u8));
        out.write_all(&buf)?;
    }
    Ok(())
}

pub fn read_canonical(input: &mut impl Read) -> Result<Dataset> {
    let mut magic = [0u8; 4];
    read_exact(input, &mut magic, "magic")?;
    if &magic != MAGIC {
        return Err(Error::format("not a PSD8 dataset file (bad magic)"));
    }
    let version = read_u32(input, "version")?;
    if version != VERSION {
        return Err(Error::format(format!("unsupported PSD8 version {version}")));
    }
    let mut order = [0u8; NUM_CLASSES];
    read_exact(input, &mut order, "label order")?;
    let labels = LabelOrder::from_bytes(order)?;
    let name_len = read_u32(input, "name length")? as usize;
    let mut name = vec![0u8; name_len];
    read_exact(input, &mut name, "name")?;
    let name = String::from_utf8(name).map_err(|_| Error::format("dataset name is not UTF-8"))?;
    let count = read_u32(input, "record count")? as usize;
    let window = read_u32(input, "window")? as usize;

    let block = window * BLOCK_WIDTH;
    let mut raw = vec![0u8; 2 * block * 4 + 2 * window];
    let mut records = Vec::with_capacity(count.min(1 << 16));
    for index in 0..count {
        read_exact(input, &mut raw, "record")?;
        let (floats, tail) = raw.split_at(2 * block * 4);
        let mut values = floats
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]));
        let seq_onehot: Vec<f32> = values.by_ref().take(block).collect();
        let profile: Vec<f32> = values.collect();
        let (label_bytes, mask_bytes) = tail.split_at(window);
        let rec = ProteinRecord::new(seq_onehot, profile, label_bytes.to_vec(), index)?;
        if rec.mask.iter().zip(mask_bytes).any(|(&m, &b)| b > 1 || m != (b == 1)) {
            return Err(Error::Validation {
                protein: index,
                reason: "stored mask disagrees with labels".into(),
            });
        }
        records.push(rec);
    }
    let mut probe = [0u8; 1];
    if input.read(&mut probe)? != 0 {
        return Err(Error::format("trailing bytes after the last record"));
    }
    Ok(Dataset { name, labels, records })
}

pub fn save_canonical(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    write_canonical(dataset, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn load_canonical(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    read_canonical(&mut BufReader::new(fs::File::open(path).map_err(|e| Error::file(path, e))?))
}

fn write_u32(out: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::invalid(format!("{v} exceeds the u32 range")))?;
    out.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_exact(input: &mut impl Read, buf: &mut [u8], what: &str) -> Result<()> {
    input.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::format(format!("truncated PSD8 file while reading {what}")),
        _ => Error::Io(e),
    })
}

fn read_u32(input: &mut impl Read, what: &str) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(input, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}
