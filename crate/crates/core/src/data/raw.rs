//! Flat CullPDB-family matrices: `N×39900` little-endian `f32` plus a text sidecar.
//!
//! Each protein row reshapes to 700 positions × 57 columns:
//!
//! | columns  | content                                     |
//! |----------|---------------------------------------------|
//! | `0..22`  | residue one-hot, 21 symbols + NoSeq         |
//! | `22..31` | structure one-hot, 8 states + NoSeq         |
//! | `31..33` | N/C terminal markers (parsed, unused)       |
//! | `33..35` | solvent accessibility (parsed, unused)      |
//! | `35..57` | profile, 21 symbols + NoSeq                 |

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::data::record::{Dataset, ProteinRecord, SEQ_LEN};
use crate::error::{Error, Result};
use crate::labels::{LabelOrder, NOSEQ, NUM_CLASSES};
use crate::model::BLOCK_WIDTH;

pub const RAW_COLS: usize = 57;
pub const ROW_FLOATS: usize = SEQ_LEN * RAW_COLS;

pub const RESIDUE_COLS: std::ops::Range<usize> = 0..22;
pub const LABEL_COLS: std::ops::Range<usize> = 22..31;
pub const TERMINAL_COLS: std::ops::Range<usize> = 31..33;
pub const SOLVENT_COLS: std::ops::Range<usize> = 33..35;
pub const PROFILE_COLS: std::ops::Range<usize> = 35..57;

/// Contents of the text sidecar.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawHeader {
    pub name: String,
    pub count: usize,
}

impl RawHeader {
    pub fn parse(text: &str) -> Result<Self> {
        let mut fields = BTreeMap::new();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(format!("header line {line:?} is not key=value")))?;
            fields.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |key: &str| {
            fields
                .get(key)
                .map(String::as_str)
                .ok_or_else(|| Error::format(format!("header is missing `{key}`")))
        };
        let number = |key: &str| -> Result<usize> {
            get(key)?
                .parse()
                .map_err(|_| Error::format(format!("header field `{key}` is not an integer")))
        };
        if number("rows")? != SEQ_LEN || number("cols")? != RAW_COLS {
            return Err(Error::format(format!(
                "header declares {}×{}, expected {SEQ_LEN}×{RAW_COLS}",
                get("rows")?,
                get("cols")?
            )));
        }
        Ok(RawHeader {
            name: get("name")?.to_string(),
            count: number("count")?,
        })
    }

    pub fn render(&self) -> String {
        format!(
            "name = {}\ncount = {}\nrows = {SEQ_LEN}\ncols = {RAW_COLS}\n",
            self.name, self.count
        )
    }
}

/// Reads and validates every protein. The label columns are taken to follow `labels`.
pub fn load_raw_matrix(data_path: impl AsRef<Path>, header_path: impl AsRef<Path>, labels: LabelOrder) -> Result<Dataset> {
    let (data_path, header_path) = (data_path.as_ref(), header_path.as_ref());
    let header = RawHeader::parse(&fs::read_to_string(header_path).map_err(|e| Error::file(header_path, e))?)?;
    let file = fs::File::open(data_path).map_err(|e| Error::file(data_path, e))?;
    let expected = (header.count * ROW_FLOATS * 4) as u64;
    let actual = file.metadata()?.len();
    if actual != expected {
        return Err(Error::format(format!(
            "data file has {actual} bytes; {} proteins × {SEQ_LEN}×{RAW_COLS} floats need {expected}",
            header.count
        )));
    }
    let mut reader = BufReader::new(file);
    let mut bytes = vec![0u8; ROW_FLOATS * 4];
    let mut row = vec![0f32; ROW_FLOATS];
    let mut records = Vec::with_capacity(header.count);
    for index in 0..header.count {
        reader.read_exact(&mut bytes)?;
        for (v, c) in row.iter_mut().zip(bytes.chunks_exact(4)) {
            *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
        records.push(parse_protein(&row, index)?);
    }
    Ok(Dataset {
        name: header.name,
        labels,
        records,
    })
}

/// Extracts the 21+21 feature layout and labels from one 700×57 row.
pub fn parse_protein(row: &[f32], index: usize) -> Result<ProteinRecord> {
    debug_assert_eq!(row.len(), ROW_FLOATS);
    let mut onehot = vec![0f32; SEQ_LEN * BLOCK_WIDTH];
    let mut profile = vec![0f32; SEQ_LEN * BLOCK_WIDTH];
    let mut labels = vec![NOSEQ; SEQ_LEN];
    for t in 0..SEQ_LEN {
        let cols = &row[t * RAW_COLS..(t + 1) * RAW_COLS];
        let label_block = &cols[LABEL_COLS];
        let label = one_hot_index(label_block).ok_or_else(|| Error::Validation {
            protein: index,
            reason: format!("position {t}: structure columns are not one-hot"),
        })?;
        if label == NUM_CLASSES {
            continue;
        }
        labels[t] = label as u8;
        onehot[t * BLOCK_WIDTH..(t + 1) * BLOCK_WIDTH].copy_from_slice(&cols[RESIDUE_COLS][..BLOCK_WIDTH]);
        profile[t * BLOCK_WIDTH..(t + 1) * BLOCK_WIDTH].copy_from_slice(&cols[PROFILE_COLS][..BLOCK_WIDTH]);
    }
    ProteinRecord::new(onehot, profile, labels, index)
}

fn one_hot_index(block: &[f32]) -> Option<usize> {
    let mut found = None;
    for (i, &v) in block.iter().enumerate() {
        if v == 1.0 {
            if found.is_some() {
                return None;
            }
            found = Some(i);
        } else if v != 0.0 {
            return None;
        }
    }
    found
}

/// Writes records in the raw layout (window must be 700), filling the unused columns plausibly.
pub fn write_raw_matrix(
    dataset: &Dataset,
    data_path: impl AsRef<Path>,
    header_path: impl AsRef<Path>,
) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(data_path)?);
    let mut row = vec![0f32; ROW_FLOATS];
    for (index, rec) in dataset.records.iter().enumerate() {
        if rec.window() != SEQ_LEN {
            return Err(Error::Validation {
                protein: index,
                reason: format!("raw matrices need a {SEQ_LEN}-position window, got {}", rec.window()),
            });
        }
        encode_protein(rec, &mut row);
        for v in &row {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    let header = RawHeader {
        name: dataset.name.clone(),
        count: dataset.len(),
    };
    fs::write(header_path, header.render())?;
    Ok(())
}

/// Inverse of [`parse_protein`] for the feature and label columns.
pub fn encode_protein(rec: &ProteinRecord, row: &mut [f32]) {
    row.fill(0.0);
    let len = rec.length();
    for t in 0..SEQ_LEN {
        let cols = &mut row[t * RAW_COLS..(t + 1) * RAW_COLS];
        if !rec.mask[t] {
            cols[RESIDUE_COLS.end - 1] = 1.0;
            cols[LABEL_COLS.end - 1] = 1.0;
            cols[PROFILE_COLS.end - 1] = 1.0;
            continue;
        }
        cols[RESIDUE_COLS][..BLOCK_WIDTH].copy_from_slice(&rec.seq_onehot[t * BLOCK_WIDTH..(t + 1) * BLOCK_WIDTH]);
        cols[PROFILE_COLS][..BLOCK_WIDTH].copy_from_slice(&rec.profile[t * BLOCK_WIDTH..(t + 1) * BLOCK_WIDTH]);
        cols[LABEL_COLS.start + rec.labels[t] as usize] = 1.0;
        if t == 0 {
            cols[TERMINAL_COLS.start] = 1.0;
        }
        if t + 1 == len {
            cols[TERMINAL_COLS.start + 1] = 1.0;
        }
        cols[SOLVENT_COLS.start] = 0.5;
    }
}
