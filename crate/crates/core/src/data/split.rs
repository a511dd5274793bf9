use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

pub const CULLPDB6133_COUNT: usize = 6133;
pub const FILTERED_COUNT: usize = 5534;
pub const FILTERED_TRAIN: usize = 5234;

const PAPER_TRAIN: std::ops::Range<usize> = 0..5600;
const PAPER_TEST: std::ops::Range<usize> = 5605..5877;
const PAPER_VALID: std::ops::Range<usize> = 5877..6133;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub name: String,
    pub indices: Vec<usize>,
    /// Source dataset and index ranges, for reports.
    pub provenance: String,
}

impl DatasetSplit {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Splits {
    pub train: DatasetSplit,
    pub valid: DatasetSplit,
    pub test: DatasetSplit,
    /// Indices deliberately left out of every split.
    pub excluded: Vec<usize>,
}

impl Splits {
    pub fn sizes(&self) -> (usize, usize, usize) {
        (self.train.len(), self.test.len(), self.valid.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// `[0,5600)` train, `[5605,5877)` test, `[5877,6133)` valid; `[5600,5605)` unused.
    #[default]
    Paper,
    /// Everything outside the test range trains; no validation split.
    Train6128,
}

impl FromStr for SplitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(SplitMode::Paper),
            "train6128" => Ok(SplitMode::Train6128),
            _ => Err(Error::invalid(format!("unknown split mode {s:?} (expected paper or train6128)"))),
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SplitMode::Paper => "paper",
            SplitMode::Train6128 => "train6128",
        })
    }
}

fn split(name: &str, indices: Vec<usize>, provenance: String) -> DatasetSplit {
    DatasetSplit {
        name: name.into(),
        indices,
        provenance,
    }
}

pub fn split_cullpdb6133(count: usize, mode: SplitMode) -> Result<Splits> {
    if count != CULLPDB6133_COUNT {
        return Err(Error::invalid(format!(
            "CullPDB6133 split needs {CULLPDB6133_COUNT} records, got {count}"
        )));
    }
    let test = split("test", PAPER_TEST.collect(), "cullpdb6133[5605:5877]".into());
    Ok(match mode {
        SplitMode::Paper => Splits {
            train: split("train", PAPER_TRAIN.collect(), "cullpdb6133[0:5600]".into()),
            valid: split("valid", PAPER_VALID.collect(), "cullpdb6133[5877:6133]".into()),
            test,
            excluded: (PAPER_TRAIN.end..PAPER_TEST.start).collect(),
        },
        SplitMode::Train6128 => Splits {
            train: split(
                "train",
                (0..PAPER_TEST.start).chain(PAPER_VALID).collect(),
                "cullpdb6133[0:5605]+[5877:6133]".into(),
            ),
            valid: split("valid", Vec::new(), "none".into()),
            test,
            excluded: Vec::new(),
        },
    })
}

/// Seeded uniform choice of 5234 training proteins; the other 300 validate.
pub fn split_cullpdb6133_filtered(count: usize, seed: u64) -> Result<Splits> {
    if count != FILTERED_COUNT {
        return Err(Error::invalid(format!(
            "filtered CullPDB6133 split needs {FILTERED_COUNT} records, got {count}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train = rand::seq::index::sample(&mut rng, count, FILTERED_TRAIN).into_vec();
    train.sort_unstable();
    let mut chosen = vec![false; count];
    for &i in &train {
        chosen[i] = true;
    }
    let valid = (0..count).filter(|&i| !chosen[i]).collect();
    let provenance = format!("cullpdb6133-filtered, seed {seed}");
    Ok(Splits {
        train: split("train", train, provenance.clone()),
        valid: split("valid", valid, provenance),
        test: split("test", Vec::new(), "external (CB513)".into()),
        excluded: Vec::new(),
    })
}
