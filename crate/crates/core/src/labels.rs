//! Mapping between class indices and DSSP letters.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub const NUM_CLASSES: usize = 8;

/// Padding label for positions past the end of a protein.
pub const NOSEQ: u8 = 8;

const ALPHABET: &str = "GHIEBTSL";

/// Order in which the eight DSSP states are assigned class indices.
///
/// The default follows the column order of the public CullPDB label block:
/// L, B, E, G, I, H, S, T.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LabelOrder([u8; NUM_CLASSES]);

impl Default for LabelOrder {
    fn default() -> Self {
        LabelOrder(*b"LBEGIHST")
    }
}

impl LabelOrder {
    pub fn letter(&self, class: usize) -> char {
        self.0[class] as char
    }

    pub fn class_of(&self, letter: char) -> Option<usize> {
        self.0.iter().position(|&c| c as char == letter)
    }

    pub fn as_bytes(&self) -> &[u8; NUM_CLASSES] {
        &self.0
    }

    pub fn from_bytes(bytes: [u8; NUM_CLASSES]) -> Result<Self> {
        let text = std::str::from_utf8(&bytes).map_err(|_| Error::format("label order is not ASCII"))?;
        text.parse()
    }
}

impl FromStr for LabelOrder {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bytes = s.as_bytes();
        let valid = bytes.len() == NUM_CLASSES
            && ALPHABET.bytes().all(|c| bytes.iter().filter(|&&b| b == c).count() == 1);
        if !valid {
            return Err(Error::invalid(format!(
                "label order must be a permutation of {ALPHABET}, got {s:?}"
            )));
        }
        let mut out = [0u8; NUM_CLASSES];
        out.copy_from_slice(bytes);
        Ok(LabelOrder(out))
    }
}

impl fmt::Display for LabelOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.0 {
            write!(f, "{}", b as char)?;
        }
        Ok(())
    }
}
