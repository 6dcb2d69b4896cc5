//! Matrix representations: dense, CSR (compressed sparse row), CER
//! (compressed entropy row) and CSER (compressed shared elements row).
//!
//! All three compressed formats leave the positions of the value `0` implicit.
//! Matrices whose most frequent element is not zero should be decomposed first
//! (see [`crate::quantize::decompose_most_frequent`]); the encoders still work
//! on them, they just do not compress well.

mod cer;
pub mod container;
mod csr;
mod cser;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use cer::{CerMatrix, CerParts};
pub use csr::{CsrMatrix, CsrParts};
pub use cser::{CserMatrix, CserParts};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Identifies an array taking part in a representation or a dot product.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ArrayTag {
    #[serde(rename = "input")]
    Input,
    #[serde(rename = "output")]
    Output,
    /// Matrix values: the dense grid, CSR's `W`, or the alphabet `Ω`.
    #[serde(rename = "values")]
    Values,
    #[serde(rename = "colI")]
    ColIndices,
    #[serde(rename = "omegaI")]
    OmegaIndices,
    #[serde(rename = "omegaPtr")]
    OmegaPtr,
    #[serde(rename = "rowPtr")]
    RowPtr,
    #[serde(rename = "none")]
    None,
}

impl ArrayTag {
    pub const ALL: [ArrayTag; 8] = [
        ArrayTag::Input,
        ArrayTag::Output,
        ArrayTag::Values,
        ArrayTag::ColIndices,
        ArrayTag::OmegaIndices,
        ArrayTag::OmegaPtr,
        ArrayTag::RowPtr,
        ArrayTag::None,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ArrayTag::Input => "input",
            ArrayTag::Output => "output",
            ArrayTag::Values => "values",
            ArrayTag::ColIndices => "colI",
            ArrayTag::OmegaIndices => "omegaI",
            ArrayTag::OmegaPtr => "omegaPtr",
            ArrayTag::RowPtr => "rowPtr",
            ArrayTag::None => "none",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for ArrayTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Unsigned width of an index or pointer array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IndexWidth {
    U8,
    U16,
    U32,
}

impl IndexWidth {
    pub fn bits(self) -> u32 {
        match self {
            IndexWidth::U8 => 8,
            IndexWidth::U16 => 16,
            IndexWidth::U32 => 32,
        }
    }

    pub fn from_bits(bits: u32) -> Option<Self> {
        match bits {
            8 => Some(IndexWidth::U8),
            16 => Some(IndexWidth::U16),
            32 => Some(IndexWidth::U32),
            _ => None,
        }
    }
}

/// Smallest of 8, 16 or 32 bits that holds `max_index_value` unsigned.
pub fn index_bitwidth(max_index_value: u64) -> Result<IndexWidth> {
    match max_index_value {
        0..=0xff => Ok(IndexWidth::U8),
        0x100..=0xffff => Ok(IndexWidth::U16),
        0x1_0000..=0xffff_ffff => Ok(IndexWidth::U32),
        v => Err(Error::IndexOverflow(v)),
    }
}

pub(crate) fn width_for(max_index_value: usize) -> Result<IndexWidth> {
    index_bitwidth(max_index_value as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FormatKind {
    Dense,
    Csr,
    Cer,
    Cser,
}

impl FormatKind {
    pub const ALL: [FormatKind; 4] = [
        FormatKind::Dense,
        FormatKind::Csr,
        FormatKind::Cer,
        FormatKind::Cser,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FormatKind::Dense => "dense",
            FormatKind::Csr => "csr",
            FormatKind::Cer => "cer",
            FormatKind::Cser => "cser",
        }
    }

    pub(crate) fn code(self) -> u8 {
        self as u8
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }
}

impl fmt::Display for FormatKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FormatKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dense" => Ok(FormatKind::Dense),
            "csr" => Ok(FormatKind::Csr),
            "cer" => Ok(FormatKind::Cer),
            "cser" => Ok(FormatKind::Cser),
            other => Err(Error::invalid(format!("unknown format '{other}'"))),
        }
    }
}

/// Length and entry width of one stored array.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayEntry {
    pub tag: ArrayTag,
    pub len: usize,
    pub bits: u32,
}

impl ArrayEntry {
    pub fn bytes(&self) -> u64 {
        (self.len as u64 * u64::from(self.bits)).div_ceil(8)
    }
}

/// Per-array entry counts of an encoded matrix, in declaration order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntryCounts {
    pub arrays: Vec<ArrayEntry>,
}

impl EntryCounts {
    pub fn total(&self) -> usize {
        self.arrays.iter().map(|a| a.len).sum()
    }

    pub fn get(&self, tag: ArrayTag) -> Option<usize> {
        self.arrays.iter().find(|a| a.tag == tag).map(|a| a.len)
    }

    /// Exact storage: Σ array length × entry width.
    pub fn storage_bits(&self) -> u64 {
        self.arrays
            .iter()
            .map(|a| a.len as u64 * u64::from(a.bits))
            .sum()
    }
}

/// A matrix in any of the four representations.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoded {
    Dense(DenseMatrix),
    Csr(CsrMatrix),
    Cer(CerMatrix),
    Cser(CserMatrix),
}

impl Encoded {
    pub fn encode(kind: FormatKind, matrix: &DenseMatrix) -> Result<Self> {
        Ok(match kind {
            FormatKind::Dense => Encoded::Dense(matrix.clone()),
            FormatKind::Csr => Encoded::Csr(CsrMatrix::encode(matrix)?),
            FormatKind::Cer => Encoded::Cer(CerMatrix::encode(matrix)?),
            FormatKind::Cser => Encoded::Cser(CserMatrix::encode(matrix)?),
        })
    }

    pub fn kind(&self) -> FormatKind {
        match self {
            Encoded::Dense(_) => FormatKind::Dense,
            Encoded::Csr(_) => FormatKind::Csr,
            Encoded::Cer(_) => FormatKind::Cer,
            Encoded::Cser(_) => FormatKind::Cser,
        }
    }

    pub fn rows(&self) -> usize {
        match self {
            Encoded::Dense(a) => a.rows(),
            Encoded::Csr(a) => a.rows(),
            Encoded::Cer(a) => a.rows(),
            Encoded::Cser(a) => a.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            Encoded::Dense(a) => a.cols(),
            Encoded::Csr(a) => a.cols(),
            Encoded::Cer(a) => a.cols(),
            Encoded::Cser(a) => a.cols(),
        }
    }

    pub fn element_bits(&self) -> u32 {
        match self {
            Encoded::Dense(a) => a.element_bits(),
            Encoded::Csr(a) => a.element_bits(),
            Encoded::Cer(a) => a.element_bits(),
            Encoded::Cser(a) => a.element_bits(),
        }
    }

    pub fn entry_counts(&self) -> EntryCounts {
        match self {
            Encoded::Dense(a) => dense_entry_counts(a),
            Encoded::Csr(a) => a.entry_counts(),
            Encoded::Cer(a) => a.entry_counts(),
            Encoded::Cser(a) => a.entry_counts(),
        }
    }

    pub fn storage_bits(&self) -> u64 {
        self.entry_counts().storage_bits()
    }

    pub fn decode(&self) -> Result<DenseMatrix> {
        match self {
            Encoded::Dense(a) => Ok(a.clone()),
            Encoded::Csr(a) => a.decode(),
            Encoded::Cer(a) => a.decode(),
            Encoded::Cser(a) => a.decode(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Encoded::Dense(_) => Ok(()),
            Encoded::Csr(a) => a.validate(),
            Encoded::Cer(a) => a.validate(),
            Encoded::Cser(a) => a.validate(),
        }
    }
}

pub fn dense_entry_counts(a: &DenseMatrix) -> EntryCounts {
    EntryCounts {
        arrays: vec![ArrayEntry {
            tag: ArrayTag::Values,
            len: a.len(),
            bits: a.element_bits(),
        }],
    }
}

pub fn encode_csr(a: &DenseMatrix) -> Result<CsrMatrix> {
    CsrMatrix::encode(a)
}

pub fn encode_cer(a: &DenseMatrix) -> Result<CerMatrix> {
    CerMatrix::encode(a)
}

pub fn encode_cser(a: &DenseMatrix) -> Result<CserMatrix> {
    CserMatrix::encode(a)
}

/// Non-zero values of `a` ordered by descending count, ties by ascending value.
/// This is the segment order shared by the CER and CSER encoders.
pub(crate) fn nonzero_frequency_order(a: &DenseMatrix) -> Vec<f64> {
    let mut sorted: Vec<f64> = a.values().iter().copied().filter(|&v| v != 0.0).collect();
    sorted.sort_by(f64::total_cmp);
    let mut counted: Vec<(f64, usize)> = Vec::new();
    for v in sorted {
        match counted.last_mut() {
            Some((last, c)) if *last == v => *c += 1,
            _ => counted.push((v, 1)),
        }
    }
    counted.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.total_cmp(&b.0)));
    counted.into_iter().map(|(v, _)| v).collect()
}

/// Checks shape rules shared by every pointer array: leading zero,
/// non-decreasing entries and a final entry equal to `end`.
pub(crate) fn check_pointers(tag: ArrayTag, ptr: &[u32], expected_len: usize, end: usize) -> Result<()> {
    if ptr.len() != expected_len {
        return Err(Error::malformed(
            tag,
            ptr.len(),
            format!("expected {expected_len} entries, found {}", ptr.len()),
        ));
    }
    if ptr[0] != 0 {
        return Err(Error::malformed(tag, 0, "first pointer must be 0"));
    }
    for (i, w) in ptr.windows(2).enumerate() {
        if w[1] < w[0] {
            return Err(Error::malformed(tag, i + 1, "pointers must be non-decreasing"));
        }
    }
    let last = *ptr.last().expect("non-empty pointer array") as usize;
    if last != end {
        return Err(Error::malformed(
            tag,
            ptr.len() - 1,
            format!("last pointer {last} does not match {end}"),
        ));
    }
    Ok(())
}

/// Tracks the columns already used by the current row. Memory grows with
/// the row, never with the declared column count.
pub(crate) struct RowColumns {
    seen: std::collections::HashSet<usize>,
}

impl RowColumns {
    pub(crate) fn new() -> Self {
        Self {
            seen: Default::default(),
        }
    }

    pub(crate) fn next_row(&mut self) {
        self.seen.clear();
    }

    /// Returns false if the column was already seen in this row.
    pub(crate) fn insert(&mut self, col: usize) -> bool {
        self.seen.insert(col)
    }
}

/// Validates one segment of column indices: in range and strictly ascending,
/// with no column repeated elsewhere in the row.
pub(crate) fn check_segment(
    cols: usize,
    col_indices: &[u32],
    start: usize,
    end: usize,
    seen: &mut RowColumns,
) -> Result<()> {
    for i in start..end {
        let c = col_indices[i] as usize;
        if c >= cols {
            return Err(Error::malformed(
                ArrayTag::ColIndices,
                i,
                format!("column {c} out of range for {cols} columns"),
            ));
        }
        if i > start && col_indices[i - 1] >= col_indices[i] {
            return Err(Error::malformed(
                ArrayTag::ColIndices,
                i,
                "column indices must ascend within a segment",
            ));
        }
        if !seen.insert(c) {
            return Err(Error::malformed(
                ArrayTag::ColIndices,
                i,
                format!("column {c} repeated within a row"),
            ));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_widths() {
        assert_eq!(index_bitwidth(0).unwrap(), IndexWidth::U8);
        assert_eq!(index_bitwidth(255).unwrap(), IndexWidth::U8);
        assert_eq!(index_bitwidth(256).unwrap(), IndexWidth::U16);
        assert_eq!(index_bitwidth(70000).unwrap(), IndexWidth::U32);
        assert!(matches!(index_bitwidth(1 << 32), Err(Error::IndexOverflow(_))));
    }

    #[test]
    fn format_names_parse() {
        for k in FormatKind::ALL {
            assert_eq!(k.name().parse::<FormatKind>().unwrap(), k);
        }
        assert!("coo".parse::<FormatKind>().is_err());
    }
}
