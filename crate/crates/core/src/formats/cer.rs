use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::matrix::{check_element_bits, DenseMatrix};

use super::csr::to_u32;
use super::{
    check_pointers, check_segment, nonzero_frequency_order, width_for, ArrayEntry, ArrayTag, EntryCounts,
    IndexWidth, RowColumns,
};

/// Raw arrays of a [`CerMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct CerParts {
    pub rows: usize,
    pub cols: usize,
    pub element_bits: u32,
    pub omega: Vec<f64>,
    pub col_indices: Vec<u32>,
    pub omega_ptr: Vec<u32>,
    pub row_ptr: Vec<u32>,
}

/// Compressed entropy row matrix.
///
/// `omega` lists the alphabet in frequency-major order with the implicit
/// element `0` first. Row `r` owns segments `rowPtr[r]..rowPtr[r+1]`; its
/// `j`-th segment holds the columns of `omega[j + 1]`, so an absent element
/// ranked before a present one leaves an empty segment behind.
#[derive(Debug, Clone, PartialEq)]
pub struct CerMatrix {
    rows: usize,
    cols: usize,
    element_bits: u32,
    omega: Vec<f64>,
    col_indices: Vec<u32>,
    omega_ptr: Vec<u32>,
    row_ptr: Vec<u32>,
}

/// Columns of one row grouped by the rank of their element, ranks ascending.
pub(crate) fn row_by_rank(row: &[f64], rank: &HashMap<u64, usize>, buf: &mut Vec<(usize, u32)>) {
    buf.clear();
    for (c, &v) in row.iter().enumerate() {
        if v != 0.0 {
            buf.push((rank[&v.to_bits()], c as u32));
        }
    }
    // stable: columns stay ascending within a rank
    buf.sort_by_key(|&(j, _)| j);
}

impl CerMatrix {
    pub fn encode(a: &DenseMatrix) -> Result<Self> {
        let mut omega = vec![0.0];
        omega.extend(nonzero_frequency_order(a));
        let rank: HashMap<u64, usize> = omega.iter().enumerate().map(|(j, v)| (v.to_bits(), j)).collect();

        let mut col_indices = Vec::new();
        let mut omega_ptr = vec![0u32];
        let mut row_ptr = Vec::with_capacity(a.rows() + 1);
        row_ptr.push(0u32);
        let mut buf = Vec::new();
        for r in 0..a.rows() {
            row_by_rank(a.row(r), &rank, &mut buf);
            let mut next_rank = 1;
            let mut i = 0;
            while i < buf.len() {
                let j = buf[i].0;
                // pad absent elements ranked before this one
                while next_rank < j {
                    omega_ptr.push(to_u32(col_indices.len())?);
                    next_rank += 1;
                }
                while i < buf.len() && buf[i].0 == j {
                    col_indices.push(buf[i].1);
                    i += 1;
                }
                omega_ptr.push(to_u32(col_indices.len())?);
                next_rank = j + 1;
            }
            row_ptr.push(to_u32(omega_ptr.len() - 1)?);
        }
        Ok(Self {
            rows: a.rows(),
            cols: a.cols(),
            element_bits: a.element_bits(),
            omega,
            col_indices,
            omega_ptr,
            row_ptr,
        })
    }

    pub fn from_parts(p: CerParts) -> Result<Self> {
        let cer = Self {
            rows: p.rows,
            cols: p.cols,
            element_bits: p.element_bits,
            omega: p.omega,
            col_indices: p.col_indices,
            omega_ptr: p.omega_ptr,
            row_ptr: p.row_ptr,
        };
        cer.validate()?;
        Ok(cer)
    }

    pub fn into_parts(self) -> CerParts {
        CerParts {
            rows: self.rows,
            cols: self.cols,
            element_bits: self.element_bits,
            omega: self.omega,
            col_indices: self.col_indices,
            omega_ptr: self.omega_ptr,
            row_ptr: self.row_ptr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_element_bits(self.element_bits)?;
        check_omega(&self.omega)?;
        let segments = self.segment_count();
        check_pointers(ArrayTag::OmegaPtr, &self.omega_ptr, segments + 1, self.col_indices.len())?;
        check_pointers(ArrayTag::RowPtr, &self.row_ptr, self.rows + 1, segments)?;
        let max_segments = self.omega.len() - 1;
        let mut seen = RowColumns::new();
        for r in 0..self.rows {
            let (s0, s1) = (self.row_ptr[r] as usize, self.row_ptr[r + 1] as usize);
            if s1 - s0 > max_segments {
                return Err(Error::malformed(
                    ArrayTag::RowPtr,
                    r + 1,
                    format!("row {r} has {} segments for {max_segments} elements", s1 - s0),
                ));
            }
            if s1 > s0 && self.omega_ptr[s1] == self.omega_ptr[s1 - 1] {
                return Err(Error::malformed(ArrayTag::OmegaPtr, s1, "row ends with an empty segment"));
            }
            for s in s0..s1 {
                let (start, end) = (self.omega_ptr[s] as usize, self.omega_ptr[s + 1] as usize);
                check_segment(self.cols, &self.col_indices, start, end, &mut seen)?;
            }
            seen.next_row();
        }
        Ok(())
    }

    pub fn decode(&self) -> Result<DenseMatrix> {
        self.validate()?;
        let mut out = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            let s0 = self.row_ptr[r] as usize;
            for s in s0..self.row_ptr[r + 1] as usize {
                let value = self.omega[s - s0 + 1];
                for i in self.omega_ptr[s] as usize..self.omega_ptr[s + 1] as usize {
                    out[r * self.cols + self.col_indices[i] as usize] = value;
                }
            }
        }
        DenseMatrix::with_element_bits(self.rows, self.cols, out, self.element_bits)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn element_bits(&self) -> u32 {
        self.element_bits
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn omega_ptr(&self) -> &[u32] {
        &self.omega_ptr
    }

    pub fn row_ptr(&self) -> &[u32] {
        &self.row_ptr
    }

    /// Number of segments including padded empty ones.
    pub fn segment_count(&self) -> usize {
        self.omega_ptr.len().saturating_sub(1)
    }

    pub fn col_width(&self) -> IndexWidth {
        width_for(self.cols.saturating_sub(1)).expect("column count fits")
    }

    pub fn omega_ptr_width(&self) -> IndexWidth {
        width_for(self.col_indices.len()).expect("validated length")
    }

    pub fn row_ptr_width(&self) -> IndexWidth {
        width_for(self.segment_count()).expect("validated length")
    }

    pub fn entry_counts(&self) -> EntryCounts {
        EntryCounts {
            arrays: vec![
                ArrayEntry {
                    tag: ArrayTag::Values,
                    len: self.omega.len(),
                    bits: self.element_bits,
                },
                ArrayEntry {
                    tag: ArrayTag::ColIndices,
                    len: self.col_indices.len(),
                    bits: self.col_width().bits(),
                },
                ArrayEntry {
                    tag: ArrayTag::OmegaPtr,
                    len: self.omega_ptr.len(),
                    bits: self.omega_ptr_width().bits(),
                },
                ArrayEntry {
                    tag: ArrayTag::RowPtr,
                    len: self.row_ptr.len(),
                    bits: self.row_ptr_width().bits(),
                },
            ],
        }
    }
}

fn check_omega(omega: &[f64]) -> Result<()> {
    if omega.first() != Some(&0.0) {
        return Err(Error::malformed(ArrayTag::Values, 0, "alphabet must start with the implicit element 0"));
    }
    let mut seen = std::collections::HashSet::new();
    for (i, v) in omega.iter().enumerate() {
        if !v.is_finite() || !seen.insert(v.to_bits()) {
            return Err(Error::malformed(ArrayTag::Values, i, "alphabet entries must be finite and distinct"));
        }
    }
    Ok(())
}
