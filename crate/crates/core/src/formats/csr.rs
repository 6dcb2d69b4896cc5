use crate::error::{Error, Result};
use crate::matrix::{check_element_bits, DenseMatrix};

use super::{check_pointers, check_segment, width_for, ArrayEntry, ArrayTag, EntryCounts, IndexWidth, RowColumns};

/// Raw arrays of a [`CsrMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct CsrParts {
    pub rows: usize,
    pub cols: usize,
    pub element_bits: u32,
    pub values: Vec<f64>,
    pub col_indices: Vec<u32>,
    pub row_ptr: Vec<u32>,
}

/// Compressed sparse row matrix: non-zero values `W`, their column indices
/// and `m + 1` row pointers.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    element_bits: u32,
    values: Vec<f64>,
    col_indices: Vec<u32>,
    row_ptr: Vec<u32>,
}

impl CsrMatrix {
    pub fn encode(a: &DenseMatrix) -> Result<Self> {
        let mut values = Vec::new();
        let mut col_indices = Vec::new();
        let mut row_ptr = Vec::with_capacity(a.rows() + 1);
        row_ptr.push(0);
        for r in 0..a.rows() {
            for (c, &v) in a.row(r).iter().enumerate() {
                if v != 0.0 {
                    values.push(v);
                    col_indices.push(c as u32);
                }
            }
            row_ptr.push(to_u32(values.len())?);
        }
        Ok(Self {
            rows: a.rows(),
            cols: a.cols(),
            element_bits: a.element_bits(),
            values,
            col_indices,
            row_ptr,
        })
    }

    /// Builds from raw arrays and validates them.
    pub fn from_parts(p: CsrParts) -> Result<Self> {
        let csr = Self {
            rows: p.rows,
            cols: p.cols,
            element_bits: p.element_bits,
            values: p.values,
            col_indices: p.col_indices,
            row_ptr: p.row_ptr,
        };
        csr.validate()?;
        Ok(csr)
    }

    pub fn into_parts(self) -> CsrParts {
        CsrParts {
            rows: self.rows,
            cols: self.cols,
            element_bits: self.element_bits,
            values: self.values,
            col_indices: self.col_indices,
            row_ptr: self.row_ptr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_element_bits(self.element_bits)?;
        if self.values.len() != self.col_indices.len() {
            return Err(Error::malformed(
                ArrayTag::Values,
                self.values.len().min(self.col_indices.len()),
                "value and column index arrays differ in length",
            ));
        }
        if let Some(i) = self.values.iter().position(|&v| v == 0.0 || !v.is_finite()) {
            return Err(Error::malformed(ArrayTag::Values, i, "stored value must be finite and non-zero"));
        }
        check_pointers(ArrayTag::RowPtr, &self.row_ptr, self.rows + 1, self.values.len())?;
        let mut seen = RowColumns::new();
        for r in 0..self.rows {
            let (start, end) = (self.row_ptr[r] as usize, self.row_ptr[r + 1] as usize);
            check_segment(self.cols, &self.col_indices, start, end, &mut seen)?;
            seen.next_row();
        }
        Ok(())
    }

    pub fn decode(&self) -> Result<DenseMatrix> {
        self.validate()?;
        let mut out = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            for i in self.row_ptr[r] as usize..self.row_ptr[r + 1] as usize {
                out[r * self.cols + self.col_indices[i] as usize] = self.values[i];
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

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn row_ptr(&self) -> &[u32] {
        &self.row_ptr
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn col_width(&self) -> IndexWidth {
        width_for(self.cols.saturating_sub(1)).expect("column count fits")
    }

    pub fn row_ptr_width(&self) -> IndexWidth {
        width_for(self.nnz()).expect("validated length")
    }

    pub fn entry_counts(&self) -> EntryCounts {
        EntryCounts {
            arrays: vec![
                ArrayEntry {
                    tag: ArrayTag::Values,
                    len: self.values.len(),
                    bits: self.element_bits,
                },
                ArrayEntry {
                    tag: ArrayTag::ColIndices,
                    len: self.col_indices.len(),
                    bits: self.col_width().bits(),
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

pub(crate) fn to_u32(v: usize) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::IndexOverflow(v as u64))
}
