use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::matrix::{check_element_bits, DenseMatrix};

use super::cer::row_by_rank;
use super::csr::to_u32;
use super::{
    check_pointers, check_segment, nonzero_frequency_order, width_for, ArrayEntry, ArrayTag, EntryCounts,
    IndexWidth, RowColumns,
};

/// Raw arrays of a [`CserMatrix`].
#[derive(Debug, Clone, PartialEq)]
pub struct CserParts {
    pub rows: usize,
    pub cols: usize,
    pub element_bits: u32,
    pub omega: Vec<f64>,
    pub col_indices: Vec<u32>,
    pub omega_indices: Vec<u32>,
    pub omega_ptr: Vec<u32>,
    pub row_ptr: Vec<u32>,
}

/// Compressed shared elements row matrix.
///
/// Like [`super::CerMatrix`] but every segment names its element through
/// `omegaI`, so no empty segments are needed. `omega` holds the values present
/// in the matrix in ascending order; `omegaI` never points at `0`.
#[derive(Debug, Clone, PartialEq)]
pub struct CserMatrix {
    rows: usize,
    cols: usize,
    element_bits: u32,
    omega: Vec<f64>,
    col_indices: Vec<u32>,
    omega_indices: Vec<u32>,
    omega_ptr: Vec<u32>,
    row_ptr: Vec<u32>,
}

impl CserMatrix {
    /// Segments within a row follow the same element order as the CER
    /// encoder, so both share one `colI` array.
    pub fn encode(a: &DenseMatrix) -> Result<Self> {
        let order = nonzero_frequency_order(a);
        let has_zero = a.values().contains(&0.0);
        let mut omega: Vec<f64> = order.clone();
        if has_zero {
            omega.push(0.0);
        }
        omega.sort_by(f64::total_cmp);
        let position: HashMap<u64, u32> =
            omega.iter().enumerate().map(|(i, v)| (v.to_bits(), i as u32)).collect();
        // rank 0 is reserved for the implicit element
        let rank: HashMap<u64, usize> = order.iter().enumerate().map(|(j, v)| (v.to_bits(), j + 1)).collect();

        let mut col_indices = Vec::new();
        let mut omega_indices = Vec::new();
        let mut omega_ptr = vec![0u32];
        let mut row_ptr = Vec::with_capacity(a.rows() + 1);
        row_ptr.push(0u32);
        let mut buf = Vec::new();
        for r in 0..a.rows() {
            row_by_rank(a.row(r), &rank, &mut buf);
            let mut i = 0;
            while i < buf.len() {
                let j = buf[i].0;
                while i < buf.len() && buf[i].0 == j {
                    col_indices.push(buf[i].1);
                    i += 1;
                }
                omega_indices.push(position[&order[j - 1].to_bits()]);
                omega_ptr.push(to_u32(col_indices.len())?);
            }
            row_ptr.push(to_u32(omega_indices.len())?);
        }
        Ok(Self {
            rows: a.rows(),
            cols: a.cols(),
            element_bits: a.element_bits(),
            omega,
            col_indices,
            omega_indices,
            omega_ptr,
            row_ptr,
        })
    }

    pub fn from_parts(p: CserParts) -> Result<Self> {
        let cser = Self {
            rows: p.rows,
            cols: p.cols,
            element_bits: p.element_bits,
            omega: p.omega,
            col_indices: p.col_indices,
            omega_indices: p.omega_indices,
            omega_ptr: p.omega_ptr,
            row_ptr: p.row_ptr,
        };
        cser.validate()?;
        Ok(cser)
    }

    pub fn into_parts(self) -> CserParts {
        CserParts {
            rows: self.rows,
            cols: self.cols,
            element_bits: self.element_bits,
            omega: self.omega,
            col_indices: self.col_indices,
            omega_indices: self.omega_indices,
            omega_ptr: self.omega_ptr,
            row_ptr: self.row_ptr,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_element_bits(self.element_bits)?;
        for (i, w) in self.omega.windows(2).enumerate() {
            if !(w[0] < w[1]) {
                return Err(Error::malformed(ArrayTag::Values, i + 1, "alphabet must be strictly ascending"));
            }
        }
        if let Some(i) = self.omega.iter().position(|v| !v.is_finite()) {
            return Err(Error::malformed(ArrayTag::Values, i, "alphabet entries must be finite"));
        }
        let segments = self.omega_indices.len();
        check_pointers(ArrayTag::OmegaPtr, &self.omega_ptr, segments + 1, self.col_indices.len())?;
        check_pointers(ArrayTag::RowPtr, &self.row_ptr, self.rows + 1, segments)?;
        let mut seen = RowColumns::new();
        let mut used = vec![u32::MAX; self.omega.len()];
        for r in 0..self.rows {
            for s in self.row_ptr[r] as usize..self.row_ptr[r + 1] as usize {
                let k = self.omega_indices[s] as usize;
                if k >= self.omega.len() || self.omega[k] == 0.0 {
                    return Err(Error::malformed(
                        ArrayTag::OmegaIndices,
                        s,
                        format!("element index {k} is out of range or names the implicit 0"),
                    ));
                }
                if used[k] == r as u32 {
                    return Err(Error::malformed(ArrayTag::OmegaIndices, s, "element repeated within a row"));
                }
                used[k] = r as u32;
                let (start, end) = (self.omega_ptr[s] as usize, self.omega_ptr[s + 1] as usize);
                if start == end {
                    return Err(Error::malformed(ArrayTag::OmegaPtr, s + 1, "empty segment"));
                }
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
            for s in self.row_ptr[r] as usize..self.row_ptr[r + 1] as usize {
                let value = self.omega[self.omega_indices[s] as usize];
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

    pub fn omega_indices(&self) -> &[u32] {
        &self.omega_indices
    }

    pub fn omega_ptr(&self) -> &[u32] {
        &self.omega_ptr
    }

    pub fn row_ptr(&self) -> &[u32] {
        &self.row_ptr
    }

    pub fn segment_count(&self) -> usize {
        self.omega_indices.len()
    }

    pub fn col_width(&self) -> IndexWidth {
        width_for(self.cols.saturating_sub(1)).expect("column count fits")
    }

    pub fn omega_index_width(&self) -> IndexWidth {
        width_for(self.omega.len().saturating_sub(1)).expect("alphabet fits")
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
                    tag: ArrayTag::OmegaIndices,
                    len: self.omega_indices.len(),
                    bits: self.omega_index_width().bits(),
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::CerMatrix;
    use crate::testing::matrix_m;

    #[test]
    fn golden_listing() {
        let m = matrix_m();
        let cser = CserMatrix::encode(&m).unwrap();
        let cer = CerMatrix::encode(&m).unwrap();
        assert_eq!(cser.omega(), &[0.0, 2.0, 3.0, 4.0]);
        assert_eq!(cser.omega_indices(), &[3, 2, 1, 3, 3, 2, 1, 3, 2, 3]);
        assert_eq!(cser.col_indices(), cer.col_indices());
        assert_eq!(cser.omega_ptr(), cer.omega_ptr());
        assert_eq!(cser.row_ptr(), cer.row_ptr());
        assert_eq!(cser.entry_counts().total(), 59);
        assert_eq!(cser.decode().unwrap(), m);
    }

    #[test]
    fn zero_matrix() {
        let cser = CserMatrix::encode(&DenseMatrix::zeros(2, 2)).unwrap();
        assert!(cser.omega_indices().is_empty());
        assert_eq!(cser.omega_ptr(), &[0]);
    }

    #[test]
    fn row_without_zero() {
        let a = DenseMatrix::from_rows(&[[4.0, 4.0, 4.0]]).unwrap();
        let cser = CserMatrix::encode(&a).unwrap();
        assert_eq!(cser.omega(), &[4.0]);
        assert_eq!(cser.omega_indices(), &[0]);
        assert_eq!(cser.col_indices(), &[0, 1, 2]);
        assert_eq!(cser.omega_ptr(), &[0, 3]);
        assert_eq!(cser.row_ptr(), &[0, 1]);
        assert_eq!(cser.decode().unwrap(), a);
    }

    #[test]
    fn rejects_index_of_zero() {
        let mut p = CserMatrix::encode(&matrix_m()).unwrap().into_parts();
        p.omega_indices[0] = 0;
        assert!(matches!(
            CserMatrix::from_parts(p),
            Err(Error::Malformed { array: ArrayTag::OmegaIndices, offset: 0, .. })
        ));
    }
}
