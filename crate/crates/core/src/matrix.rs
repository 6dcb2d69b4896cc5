//! Dense row-major matrices and input vectors.

use crate::error::{Error, Result};

/// Bit widths an element of a dense matrix may be stored with.
pub const ELEMENT_BITS: [u32; 4] = [8, 16, 32, 64];

/// Row-major element grid. `element_bits` is the storage width of one
/// element; arithmetic is always carried out in `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
    element_bits: u32,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        Self::with_element_bits(rows, cols, values, 32)
    }

    pub fn with_element_bits(
        rows: usize,
        cols: usize,
        mut values: Vec<f64>,
        element_bits: u32,
    ) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "value count",
                expected: rows * cols,
                actual: values.len(),
            });
        }
        check_element_bits(element_bits)?;
        for (i, v) in values.iter_mut().enumerate() {
            if !v.is_finite() {
                return Err(Error::invalid(format!("non-finite value at position {i}")));
            }
            // fold -0.0 into 0.0 so that equal values compare and hash alike
            *v += 0.0;
        }
        Ok(Self {
            rows,
            cols,
            values,
            element_bits,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(m * n);
        for r in rows {
            let r = r.as_ref();
            if r.len() != n {
                return Err(Error::DimensionMismatch {
                    what: "row length",
                    expected: n,
                    actual: r.len(),
                });
            }
            values.extend_from_slice(r);
        }
        Self::new(m, n, values)
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            values: vec![0.0; rows * cols],
            element_bits: 32,
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Result<Self> {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Total element count `m·n`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn element_bits(&self) -> u32 {
        self.element_bits
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Same values, different element width metadata.
    pub fn with_bits(mut self, element_bits: u32) -> Result<Self> {
        check_element_bits(element_bits)?;
        self.element_bits = element_bits;
        Ok(self)
    }

    /// Column `c` as a vector with the given element width.
    pub fn column(&self, c: usize, bits: u32) -> Vector {
        let values = (0..self.rows).map(|r| self.get(r, c)).collect();
        Vector { values, bits }
    }

    pub(crate) fn from_columns(rows: usize, columns: &[Vector], element_bits: u32) -> Self {
        let cols = columns.len();
        let mut values = vec![0.0; rows * cols];
        for (c, col) in columns.iter().enumerate() {
            for (r, v) in col.values.iter().enumerate() {
                values[r * cols + c] = *v;
            }
        }
        Self {
            rows,
            cols,
            values,
            element_bits,
        }
    }

    /// Storage of the dense representation in bits.
    pub fn storage_bits(&self) -> u64 {
        self.values.len() as u64 * u64::from(self.element_bits)
    }
}

pub(crate) fn check_element_bits(bits: u32) -> Result<()> {
    if ELEMENT_BITS.contains(&bits) {
        Ok(())
    } else {
        Err(Error::invalid(format!(
            "element width {bits} not in {{8, 16, 32, 64}}"
        )))
    }
}

/// Input (or output) vector together with the bit width `b_a` of its entries.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    pub values: Vec<f64>,
    pub bits: u32,
}

impl Vector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values, bits: 32 }
    }

    pub fn with_bits(values: Vec<f64>, bits: u32) -> Self {
        Self { values, bits }
    }

    pub fn ones(n: usize) -> Self {
        Self::new(vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_shapes_and_widths() {
        assert!(DenseMatrix::new(2, 2, vec![1.0; 3]).is_err());
        assert!(DenseMatrix::with_element_bits(1, 1, vec![1.0], 12).is_err());
        assert!(DenseMatrix::new(1, 1, vec![f64::NAN]).is_err());
    }

    #[test]
    fn negative_zero_is_canonical() {
        let a = DenseMatrix::new(1, 2, vec![-0.0, 1.0]).unwrap();
        assert_eq!(a.values()[0].to_bits(), 0.0f64.to_bits());
    }

    #[test]
    fn column_extraction() {
        let a = DenseMatrix::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(a.column(1, 32).values, vec![2.0, 4.0]);
        let back = DenseMatrix::from_columns(2, &[a.column(0, 32), a.column(1, 32)], 32);
        assert_eq!(back, a);
    }
}
