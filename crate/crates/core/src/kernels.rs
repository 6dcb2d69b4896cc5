//! Matrix–vector and matrix–matrix products for all four representations,
//! with optional operation tracing.
//!
//! Accounting rules:
//! - only reads of tagged arrays and the final output write are memory
//!   operations; the accumulator lives in a register;
//! - adding the first term into a fresh zero accumulator is free, so a sum of
//!   `c` terms costs `c − 1` additions;
//! - a row range starts with one read of its first row pointer (and, for the
//!   segmented formats, of the first segment pointer); each row then reads the
//!   next row pointer and each segment the next segment pointer.
//!
//! For the segmented formats the inner sums run at the input width `b_a`, the
//! per-segment multiply and the outer accumulation at the output width `b_o`.
//! Arithmetic is always performed in `f64`; widths only label the trace.

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{ArrayTag, CerMatrix, CserMatrix, CsrMatrix, Encoded};
use crate::matrix::{DenseMatrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Sum,
    Mul,
    Read,
    Write,
    Other,
}

impl OpKind {
    pub const ALL: [OpKind; 5] = [OpKind::Sum, OpKind::Mul, OpKind::Read, OpKind::Write, OpKind::Other];

    pub fn name(self) -> &'static str {
        match self {
            OpKind::Sum => "sum",
            OpKind::Mul => "mul",
            OpKind::Read => "read",
            OpKind::Write => "write",
            OpKind::Other => "other",
        }
    }

    pub fn is_memory(self) -> bool {
        matches!(self, OpKind::Read | OpKind::Write)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct OpKey {
    #[serde(rename = "op")]
    pub kind: OpKind,
    pub bits: u32,
    pub source: ArrayTag,
}

/// One line of a serialized trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCount {
    #[serde(flatten)]
    pub key: OpKey,
    pub count: u64,
}

/// Multiset of elementary operations keyed by kind, width and source array.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<OpCount>", into = "Vec<OpCount>")]
pub struct OpTrace {
    counts: BTreeMap<OpKey, u64>,
}

impl From<Vec<OpCount>> for OpTrace {
    fn from(v: Vec<OpCount>) -> Self {
        let mut t = OpTrace::new();
        for c in v {
            t.add(c.key.kind, c.key.bits, c.key.source, c.count);
        }
        t
    }
}

impl From<OpTrace> for Vec<OpCount> {
    fn from(t: OpTrace) -> Self {
        t.iter().collect()
    }
}

impl OpTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, kind: OpKind, bits: u32, source: ArrayTag, count: u64) {
        if count > 0 {
            *self.counts.entry(OpKey { kind, bits, source }).or_insert(0) += count;
        }
    }

    pub fn get(&self, kind: OpKind, bits: u32, source: ArrayTag) -> u64 {
        self.counts.get(&OpKey { kind, bits, source }).copied().unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = OpCount> + '_ {
        self.counts.iter().map(|(&key, &count)| OpCount { key, count })
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn count_kind(&self, kind: OpKind) -> u64 {
        self.iter().filter(|c| c.key.kind == kind).map(|c| c.count).sum()
    }

    /// Operations of `kind` on `source`, over all widths.
    pub fn count(&self, kind: OpKind, source: ArrayTag) -> u64 {
        self.iter()
            .filter(|c| c.key.kind == kind && c.key.source == source)
            .map(|c| c.count)
            .sum()
    }

    pub fn merge(&mut self, other: &OpTrace) {
        for c in other.iter() {
            self.add(c.key.kind, c.key.bits, c.key.source, c.count);
        }
    }

    /// Every count multiplied by `factor`.
    pub fn scaled(&self, factor: u64) -> OpTrace {
        OpTrace {
            counts: self.counts.iter().map(|(&k, &c)| (k, c * factor)).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KernelConfig {
    /// Output width `b_o`; `None` means `max(b_a, b_Ω)`.
    pub output_bits: Option<u32>,
}

impl KernelConfig {
    pub fn output_bits(&self, input_bits: u32, element_bits: u32) -> u32 {
        self.output_bits.unwrap_or(input_bits.max(element_bits))
    }
}

/// A matrix representation that can multiply vectors.
pub trait DotKernel {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn element_bits(&self) -> u32;

    /// Computes the entries `rows` of `A·x`.
    fn dot_rows(&self, x: &Vector, rows: Range<usize>, cfg: &KernelConfig, trace: Option<&mut OpTrace>) -> Vec<f64>;
}

fn check_dims<K: DotKernel + ?Sized>(a: &K, x: &Vector, rows: &Range<usize>) -> Result<()> {
    if x.len() != a.cols() {
        return Err(Error::DimensionMismatch {
            what: "input vector length",
            expected: a.cols(),
            actual: x.len(),
        });
    }
    if rows.start > rows.end || rows.end > a.rows() {
        return Err(Error::invalid(format!("row range {rows:?} outside 0..{}", a.rows())));
    }
    Ok(())
}

/// `A·x` with the default output width.
pub fn dot<K: DotKernel + ?Sized>(a: &K, x: &Vector, trace: Option<&mut OpTrace>) -> Result<Vector> {
    dot_with(a, x, &KernelConfig::default(), trace)
}

pub fn dot_with<K: DotKernel + ?Sized>(
    a: &K,
    x: &Vector,
    cfg: &KernelConfig,
    trace: Option<&mut OpTrace>,
) -> Result<Vector> {
    dot_range(a, x, 0..a.rows(), cfg, trace)
}

/// Entries `rows` of `A·x`; used to trace a single scalar product.
pub fn dot_range<K: DotKernel + ?Sized>(
    a: &K,
    x: &Vector,
    rows: Range<usize>,
    cfg: &KernelConfig,
    trace: Option<&mut OpTrace>,
) -> Result<Vector> {
    check_dims(a, x, &rows)?;
    let bits = cfg.output_bits(x.bits, a.element_bits());
    Ok(Vector::with_bits(a.dot_rows(x, rows, cfg, trace), bits))
}

/// `A·X` for an `n × L` matrix `X`, one column kernel per column.
pub fn matmul<K: DotKernel + ?Sized>(
    a: &K,
    x: &DenseMatrix,
    cfg: &KernelConfig,
    mut trace: Option<&mut OpTrace>,
) -> Result<DenseMatrix> {
    if x.rows() != a.cols() {
        return Err(Error::DimensionMismatch {
            what: "right operand rows",
            expected: a.cols(),
            actual: x.rows(),
        });
    }
    let bits = cfg.output_bits(x.element_bits(), a.element_bits());
    let mut columns = Vec::with_capacity(x.cols());
    for c in 0..x.cols() {
        let col = x.column(c, x.element_bits());
        columns.push(Vector::with_bits(a.dot_rows(&col, 0..a.rows(), cfg, trace.as_deref_mut()), bits));
    }
    Ok(DenseMatrix::from_columns(a.rows(), &columns, bits))
}

pub fn dot_dense(a: &DenseMatrix, x: &Vector, trace: Option<&mut OpTrace>) -> Result<Vector> {
    dot(a, x, trace)
}

pub fn dot_csr(a: &CsrMatrix, x: &Vector, trace: Option<&mut OpTrace>) -> Result<Vector> {
    dot(a, x, trace)
}

pub fn dot_cer(a: &CerMatrix, x: &Vector, trace: Option<&mut OpTrace>) -> Result<Vector> {
    dot(a, x, trace)
}

pub fn dot_cser(a: &CserMatrix, x: &Vector, trace: Option<&mut OpTrace>) -> Result<Vector> {
    dot(a, x, trace)
}

impl DotKernel for DenseMatrix {
    fn rows(&self) -> usize {
        DenseMatrix::rows(self)
    }

    fn cols(&self) -> usize {
        DenseMatrix::cols(self)
    }

    fn element_bits(&self) -> u32 {
        DenseMatrix::element_bits(self)
    }

    fn dot_rows(&self, x: &Vector, rows: Range<usize>, cfg: &KernelConfig, trace: Option<&mut OpTrace>) -> Vec<f64> {
        let out: Vec<f64> = rows
            .clone()
            .map(|r| {
                let mut acc = 0.0;
                for (a, b) in self.row(r).iter().zip(&x.values) {
                    acc += a * b;
                }
                acc
            })
            .collect();
        if let Some(t) = trace {
            let (m, n) = (rows.len() as u64, DenseMatrix::cols(self) as u64);
            let b_o = cfg.output_bits(x.bits, DenseMatrix::element_bits(self));
            t.add(OpKind::Read, DenseMatrix::element_bits(self), ArrayTag::Values, m * n);
            t.add(OpKind::Read, x.bits, ArrayTag::Input, m * n);
            t.add(OpKind::Mul, b_o, ArrayTag::None, m * n);
            t.add(OpKind::Sum, b_o, ArrayTag::None, m * n.saturating_sub(1));
            t.add(OpKind::Write, b_o, ArrayTag::Output, m);
        }
        out
    }
}

impl DotKernel for CsrMatrix {
    fn rows(&self) -> usize {
        CsrMatrix::rows(self)
    }

    fn cols(&self) -> usize {
        CsrMatrix::cols(self)
    }

    fn element_bits(&self) -> u32 {
        CsrMatrix::element_bits(self)
    }

    fn dot_rows(&self, x: &Vector, rows: Range<usize>, cfg: &KernelConfig, trace: Option<&mut OpTrace>) -> Vec<f64> {
        let (w, col, ptr) = (self.values(), self.col_indices(), self.row_ptr());
        let mut sums = 0u64;
        let out: Vec<f64> = rows
            .clone()
            .map(|r| {
                let (s, e) = (ptr[r] as usize, ptr[r + 1] as usize);
                let mut acc = 0.0;
                for i in s..e {
                    acc += w[i] * x.values[col[i] as usize];
                }
                sums += (e - s).saturating_sub(1) as u64;
                acc
            })
            .collect();
        if let Some(t) = trace {
            let m = rows.len() as u64;
            let nnz = (ptr[rows.end] - ptr[rows.start]) as u64;
            let b_o = cfg.output_bits(x.bits, self.element_bits());
            t.add(OpKind::Read, self.row_ptr_width().bits(), ArrayTag::RowPtr, m + u64::from(m > 0));
            t.add(OpKind::Read, self.element_bits(), ArrayTag::Values, nnz);
            t.add(OpKind::Read, self.col_width().bits(), ArrayTag::ColIndices, nnz);
            t.add(OpKind::Read, x.bits, ArrayTag::Input, nnz);
            t.add(OpKind::Mul, b_o, ArrayTag::None, nnz);
            t.add(OpKind::Sum, b_o, ArrayTag::None, sums);
            t.add(OpKind::Write, b_o, ArrayTag::Output, m);
        }
        out
    }
}

/// Counters shared by the two segmented kernels.
#[derive(Default)]
struct SegmentedCounts {
    segments: u64,
    nonempty: u64,
    nnz: u64,
    inner_sums: u64,
    outer_sums: u64,
}

/// Walks the segments of `rows`, calling `element(s, r)` for the value of each
/// non-empty segment `s` in row `r`.
fn segmented_rows(
    col: &[u32],
    omega_ptr: &[u32],
    row_ptr: &[u32],
    x: &[f64],
    rows: Range<usize>,
    counts: &mut SegmentedCounts,
    element: impl Fn(usize, usize) -> f64,
) -> Vec<f64> {
    rows.map(|r| {
        let (s0, s1) = (row_ptr[r] as usize, row_ptr[r + 1] as usize);
        let mut acc = 0.0;
        let mut terms = 0u64;
        for s in s0..s1 {
            let (a, b) = (omega_ptr[s] as usize, omega_ptr[s + 1] as usize);
            if a == b {
                continue;
            }
            let mut inner = 0.0;
            for &c in &col[a..b] {
                inner += x[c as usize];
            }
            acc += element(s, s0) * inner;
            counts.nnz += (b - a) as u64;
            counts.inner_sums += (b - a - 1) as u64;
            terms += 1;
        }
        counts.segments += (s1 - s0) as u64;
        counts.nonempty += terms;
        counts.outer_sums += terms.saturating_sub(1);
        acc
    })
    .collect()
}

fn trace_segmented(
    t: &mut OpTrace,
    c: &SegmentedCounts,
    m: u64,
    b_a: u32,
    b_o: u32,
    b_omega: u32,
    widths: (u32, u32, u32),
) {
    let (w_col, w_optr, w_rptr) = widths;
    let entered = u64::from(m > 0);
    t.add(OpKind::Read, w_rptr, ArrayTag::RowPtr, m + entered);
    t.add(OpKind::Read, w_optr, ArrayTag::OmegaPtr, c.segments + entered);
    t.add(OpKind::Read, b_omega, ArrayTag::Values, c.nonempty);
    t.add(OpKind::Read, w_col, ArrayTag::ColIndices, c.nnz);
    t.add(OpKind::Read, b_a, ArrayTag::Input, c.nnz);
    t.add(OpKind::Sum, b_a, ArrayTag::None, c.inner_sums);
    t.add(OpKind::Mul, b_o, ArrayTag::None, c.nonempty);
    t.add(OpKind::Sum, b_o, ArrayTag::None, c.outer_sums);
    t.add(OpKind::Write, b_o, ArrayTag::Output, m);
}

impl DotKernel for CerMatrix {
    fn rows(&self) -> usize {
        CerMatrix::rows(self)
    }

    fn cols(&self) -> usize {
        CerMatrix::cols(self)
    }

    fn element_bits(&self) -> u32 {
        CerMatrix::element_bits(self)
    }

    fn dot_rows(&self, x: &Vector, rows: Range<usize>, cfg: &KernelConfig, trace: Option<&mut OpTrace>) -> Vec<f64> {
        let omega = self.omega();
        let mut counts = SegmentedCounts::default();
        let m = rows.len() as u64;
        let out = segmented_rows(
            self.col_indices(),
            self.omega_ptr(),
            self.row_ptr(),
            &x.values,
            rows,
            &mut counts,
            |s, s0| omega[s - s0 + 1],
        );
        if let Some(t) = trace {
            let b_o = cfg.output_bits(x.bits, self.element_bits());
            let widths = (
                self.col_width().bits(),
                self.omega_ptr_width().bits(),
                self.row_ptr_width().bits(),
            );
            trace_segmented(t, &counts, m, x.bits, b_o, self.element_bits(), widths);
        }
        out
    }
}

impl DotKernel for CserMatrix {
    fn rows(&self) -> usize {
        CserMatrix::rows(self)
    }

    fn cols(&self) -> usize {
        CserMatrix::cols(self)
    }

    fn element_bits(&self) -> u32 {
        CserMatrix::element_bits(self)
    }

    fn dot_rows(&self, x: &Vector, rows: Range<usize>, cfg: &KernelConfig, trace: Option<&mut OpTrace>) -> Vec<f64> {
        let (omega, oi) = (self.omega(), self.omega_indices());
        let mut counts = SegmentedCounts::default();
        let m = rows.len() as u64;
        let out = segmented_rows(
            self.col_indices(),
            self.omega_ptr(),
            self.row_ptr(),
            &x.values,
            rows,
            &mut counts,
            |s, _| omega[oi[s] as usize],
        );
        if let Some(t) = trace {
            let b_o = cfg.output_bits(x.bits, self.element_bits());
            let widths = (
                self.col_width().bits(),
                self.omega_ptr_width().bits(),
                self.row_ptr_width().bits(),
            );
            trace_segmented(t, &counts, m, x.bits, b_o, self.element_bits(), widths);
            t.add(OpKind::Read, self.omega_index_width().bits(), ArrayTag::OmegaIndices, counts.segments);
        }
        out
    }
}

impl DotKernel for Encoded {
    fn rows(&self) -> usize {
        Encoded::rows(self)
    }

    fn cols(&self) -> usize {
        Encoded::cols(self)
    }

    fn element_bits(&self) -> u32 {
        Encoded::element_bits(self)
    }

    fn dot_rows(&self, x: &Vector, rows: Range<usize>, cfg: &KernelConfig, trace: Option<&mut OpTrace>) -> Vec<f64> {
        match self {
            Encoded::Dense(a) => a.dot_rows(x, rows, cfg, trace),
            Encoded::Csr(a) => a.dot_rows(x, rows, cfg, trace),
            Encoded::Cer(a) => a.dot_rows(x, rows, cfg, trace),
            Encoded::Cser(a) => a.dot_rows(x, rows, cfg, trace),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::formats::FormatKind;
    use crate::testing::{matrix_m, TRACED_ROW};

    fn row_trace(kind: FormatKind) -> OpTrace {
        let a = Encoded::encode(kind, &matrix_m()).unwrap();
        let x = Vector::ones(12);
        let mut t = OpTrace::new();
        let r = TRACED_ROW;
        dot_range(&a, &x, r..r + 1, &KernelConfig::default(), Some(&mut t)).unwrap();
        t
    }

    #[test]
    fn traced_row_totals() {
        assert_eq!(row_trace(FormatKind::Dense).total(), 48);
        assert_eq!(row_trace(FormatKind::Csr).total(), 32);
        let cer = row_trace(FormatKind::Cer);
        assert_eq!(cer.total(), 24);
        assert_eq!(cer.count_kind(OpKind::Read), 17);
        assert_eq!(cer.count_kind(OpKind::Mul), 1);
        assert_eq!(cer.count_kind(OpKind::Sum), 5);
        assert_eq!(cer.count_kind(OpKind::Write), 1);
        assert_eq!(row_trace(FormatKind::Cser).total(), 25);
    }

    #[test]
    fn products_agree() {
        let m = matrix_m();
        for kind in FormatKind::ALL {
            let a = Encoded::encode(kind, &m).unwrap();
            assert_eq!(dot(&a, &Vector::ones(12), None).unwrap().values, vec![22.0, 24.0, 17.0, 23.0, 16.0]);
        }
    }

    #[test]
    fn identity_and_mismatch() {
        let id = DenseMatrix::from_rows(&[[1., 0., 0.], [0., 1., 0.], [0., 0., 1.]]).unwrap();
        let x = Vector::new(vec![1., 2., 3.]);
        assert_eq!(dot_dense(&id, &x, None).unwrap().values, x.values);
        assert!(matches!(dot_dense(&id, &Vector::ones(2), None), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn empty_csr_row() {
        let a = CsrMatrix::encode(&DenseMatrix::zeros(1, 4)).unwrap();
        let mut t = OpTrace::new();
        let y = dot_csr(&a, &Vector::ones(4), Some(&mut t)).unwrap();
        assert_eq!(y.values, vec![0.0]);
        assert_eq!(t.count(OpKind::Read, ArrayTag::RowPtr), 2);
        assert_eq!(t.count_kind(OpKind::Write), 1);
        assert_eq!(t.total(), 3);
    }

    #[test]
    fn padded_segment_costs_one_pointer_read() {
        let a = DenseMatrix::from_rows(&[[1.0, 1.0, 2.0], [0.0, 2.0, 0.0]]).unwrap();
        let cer = CerMatrix::encode(&a).unwrap();
        let mut t = OpTrace::new();
        dot_range(&cer, &Vector::ones(3), 1..2, &KernelConfig::default(), Some(&mut t)).unwrap();
        // entry pair + row pointer + two segment pointers (one empty)
        assert_eq!(t.count(OpKind::Read, ArrayTag::OmegaPtr), 3);
        assert_eq!(t.count_kind(OpKind::Mul), 1);
    }

    #[test]
    fn matmul_scales_linearly() {
        let m = matrix_m();
        let cer = CerMatrix::encode(&m).unwrap();
        let x = DenseMatrix::filled(12, 3, 1.0).unwrap();
        let mut one = OpTrace::new();
        dot_cer(&cer, &Vector::ones(12), Some(&mut one)).unwrap();
        let mut three = OpTrace::new();
        let y = matmul(&cer, &x, &KernelConfig::default(), Some(&mut three)).unwrap();
        assert_eq!(three, one.scaled(3));
        assert_eq!(y.column(2, 32).values, vec![22.0, 24.0, 17.0, 23.0, 16.0]);
    }

    #[test]
    fn trace_serializes() {
        let t = row_trace(FormatKind::Cser);
        let s = serde_json::to_string(&t).unwrap();
        assert_eq!(serde_json::from_str::<OpTrace>(&s).unwrap(), t);
    }
}
