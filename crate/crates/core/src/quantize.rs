//! Uniform quantization, most-frequent-element decomposition and
//! convolution-layer bookkeeping.

use serde::{Deserialize, Serialize};

use crate::costmodel::CostReport;
use crate::error::{Error, Result};
use crate::formats::{ArrayTag, Encoded, FormatKind};
use crate::kernels::{dot, OpKind, OpTrace};
use crate::matrix::{DenseMatrix, Vector};
use crate::precision::{round_to, step};
use crate::stats::empirical_distribution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QuantRange {
    /// Minimum and maximum of the matrix being quantized.
    PerMatrix,
    Explicit { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerSpec {
    /// `K = 2^bits` grid points.
    pub bits: u32,
    pub range: QuantRange,
}

impl QuantizerSpec {
    pub fn new(bits: u32) -> Self {
        Self {
            bits,
            range: QuantRange::PerMatrix,
        }
    }

    pub fn levels(&self) -> Result<usize> {
        if !(1..=24).contains(&self.bits) {
            return Err(Error::invalid(format!("quantizer bits {} outside 1..=24", self.bits)));
        }
        Ok(1usize << self.bits)
    }
}

/// Grid `lo + i·(hi − lo)/(K − 1)`, `i = 0..K`, both endpoints included.
pub fn quantization_grid(lo: f64, hi: f64, levels: usize) -> Vec<f64> {
    let step = (hi - lo) / (levels - 1) as f64;
    (0..levels).map(|i| if i == levels - 1 { hi } else { lo + i as f64 * step }).collect()
}

/// Maps every element to its nearest grid point; exact midpoints go to the
/// lower point. Grid values are rounded to the matrix element width.
pub fn uniform_quantize(w: &DenseMatrix, spec: &QuantizerSpec) -> Result<DenseMatrix> {
    let levels = spec.levels()?;
    if w.is_empty() {
        return Err(Error::EmptyInput);
    }
    let (lo, hi) = match spec.range {
        QuantRange::PerMatrix => w
            .values()
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v))),
        QuantRange::Explicit { lo, hi } => {
            if !(lo < hi) {
                return Err(Error::invalid(format!("quantizer range [{lo}, {hi}] is empty")));
            }
            (lo, hi)
        }
    };
    let bits = w.element_bits();
    if lo == hi {
        return DenseMatrix::with_element_bits(w.rows(), w.cols(), vec![round_to(lo, bits); w.len()], bits);
    }
    let grid: Vec<f64> = quantization_grid(lo, hi, levels).into_iter().map(|g| round_to(g, bits)).collect();
    let step = (hi - lo) / (levels - 1) as f64;
    let values = w
        .values()
        .iter()
        .map(|&x| {
            let t = (x - lo) / step;
            let i = (t - 0.5).ceil().clamp(0.0, (levels - 1) as f64) as usize;
            grid[i]
        })
        .collect();
    DenseMatrix::with_element_bits(w.rows(), w.cols(), values, bits)
}

/// `W_q = Ŵ + ω_max·𝟙` with `0` the most frequent element of `Ŵ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedMatrix {
    pub hat: DenseMatrix,
    pub omega_max: f64,
}

impl DecomposedMatrix {
    /// `Ŵ + ω_max` rounded to the element width.
    pub fn reconstruct(&self) -> Result<DenseMatrix> {
        let bits = self.hat.element_bits();
        let values = self.hat.values().iter().map(|&d| round_to(d + self.omega_max, bits)).collect();
        DenseMatrix::with_element_bits(self.hat.rows(), self.hat.cols(), values, bits)
    }
}

/// Offset `d` with `round(d + ω) == a` at the element width, searched among
/// a few representable neighbours of `a − ω`. When none exists (`|ω|` much
/// larger than `|a|`), the nearest representable non-zero `a − ω` is used and
/// reconstruction is off by at most half a unit in the last place of `d`.
fn offset_for(a: f64, omega: f64, bits: u32) -> f64 {
    if a == omega {
        return 0.0;
    }
    let start = round_to(a - omega, bits);
    let (mut up, mut down) = (start, start);
    for _ in 0..16 {
        for d in [up, down] {
            if d != 0.0 && round_to(d + omega, bits) == a {
                return d;
            }
        }
        up = step(up, bits, true);
        down = step(down, bits, false);
    }
    if start != 0.0 {
        start
    } else {
        step(0.0, bits, a > omega)
    }
}

pub fn decompose_most_frequent(wq: &DenseMatrix) -> Result<DecomposedMatrix> {
    let alphabet = empirical_distribution(wq)?;
    let omega_max = alphabet.mode();
    if omega_max == 0.0 {
        return Ok(DecomposedMatrix {
            hat: wq.clone(),
            omega_max,
        });
    }
    let bits = wq.element_bits();
    let mut offsets = std::collections::HashMap::new();
    for &a in alphabet.elements() {
        offsets.insert(a.to_bits(), offset_for(a, omega_max, bits));
    }
    let values = wq.values().iter().map(|v| offsets[&v.to_bits()]).collect();
    Ok(DecomposedMatrix {
        hat: DenseMatrix::with_element_bits(wq.rows(), wq.cols(), values, bits)?,
        omega_max,
    })
}

/// `Ŵx + ω_max·Σx` using the `kernel` representation of `Ŵ`.
///
/// The correction adds `n − 1` sums for `Σx`, one multiply and `m` sums to
/// the trace; nothing is added when `ω_max = 0`.
pub fn corrected_dot(
    d: &DecomposedMatrix,
    x: &Vector,
    kernel: FormatKind,
    trace: Option<&mut OpTrace>,
) -> Result<Vector> {
    let enc = Encoded::encode(kernel, &d.hat)?;
    corrected_dot_encoded(&enc, d.omega_max, x, trace)
}

/// [`corrected_dot`] for an already encoded `Ŵ`.
pub fn corrected_dot_encoded(
    hat: &Encoded,
    omega_max: f64,
    x: &Vector,
    mut trace: Option<&mut OpTrace>,
) -> Result<Vector> {
    let mut y = dot(hat, x, trace.as_deref_mut())?;
    if omega_max != 0.0 {
        let c = omega_max * x.sum();
        for v in &mut y.values {
            *v += c;
        }
        if let Some(t) = trace {
            t.add(OpKind::Sum, x.bits, ArrayTag::None, x.len().saturating_sub(1) as u64);
            t.add(OpKind::Mul, y.bits, ArrayTag::None, 1);
            t.add(OpKind::Sum, y.bits, ArrayTag::None, y.len() as u64);
        }
    }
    Ok(y)
}

/// Shape of a convolution layer seen as a matrix product: `F_n` filters of
/// `n_ch × m_F × n_F` weights applied to `n_p` patches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvLayerMeta {
    pub filters: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub patches: usize,
}

impl ConvLayerMeta {
    pub fn validate(&self) -> Result<()> {
        if self.filters == 0 || self.channels == 0 || self.height == 0 || self.width == 0 {
            return Err(Error::invalid("convolution dimensions must be positive"));
        }
        if self.patches == 0 {
            return Err(Error::invalid("patch count must be at least 1"));
        }
        Ok(())
    }

    /// `(F_n, n_ch·m_F·n_F)`.
    pub fn matrix_shape(&self) -> (usize, usize) {
        (self.filters, self.channels * self.height * self.width)
    }

    /// Patch count of a stride-`s` convolution without padding.
    pub fn patches_for(input: (usize, usize), kernel: (usize, usize), stride: usize) -> usize {
        let out = |i: usize, k: usize| if i < k { 0 } else { (i - k) / stride + 1 };
        out(input.0, kernel.0) * out(input.1, kernel.1)
    }
}

/// Scales a single-patch report by the layer's patch count.
pub fn conv_weighted_report(meta: &ConvLayerMeta, per_vector: &CostReport) -> Result<CostReport> {
    meta.validate()?;
    Ok(per_vector.scaled(meta.patches as f64))
}
