//! Closed-form per-element storage and energy of the four representations.
//!
//! Notation: `N = m·n`, `nnz = (1 − p₀)N`, `S = m(k̄ + k̃)` CER segments,
//! `S' = m·k̄` CSER segments, `K` alphabet size. Index widths are `w_c` (colI),
//! `w_p` (omegaPtr), `w_r` (rowPtr) and `w_oi` (omegaI). Storage in bits per
//! element:
//!
//! ```text
//!          asymptotic                              exact
//! dense    b_Ω                                     b_Ω
//! CSR      (1−p₀)(b_Ω + w_c) + w_r/n               [nnz(b_Ω + w_c) + (m+1)w_r] / N
//! CER      (1−p₀)w_c + (k̄+k̃)/n · w_p               [K·b_Ω + nnz·w_c + (S+1)w_p + (m+1)w_r] / N
//! CSER     (1−p₀)w_c + k̄/n · (w_oi + w_p)          [K·b_Ω + nnz·w_c + S'·w_oi + (S'+1)w_p + (m+1)w_r] / N
//! ```
//!
//! Energy per element, with `σ` sum, `μ` mul, `γ_X` a read of array `X` and
//! `δ` the output write:
//!
//! ```text
//! c_a = σ(b_a) + γ_in + γ_colI
//! c_Ω = γ_omegaPtr + γ_Ω + μ(b_o) + σ(b_o) − σ(b_a)
//! E_dense = σ(b_o) + μ(b_o) + γ_in + γ_values + δ/n
//! E_CSR   = (1−p₀)(σ(b_o) + μ(b_o) + γ_in + γ_W + γ_colI) + (γ_rowPtr + δ)/n
//! E_CER   = (1−p₀)c_a + (k̄/n)c_Ω + (k̃/n)γ_omegaPtr + (γ_rowPtr + δ)/n
//! E_CSER  = (1−p₀)c_a + (k̄/n)(c_Ω + γ_omegaI) + (γ_rowPtr + δ)/n
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::formats::{index_bitwidth, ArrayTag, FormatKind, IndexWidth};
use crate::kernels::OpKind;
use crate::stats::MatrixStats;

use super::{ArraySizes, CostTable, Tier, TierPolicy};

/// How index widths are chosen in the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum IndexPolicy {
    /// Each index array gets the width the encoder would pick.
    #[default]
    PerArray,
    /// One width `b_I` for every index array.
    Uniform(IndexWidth),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageMode {
    /// Leading terms only.
    Asymptotic,
    /// Every array entry including sentinels and the alphabet.
    Exact,
}

/// Distribution statistics, shape and widths fed to the closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FormulaInputs {
    pub p0: f64,
    pub k_bar: f64,
    pub k_tilde: f64,
    pub rows: usize,
    pub cols: usize,
    pub alphabet_len: usize,
    pub element_bits: u32,
    pub input_bits: u32,
    pub output_bits: u32,
    pub index: IndexPolicy,
    pub tiers: TierPolicy,
}

/// Widths of the index arrays of one representation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArrayWidths {
    pub col: u32,
    pub omega_ptr: u32,
    pub row_ptr: u32,
    pub omega_index: u32,
}

impl FormulaInputs {
    /// Inputs from measured statistics; `b_o = max(b_a, b_Ω)`, per-array
    /// widths and tiers.
    pub fn from_stats(s: &MatrixStats, element_bits: u32, input_bits: u32) -> Self {
        Self {
            p0: s.p0,
            k_bar: s.k_bar,
            k_tilde: s.k_tilde,
            rows: s.rows,
            cols: s.cols,
            alphabet_len: s.alphabet_len,
            element_bits,
            input_bits,
            output_bits: element_bits.max(input_bits),
            index: IndexPolicy::PerArray,
            tiers: TierPolicy::PerArray,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p0) {
            return Err(Error::invalid(format!("p0 = {} outside [0, 1]", self.p0)));
        }
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::EmptyInput);
        }
        if self.k_bar < 0.0 || self.k_tilde < 0.0 {
            return Err(Error::invalid("segment statistics must be non-negative"));
        }
        Ok(())
    }

    pub fn len(&self) -> f64 {
        self.rows as f64 * self.cols as f64
    }

    pub fn nnz(&self) -> f64 {
        ((1.0 - self.p0) * self.len()).round()
    }

    /// Segment count of the given representation (`S` or `S'`).
    pub fn segments(&self, kind: FormatKind) -> f64 {
        let per_row = match kind {
            FormatKind::Cer => self.k_bar + self.k_tilde,
            _ => self.k_bar,
        };
        (per_row * self.rows as f64).round()
    }

    pub fn widths(&self, kind: FormatKind) -> Result<ArrayWidths> {
        if let IndexPolicy::Uniform(w) = self.index {
            let b = w.bits();
            return Ok(ArrayWidths {
                col: b,
                omega_ptr: b,
                row_ptr: b,
                omega_index: b,
            });
        }
        let nnz = self.nnz() as u64;
        let row_bound = match kind {
            FormatKind::Dense | FormatKind::Csr => nnz,
            _ => self.segments(kind) as u64,
        };
        Ok(ArrayWidths {
            col: index_bitwidth(self.cols.saturating_sub(1) as u64)?.bits(),
            omega_ptr: index_bitwidth(nnz)?.bits(),
            row_ptr: index_bitwidth(row_bound)?.bits(),
            omega_index: index_bitwidth(self.alphabet_len.saturating_sub(1) as u64)?.bits(),
        })
    }

    /// Array sizes in bytes implied by the statistics, for tier selection.
    pub fn array_sizes(&self, kind: FormatKind) -> Result<ArraySizes> {
        let w = self.widths(kind)?;
        let (m, n, nnz) = (self.rows as f64, self.cols as f64, self.nnz());
        let bytes = |len: f64, bits: u32| (len * f64::from(bits) / 8.0).ceil() as u64;
        let mut sizes = ArraySizes {
            footprint: bytes(self.len(), self.element_bits),
            ..Default::default()
        };
        let b = &mut sizes.bytes;
        b.insert(ArrayTag::Input, bytes(n, self.input_bits));
        b.insert(ArrayTag::Output, bytes(m, self.output_bits));
        let k = self.alphabet_len as f64;
        match kind {
            FormatKind::Dense => {
                b.insert(ArrayTag::Values, bytes(self.len(), self.element_bits));
            }
            FormatKind::Csr => {
                b.insert(ArrayTag::Values, bytes(nnz, self.element_bits));
                b.insert(ArrayTag::ColIndices, bytes(nnz, w.col));
                b.insert(ArrayTag::RowPtr, bytes(m + 1.0, w.row_ptr));
            }
            FormatKind::Cer | FormatKind::Cser => {
                let s = self.segments(kind);
                b.insert(ArrayTag::Values, bytes(k, self.element_bits));
                b.insert(ArrayTag::ColIndices, bytes(nnz, w.col));
                b.insert(ArrayTag::OmegaPtr, bytes(s + 1.0, w.omega_ptr));
                b.insert(ArrayTag::RowPtr, bytes(m + 1.0, w.row_ptr));
                if kind == FormatKind::Cser {
                    b.insert(ArrayTag::OmegaIndices, bytes(s, w.omega_index));
                }
            }
        }
        Ok(sizes)
    }
}

/// Storage in bits per element.
pub fn estimate_storage(kind: FormatKind, x: &FormulaInputs, mode: StorageMode) -> Result<f64> {
    x.validate()?;
    let w = x.widths(kind)?;
    let (m, n, len) = (x.rows as f64, x.cols as f64, x.len());
    let (p0, nnz, b_omega) = (x.p0, x.nnz(), f64::from(x.element_bits));
    let (wc, wp, wr, woi) = (
        f64::from(w.col),
        f64::from(w.omega_ptr),
        f64::from(w.row_ptr),
        f64::from(w.omega_index),
    );
    let k = x.alphabet_len as f64;
    let s = x.segments(kind);
    Ok(match (kind, mode) {
        (FormatKind::Dense, _) => b_omega,
        (FormatKind::Csr, StorageMode::Asymptotic) => (1.0 - p0) * (b_omega + wc) + wr / n,
        (FormatKind::Csr, StorageMode::Exact) => (nnz * (b_omega + wc) + (m + 1.0) * wr) / len,
        (FormatKind::Cer, StorageMode::Asymptotic) => (1.0 - p0) * wc + (x.k_bar + x.k_tilde) / n * wp,
        (FormatKind::Cer, StorageMode::Exact) => {
            (k * b_omega + nnz * wc + (s + 1.0) * wp + (m + 1.0) * wr) / len
        }
        (FormatKind::Cser, StorageMode::Asymptotic) => (1.0 - p0) * wc + x.k_bar / n * (woi + wp),
        (FormatKind::Cser, StorageMode::Exact) => {
            (k * b_omega + nnz * wc + s * woi + (s + 1.0) * wp + (m + 1.0) * wr) / len
        }
    })
}

/// Energy (or time, with a latency table) per element.
pub fn estimate_energy(kind: FormatKind, x: &FormulaInputs, table: &CostTable) -> Result<f64> {
    x.validate()?;
    let w = x.widths(kind)?;
    let sizes = x.array_sizes(kind)?;
    let mem = |op: OpKind, tag: ArrayTag, bits: u32| -> Result<f64> {
        Ok(table.cost(op, bits, x.tiers.tier(tag, &sizes))?.0)
    };
    let gamma = |tag: ArrayTag, bits: u32| mem(OpKind::Read, tag, bits);
    let arith = |op: OpKind, bits: u32| -> Result<f64> { Ok(table.cost(op, bits, Tier::NotApplicable)?.0) };

    let (b_a, b_o, b_omega) = (x.input_bits, x.output_bits, x.element_bits);
    let (sigma_a, sigma_o, mu) = (arith(OpKind::Sum, b_a)?, arith(OpKind::Sum, b_o)?, arith(OpKind::Mul, b_o)?);
    let gamma_in = gamma(ArrayTag::Input, b_a)?;
    let gamma_values = gamma(ArrayTag::Values, b_omega)?;
    let delta = mem(OpKind::Write, ArrayTag::Output, b_o)?;
    let n = x.cols as f64;
    let p0 = x.p0;

    Ok(match kind {
        FormatKind::Dense => sigma_o + mu + gamma_in + gamma_values + delta / n,
        FormatKind::Csr => {
            let gamma_col = gamma(ArrayTag::ColIndices, w.col)?;
            let gamma_row = gamma(ArrayTag::RowPtr, w.row_ptr)?;
            (1.0 - p0) * (sigma_o + mu + gamma_in + gamma_values + gamma_col) + (gamma_row + delta) / n
        }
        FormatKind::Cer | FormatKind::Cser => {
            let gamma_col = gamma(ArrayTag::ColIndices, w.col)?;
            let gamma_ptr = gamma(ArrayTag::OmegaPtr, w.omega_ptr)?;
            let gamma_row = gamma(ArrayTag::RowPtr, w.row_ptr)?;
            let c_a = sigma_a + gamma_in + gamma_col;
            let c_omega = gamma_ptr + gamma_values + mu + sigma_o - sigma_a;
            let tail = (gamma_row + delta) / n;
            if kind == FormatKind::Cer {
                (1.0 - p0) * c_a + x.k_bar / n * c_omega + x.k_tilde / n * gamma_ptr + tail
            } else {
                let gamma_oi = gamma(ArrayTag::OmegaIndices, w.omega_index)?;
                (1.0 - p0) * c_a + x.k_bar / n * (c_omega + gamma_oi) + tail
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costmodel::{default_energy_table, unit_cost_table};
    use crate::formats::Encoded;
    use crate::stats::matrix_stats;
    use crate::testing::matrix_m;

    fn inputs_m() -> FormulaInputs {
        FormulaInputs::from_stats(&matrix_stats(&matrix_m()).unwrap(), 32, 32)
    }

    #[test]
    fn exact_mode_matches_counters() {
        let x = inputs_m();
        for kind in FormatKind::ALL {
            let enc = Encoded::encode(kind, &matrix_m()).unwrap();
            let exact = estimate_storage(kind, &x, StorageMode::Exact).unwrap() * 60.0;
            assert!((exact - enc.storage_bits() as f64).abs() < 1e-9, "{kind}: {exact} vs {}", enc.storage_bits());
        }
    }

    #[test]
    fn dense_values() {
        let x = inputs_m();
        assert_eq!(estimate_storage(FormatKind::Dense, &x, StorageMode::Asymptotic).unwrap(), 32.0);
        let big = FormulaInputs {
            cols: 1_000_000,
            rows: 1,
            tiers: TierPolicy::Fixed(Tier::Under8K),
            ..x
        };
        let e = estimate_energy(FormatKind::Dense, &big, &default_energy_table()).unwrap();
        assert!((e - 14.6).abs() < 1e-5, "{e}");
    }

    #[test]
    fn all_zero_limit() {
        let x = FormulaInputs {
            p0: 1.0,
            k_bar: 0.0,
            k_tilde: 0.0,
            cols: 1 << 20,
            ..inputs_m()
        };
        for kind in [FormatKind::Csr, FormatKind::Cer, FormatKind::Cser] {
            assert!(estimate_storage(kind, &x, StorageMode::Asymptotic).unwrap() < 1e-4);
            assert!(estimate_energy(kind, &x, &unit_cost_table()).unwrap() < 1e-5);
        }
    }

    #[test]
    fn worst_case_favours_csr() {
        let x = FormulaInputs {
            p0: 0.0,
            k_bar: 12.0,
            k_tilde: 0.0,
            ..inputs_m()
        };
        let t = default_energy_table();
        assert!(estimate_energy(FormatKind::Cser, &x, &t).unwrap() >= estimate_energy(FormatKind::Csr, &x, &t).unwrap());
    }

    #[test]
    fn cer_minus_cser_identity() {
        let t = default_energy_table();
        for (k_bar, k_tilde) in [(2.0, 0.0), (3.5, 1.25), (10.0, 4.0)] {
            let x = FormulaInputs {
                k_bar,
                k_tilde,
                index: IndexPolicy::Uniform(IndexWidth::U16),
                tiers: TierPolicy::Fixed(Tier::Under32K),
                ..inputs_m()
            };
            let gamma = t.cost(OpKind::Read, 16, Tier::Under32K).unwrap().0;
            let diff = estimate_energy(FormatKind::Cer, &x, &t).unwrap() - estimate_energy(FormatKind::Cser, &x, &t).unwrap();
            assert!((diff - (k_tilde - k_bar) * gamma / 12.0).abs() < 1e-12);
        }
    }
}
