//! Little-endian binary container for encoded matrices.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "LEMF"
//! 4       2     version (u16) = 1
//! 6       1     format tag: 0 dense, 1 csr, 2 cer, 3 cser
//! 7       1     element width b_Ω in bits
//! 8       4     rows m (u32)
//! 12      4     cols n (u32)
//! 16      1     array count A
//! 17      6·A   per array: tag (u8), entry width in bits (u8), length (u32)
//! ...           arrays in declared order, each length × width/8 bytes
//! ```
//!
//! Array tags: 2 values (dense grid, `W` or `Ω`), 3 colI, 4 omegaI,
//! 5 omegaPtr, 6 rowPtr. Values are stored as f64, f32, f16 or i8 for element
//! widths 64, 32, 16 and 8; index arrays as unsigned integers of their width.
//! The file size is therefore the exact storage count plus `17 + 6·A` bytes.

use std::io::{Read, Write};

use half::f16;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::precision::check_representable;

use super::{
    ArrayEntry, ArrayTag, CerMatrix, CerParts, CserMatrix, CserParts, CsrMatrix, CsrParts, Encoded, FormatKind,
};

pub const MAGIC: &[u8; 4] = b"LEMF";
pub const VERSION: u16 = 1;

/// Header size in bytes for a container holding `arrays` arrays.
pub fn header_len(arrays: usize) -> usize {
    17 + 6 * arrays
}

enum Payload<'a> {
    Values(&'a [f64]),
    Indices(&'a [u32]),
}

fn payloads(x: &Encoded) -> Vec<Payload<'_>> {
    match x {
        Encoded::Dense(a) => vec![Payload::Values(a.values())],
        Encoded::Csr(a) => vec![
            Payload::Values(a.values()),
            Payload::Indices(a.col_indices()),
            Payload::Indices(a.row_ptr()),
        ],
        Encoded::Cer(a) => vec![
            Payload::Values(a.omega()),
            Payload::Indices(a.col_indices()),
            Payload::Indices(a.omega_ptr()),
            Payload::Indices(a.row_ptr()),
        ],
        Encoded::Cser(a) => vec![
            Payload::Values(a.omega()),
            Payload::Indices(a.col_indices()),
            Payload::Indices(a.omega_indices()),
            Payload::Indices(a.omega_ptr()),
            Payload::Indices(a.row_ptr()),
        ],
    }
}

fn put_value(out: &mut Vec<u8>, v: f64, bits: u32) -> Result<()> {
    check_representable(v, bits)?;
    match bits {
        64 => out.extend_from_slice(&v.to_le_bytes()),
        32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
        16 => out.extend_from_slice(&f16::from_f64(v).to_le_bytes()),
        _ => out.push(v as i8 as u8),
    }
    Ok(())
}

fn put_index(out: &mut Vec<u8>, v: u32, bits: u32) {
    match bits {
        8 => out.push(v as u8),
        16 => out.extend_from_slice(&(v as u16).to_le_bytes()),
        _ => out.extend_from_slice(&v.to_le_bytes()),
    }
}

/// Serializes `x`. Fails with `NotRepresentable` if a value would be rounded
/// by its declared element width.
pub fn to_bytes(x: &Encoded) -> Result<Vec<u8>> {
    let entries = x.entry_counts().arrays;
    let data = payloads(x);
    let body: u64 = entries.iter().map(ArrayEntry::bytes).sum();
    let mut out = Vec::with_capacity(header_len(entries.len()) + body as usize);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.push(x.kind().code());
    out.push(x.element_bits() as u8);
    for dim in [x.rows(), x.cols()] {
        let dim = u32::try_from(dim).map_err(|_| Error::IndexOverflow(dim as u64))?;
        out.extend_from_slice(&dim.to_le_bytes());
    }
    out.push(entries.len() as u8);
    for e in &entries {
        out.push(e.tag.code());
        out.push(e.bits as u8);
        out.extend_from_slice(&(e.len as u32).to_le_bytes());
    }
    for (e, p) in entries.iter().zip(data) {
        match p {
            Payload::Values(vs) => {
                for &v in vs {
                    put_value(&mut out, v, e.bits)?;
                }
            }
            Payload::Indices(is) => {
                for &i in is {
                    put_index(&mut out, i, e.bits);
                }
            }
        }
    }
    Ok(out)
}

pub fn write_encoded<W: Write>(x: &Encoded, mut w: W) -> Result<()> {
    let bytes = to_bytes(x)?;
    w.write_all(&bytes).map_err(|e| Error::io("<writer>", e))
}

pub fn read_encoded<R: Read>(mut r: R) -> Result<Encoded> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io("<reader>", e))?;
    from_bytes(&bytes)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::container("truncated", format!("need {n} bytes at offset {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn values(&mut self, len: usize, bits: u32) -> Result<Vec<f64>> {
        let raw = self.take(len * bits as usize / 8)?;
        Ok(match bits {
            64 => raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect(),
            32 => raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4")) as f64)
                .collect(),
            16 => raw
                .chunks_exact(2)
                .map(|c| f16::from_le_bytes(c.try_into().expect("2")).to_f64())
                .collect(),
            _ => raw.iter().map(|&b| b as i8 as f64).collect(),
        })
    }

    fn indices(&mut self, len: usize, bits: u32) -> Result<Vec<u32>> {
        let raw = self.take(len * bits as usize / 8)?;
        Ok(match bits {
            8 => raw.iter().map(|&b| u32::from(b)).collect(),
            16 => raw
                .chunks_exact(2)
                .map(|c| u32::from(u16::from_le_bytes(c.try_into().expect("2"))))
                .collect(),
            _ => raw.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().expect("4"))).collect(),
        })
    }
}

fn expected_tags(kind: FormatKind) -> &'static [ArrayTag] {
    match kind {
        FormatKind::Dense => &[ArrayTag::Values],
        FormatKind::Csr => &[ArrayTag::Values, ArrayTag::ColIndices, ArrayTag::RowPtr],
        FormatKind::Cer => &[ArrayTag::Values, ArrayTag::ColIndices, ArrayTag::OmegaPtr, ArrayTag::RowPtr],
        FormatKind::Cser => &[
            ArrayTag::Values,
            ArrayTag::ColIndices,
            ArrayTag::OmegaIndices,
            ArrayTag::OmegaPtr,
            ArrayTag::RowPtr,
        ],
    }
}

/// Parses and validates a container. Declared widths must equal the widths
/// the encoder derives from the decoded arrays.
pub fn from_bytes(bytes: &[u8]) -> Result<Encoded> {
    let mut c = Cursor { bytes, pos: 0 };
    if c.take(4).ok() != Some(MAGIC.as_slice()) {
        return Err(Error::container("bad-magic", "not a matrix container"));
    }
    let version = c.u16()?;
    if version != VERSION {
        return Err(Error::container("unsupported-version", format!("version {version}")));
    }
    let kind = FormatKind::from_code(c.u8()?)
        .ok_or_else(|| Error::container("unknown-format", "unknown format tag"))?;
    let element_bits = u32::from(c.u8()?);
    let rows = c.u32()? as usize;
    let cols = c.u32()? as usize;
    let count = c.u8()? as usize;
    let tags = expected_tags(kind);
    if count != tags.len() {
        return Err(Error::container(
            "bad-array-list",
            format!("{kind} expects {} arrays, header declares {count}", tags.len()),
        ));
    }
    let mut declared = Vec::with_capacity(count);
    for &want in tags {
        let tag = ArrayTag::from_code(c.u8()?);
        let bits = u32::from(c.u8()?);
        let len = c.u32()? as usize;
        if tag != Some(want) {
            return Err(Error::container("bad-array-list", format!("expected array {want}")));
        }
        declared.push(ArrayEntry { tag: want, len, bits });
    }
    crate::matrix::check_element_bits(element_bits)
        .map_err(|e| Error::container("bad-width", e.to_string()))?;
    for e in &declared[1..] {
        if ![8, 16, 32].contains(&e.bits) {
            return Err(Error::container("bad-width", format!("{} width {}", e.tag, e.bits)));
        }
    }

    let values = c.values(declared[0].len, element_bits)?;
    let mut idx = Vec::new();
    for e in &declared[1..] {
        idx.push(c.indices(e.len, e.bits)?);
    }
    if c.pos != bytes.len() {
        return Err(Error::container("trailing-bytes", format!("{} unread bytes", bytes.len() - c.pos)));
    }
    let mut idx = idx.into_iter();
    let mut next = || idx.next().expect("declared arrays");

    let x = match kind {
        FormatKind::Dense => Encoded::Dense(DenseMatrix::with_element_bits(rows, cols, values, element_bits)?),
        FormatKind::Csr => Encoded::Csr(CsrMatrix::from_parts(CsrParts {
            rows,
            cols,
            element_bits,
            values,
            col_indices: next(),
            row_ptr: next(),
        })?),
        FormatKind::Cer => Encoded::Cer(CerMatrix::from_parts(CerParts {
            rows,
            cols,
            element_bits,
            omega: values,
            col_indices: next(),
            omega_ptr: next(),
            row_ptr: next(),
        })?),
        FormatKind::Cser => Encoded::Cser(CserMatrix::from_parts(CserParts {
            rows,
            cols,
            element_bits,
            omega: values,
            col_indices: next(),
            omega_indices: next(),
            omega_ptr: next(),
            row_ptr: next(),
        })?),
    };
    if x.entry_counts().arrays != declared {
        return Err(Error::container("width-mismatch", "declared widths differ from derived widths"));
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::matrix_m;

    #[test]
    fn round_trip_all_formats() {
        let m = matrix_m();
        for kind in FormatKind::ALL {
            let x = Encoded::encode(kind, &m).unwrap();
            let bytes = to_bytes(&x).unwrap();
            let counts = x.entry_counts();
            assert_eq!(bytes.len() as u64, header_len(counts.arrays.len()) as u64 + counts.storage_bits() / 8);
            assert_eq!(from_bytes(&bytes).unwrap(), x);
        }
    }

    #[test]
    fn rejects_bad_input() {
        let x = Encoded::encode(FormatKind::Cer, &matrix_m()).unwrap();
        let bytes = to_bytes(&x).unwrap();
        let code = |r: Result<Encoded>| match r {
            Err(Error::Container { code, .. }) => code,
            other => panic!("unexpected {other:?}"),
        };
        assert_eq!(code(from_bytes(b"NOPE")), "bad-magic");
        assert_eq!(code(from_bytes(&bytes[..bytes.len() - 1])), "truncated");
        let mut extra = bytes.clone();
        extra.push(0);
        assert_eq!(code(from_bytes(&extra)), "trailing-bytes");
    }

    #[test]
    fn refuses_lossy_values() {
        let a = DenseMatrix::with_element_bits(1, 1, vec![0.1], 16).unwrap();
        assert!(matches!(
            to_bytes(&Encoded::Dense(a)),
            Err(Error::NotRepresentable { bits: 16, .. })
        ));
    }
}
