//! Weight tensor container and benchmark reports.
//!
//! Tensor container layout, all integers little-endian:
//!
//! ```text
//! 0   4  magic "LEMT"
//! 4   2  version (u16) = 1
//! 6   4  header length H (u32)
//! 10  H  UTF-8 JSON {"dtype": "f32"|"f64", "shape": [..], "layout": "row-major", "name": ".."}
//! ..     payload: product(shape) scalars of dtype
//! ```
//!
//! Rank-4 tensors `(F_n, n_ch, m_F, n_F)` are read as `F_n × (n_ch·m_F·n_F)`
//! matrices and need a `<path>.conv.json` sidecar holding the layer's
//! [`ConvLayerMeta`].

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;
use crate::quantize::ConvLayerMeta;

pub const TENSOR_MAGIC: &[u8; 4] = b"LEMT";
pub const TENSOR_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorHeader {
    pub dtype: DType,
    pub shape: Vec<usize>,
    pub layout: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub header: TensorHeader,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(name: impl Into<String>, dtype: DType, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let expected = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).unwrap_or(usize::MAX);
        if expected != data.len() {
            return Err(Error::DimensionMismatch {
                what: "tensor element count",
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            header: TensorHeader {
                dtype,
                shape,
                layout: "row-major".into(),
                name: name.into(),
            },
            data,
        })
    }

    /// Rank-2 tensor holding `a`; f64 only for 64-bit elements.
    pub fn from_matrix(name: impl Into<String>, a: &DenseMatrix) -> Result<Self> {
        let dtype = if a.element_bits() == 64 { DType::F64 } else { DType::F32 };
        Self::new(name, dtype, vec![a.rows(), a.cols()], a.values().to_vec())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header)?;
        let mut out = Vec::with_capacity(10 + header.len() + self.data.len() * self.header.dtype.size());
        out.extend_from_slice(TENSOR_MAGIC);
        out.extend_from_slice(&TENSOR_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for &v in &self.data {
            match self.header.dtype {
                DType::F32 => {
                    if (v as f32) as f64 != v {
                        return Err(Error::NotRepresentable { value: v, bits: 32 });
                    }
                    out.extend_from_slice(&(v as f32).to_le_bytes())
                }
                DType::F64 => out.extend_from_slice(&v.to_le_bytes()),
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 10 || &bytes[..4] != TENSOR_MAGIC {
            return Err(Error::container("bad-magic", "not a tensor container"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != TENSOR_VERSION {
            return Err(Error::container("unsupported-version", format!("tensor version {version}")));
        }
        let hlen = u32::from_le_bytes(bytes[6..10].try_into().expect("4 bytes")) as usize;
        let body = bytes
            .get(10..10usize.saturating_add(hlen))
            .ok_or_else(|| Error::container("truncated-header", "header extends past end of file"))?;
        let header: TensorHeader = serde_json::from_slice(body)
            .map_err(|e| Error::container("bad-header", format!("header is not valid JSON: {e}")))?;
        if header.layout != "row-major" {
            return Err(Error::container("bad-header", format!("layout '{}' unsupported", header.layout)));
        }
        let count = header
            .shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .ok_or_else(|| Error::container("bad-header", "shape product overflows"))?;
        let payload = &bytes[10 + hlen..];
        if Some(payload.len()) != count.checked_mul(header.dtype.size()) {
            return Err(Error::container(
                "payload-length",
                format!(
                    "payload length mismatch: {} bytes for {count} {:?} values",
                    payload.len(),
                    header.dtype
                ),
            ));
        }
        let data = match header.dtype {
            DType::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4")) as f64)
                .collect(),
            DType::F64 => payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8"))).collect(),
        };
        Ok(Self { header, data })
    }

    /// The tensor as a matrix. Rank 4 requires `conv` metadata whose filter
    /// shape matches.
    pub fn to_matrix(&self, conv: Option<&ConvLayerMeta>) -> Result<DenseMatrix> {
        let bits = match self.header.dtype {
            DType::F32 => 32,
            DType::F64 => 64,
        };
        let (rows, cols) = match self.header.shape.as_slice() {
            &[m, n] => (m, n),
            &[f, c, h, w] => {
                let meta = conv.ok_or_else(|| {
                    Error::container("missing-sidecar", "rank-4 tensor needs convolution metadata")
                })?;
                meta.validate()?;
                if (meta.filters, meta.channels, meta.height, meta.width) != (f, c, h, w) {
                    return Err(Error::container(
                        "sidecar-mismatch",
                        format!("sidecar describes {meta:?}, tensor shape is {:?}", self.header.shape),
                    ));
                }
                meta.matrix_shape()
            }
            other => {
                return Err(Error::container(
                    "rank-unsupported",
                    format!("rank {} tensors are not supported", other.len()),
                ))
            }
        };
        DenseMatrix::with_element_bits(rows, cols, self.data.clone(), bits)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".conv.json");
    PathBuf::from(s)
}

pub fn write_tensor(path: &Path, t: &Tensor) -> Result<()> {
    fs::write(path, t.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn read_tensor_raw(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Tensor::from_bytes(&bytes)
}

pub fn read_conv_meta(path: &Path) -> Result<Option<ConvLayerMeta>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    let s = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    Ok(Some(serde_json::from_str(&s)?))
}

/// Reads a matrix, reshaping rank-4 tensors with their sidecar.
pub fn read_tensor(path: &Path) -> Result<DenseMatrix> {
    let t = read_tensor_raw(path)?;
    let meta = if t.header.shape.len() == 4 { read_conv_meta(path)? } else { None };
    t.to_matrix(meta.as_ref())
}

/// Rounds to 6 significant digits.
pub fn round_sig6(x: f64) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// One (matrix, format) benchmark result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRecord {
    pub run_label: String,
    pub matrix_id: String,
    pub format: String,
    pub m: usize,
    pub n: usize,
    pub entropy: f64,
    pub p0: f64,
    pub k_bar: f64,
    pub k_tilde: f64,
    pub seed: Option<u64>,
    pub storage_bits_exact: u64,
    pub storage_bits_formula: f64,
    pub storage_ratio: f64,
    pub ops_total: u64,
    pub ops_in_load: u64,
    pub ops_col_load: u64,
    pub ops_omega_load: u64,
    pub ops_omega_index_load: u64,
    pub ops_ptr_load: u64,
    pub ops_add: u64,
    pub ops_mul: u64,
    pub ops_write: u64,
    pub ops_other: u64,
    pub ops_ratio: f64,
    pub energy_pj: f64,
    pub energy_ratio: f64,
    pub time_ns_modeled: Option<f64>,
    pub time_ratio: Option<f64>,
    pub time_ns_wallclock: Option<f64>,
    pub energy_table: String,
    pub latency_table: Option<String>,
    pub tier_policy: String,
    pub sampler: Option<String>,
}

impl BenchRecord {
    pub const COLUMNS: [&'static str; 33] = [
        "run_label",
        "matrix_id",
        "format",
        "m",
        "n",
        "entropy",
        "p0",
        "k_bar",
        "k_tilde",
        "seed",
        "storage_bits_exact",
        "storage_bits_formula",
        "storage_ratio",
        "ops_total",
        "ops_in_load",
        "ops_col_load",
        "ops_omega_load",
        "ops_omega_index_load",
        "ops_ptr_load",
        "ops_add",
        "ops_mul",
        "ops_write",
        "ops_other",
        "ops_ratio",
        "energy_pj",
        "energy_ratio",
        "time_ns_modeled",
        "time_ratio",
        "time_ns_wallclock",
        "energy_table",
        "latency_table",
        "tier_policy",
        "sampler",
    ];

    pub fn rounded(&self) -> Self {
        let r = round_sig6;
        let o = |x: Option<f64>| x.map(round_sig6);
        Self {
            entropy: r(self.entropy),
            p0: r(self.p0),
            k_bar: r(self.k_bar),
            k_tilde: r(self.k_tilde),
            storage_bits_formula: r(self.storage_bits_formula),
            storage_ratio: r(self.storage_ratio),
            ops_ratio: r(self.ops_ratio),
            energy_pj: r(self.energy_pj),
            energy_ratio: r(self.energy_ratio),
            time_ns_modeled: o(self.time_ns_modeled),
            time_ratio: o(self.time_ratio),
            time_ns_wallclock: o(self.time_ns_wallclock),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub run_label: String,
    pub records: Vec<BenchRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(Error::invalid(format!("report format '{other}' is not csv or json"))),
        }
    }
}

impl BenchReport {
    pub fn new(run_label: impl Into<String>) -> Self {
        Self {
            run_label: run_label.into(),
            records: Vec::new(),
        }
    }

    /// Floats rounded to the precision reports are written with.
    pub fn rounded(&self) -> Self {
        Self {
            run_label: self.run_label.clone(),
            records: self.records.iter().map(BenchRecord::rounded).collect(),
        }
    }

    pub fn to_csv(&self) -> Result<String> {
        write_csv(&BenchRecord::COLUMNS, self.rounded().records.iter())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.rounded())? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn from_csv(s: &str) -> Result<Vec<BenchRecord>> {
        let mut r = csv::Reader::from_reader(s.as_bytes());
        r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
    }

    pub fn render(&self, format: ReportFormat) -> Result<String> {
        match format {
            ReportFormat::Csv => self.to_csv(),
            ReportFormat::Json => self.to_json(),
        }
    }

    pub fn write(&self, format: ReportFormat, path: &Path) -> Result<()> {
        fs::write(path, self.render(format)?).map_err(|e| Error::io(path, e))
    }
}

/// CSV with an explicit header row, so empty inputs still produce one.
pub fn write_csv<'a, T: Serialize + 'a>(columns: &[&str], rows: impl Iterator<Item = &'a T>) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(columns)?;
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(format!("csv buffer: {e}")))?;
    Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn record() -> BenchRecord {
        BenchRecord {
            run_label: "t".into(),
            matrix_id: "m".into(),
            format: "cer".into(),
            m: 5,
            n: 12,
            entropy: 1.490331372599,
            p0: 0.533333333333,
            k_bar: 2.0,
            k_tilde: 0.0,
            seed: Some(7),
            storage_bits_exact: 392,
            storage_bits_formula: 6.533333333,
            storage_ratio: 4.897959183673,
            ops_total: 100,
            ops_in_load: 28,
            ops_col_load: 28,
            ops_omega_load: 10,
            ops_omega_index_load: 0,
            ops_ptr_load: 17,
            ops_add: 11,
            ops_mul: 10,
            ops_write: 5,
            ops_other: 0,
            ops_ratio: 2.3,
            energy_pj: 1234.56789,
            energy_ratio: 1.0 / 3.0,
            time_ns_modeled: None,
            time_ratio: None,
            time_ns_wallclock: Some(812.123456789),
            energy_table: "cmos45".into(),
            latency_table: None,
            tier_policy: "per-array".into(),
            sampler: None,
        }
    }

    #[test]
    fn columns_match_fields() {
        let csv = BenchReport {
            run_label: "t".into(),
            records: vec![record()],
        }
        .to_csv()
        .unwrap();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), BenchRecord::COLUMNS.join(","));
        let row = lines.next().unwrap();
        assert_eq!(row.split(',').count(), BenchRecord::COLUMNS.len());
        assert!(row.contains(",0.333333,"), "{row}");
        assert!(lines.next().is_none());
    }

    #[test]
    fn empty_report_is_header_only() {
        let csv = BenchReport::new("x").to_csv().unwrap();
        assert_eq!(csv.lines().count(), 1);
    }

    #[test]
    fn json_and_csv_round_trip() {
        let report = BenchReport {
            run_label: "t".into(),
            records: vec![record(), record()],
        };
        let back = BenchReport::from_json(&report.to_json().unwrap()).unwrap();
        assert_eq!(back, report.rounded());
        assert_eq!(back.rounded(), back);
        assert_eq!(BenchReport::from_csv(&report.to_csv().unwrap()).unwrap(), back.records);
    }

    #[test]
    fn significant_digits() {
        assert_eq!(round_sig6(1234.56789), 1234.57);
        assert_eq!(round_sig6(0.000123456789), 0.000123457);
        assert_eq!(round_sig6(0.0), 0.0);
    }

    #[test]
    fn tensor_bytes() {
        let a = DenseMatrix::new(2, 3, vec![1.0, -2.5, 0.0, 4.0, 5.0, 6.0]).unwrap();
        let t = Tensor::from_matrix("w", &a).unwrap();
        let bytes = t.to_bytes().unwrap();
        assert_eq!(Tensor::from_bytes(&bytes).unwrap().to_matrix(None).unwrap(), a);
        let err = Tensor::from_bytes(&bytes[..bytes.len() - 2]).unwrap_err();
        assert!(err.to_string().contains("payload length mismatch"), "{err}");
        assert!(matches!(Tensor::from_bytes(b"XXXXXXXXXXXX"), Err(Error::Container { code: "bad-magic", .. })));
        let t3 = Tensor::new("c", DType::F32, vec![1, 2, 3], vec![0.0; 6]).unwrap();
        assert!(matches!(t3.to_matrix(None), Err(Error::Container { code: "rank-unsupported", .. })));
    }
}
