//! End-to-end benchmarking, closed-form estimates and the two synthetic
//! sweeps over the (H, p₀) plane and over the column count.

use std::collections::BTreeMap;
use std::ops::Range;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costmodel::{
    category, default_energy_table, estimate_energy, estimate_storage, price_trace, ArraySizes, CostReport,
    CostTable, FormulaInputs, StorageMode, TierPolicy,
};
use crate::error::{Error, Result};
use crate::formats::{ArrayTag, Encoded, FormatKind};
use crate::io::{round_sig6, BenchRecord, BenchReport};
use crate::kernels::{dot_range, KernelConfig, OpKind, OpTrace};
use crate::matrix::{DenseMatrix, Vector};
use crate::quantize::decompose_most_frequent;
use crate::stats::{matrix_stats, sample_matrix, synthesize_distribution, DistributionSpec, MatrixStats, SAMPLER_ID};

/// Tables and widths used to price a product.
#[derive(Debug, Clone)]
pub struct Pricing {
    pub energy: CostTable,
    pub latency: Option<CostTable>,
    pub policy: TierPolicy,
    /// Input width `b_a`; defaults to the element width.
    pub input_bits: Option<u32>,
    /// Output width `b_o`; defaults to `max(b_a, b_Ω)`.
    pub output_bits: Option<u32>,
}

impl Default for Pricing {
    fn default() -> Self {
        Self {
            energy: default_energy_table(),
            latency: None,
            policy: TierPolicy::PerArray,
            input_bits: None,
            output_bits: None,
        }
    }
}

impl Pricing {
    fn input_bits(&self, a: &DenseMatrix) -> u32 {
        self.input_bits.unwrap_or(a.element_bits())
    }
}

/// Everything measured for one representation of one matrix.
#[derive(Debug, Clone)]
pub struct Measurement {
    pub kind: FormatKind,
    pub encoded: Encoded,
    /// Offset `ω_max` added back after the product; 0 without decomposition.
    pub omega_max: f64,
    /// Storage including the stored `ω_max` when decomposed.
    pub storage_bits: u64,
    pub trace: OpTrace,
    /// Number of matrix entries the trace covers.
    pub elements: u64,
    pub energy: CostReport,
    pub time: Option<CostReport>,
}

impl Measurement {
    /// Trace counts per coarse category.
    pub fn category_counts(&self) -> BTreeMap<&'static str, u64> {
        let mut out = BTreeMap::new();
        for c in self.trace.iter() {
            *out.entry(category(c.key.kind, c.key.source)).or_insert(0) += c.count;
        }
        out
    }

    pub fn storage_per_element(&self) -> f64 {
        self.storage_bits as f64 / (self.encoded.rows() * self.encoded.cols()) as f64
    }

    pub fn ops_per_element(&self) -> f64 {
        self.trace.total() as f64 / self.elements as f64
    }
}

/// `Â·x + ω_max·Σx` over `rows`, counting the correction for those rows only.
fn traced_product(
    enc: &Encoded,
    omega_max: f64,
    x: &Vector,
    rows: Range<usize>,
    cfg: &KernelConfig,
    mut trace: Option<&mut OpTrace>,
) -> Result<Vector> {
    let mut y = dot_range(enc, x, rows, cfg, trace.as_deref_mut())?;
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

/// A matrix prepared for measurement: the original for the dense kernel and
/// its zero-mode decomposition for the compressed ones.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub original: DenseMatrix,
    pub hat: DenseMatrix,
    pub omega_max: f64,
    pub stats: MatrixStats,
}

impl Prepared {
    pub fn new(a: &DenseMatrix) -> Result<Self> {
        let d = decompose_most_frequent(a)?;
        let stats = matrix_stats(&d.hat)?;
        Ok(Self {
            original: a.clone(),
            hat: d.hat,
            omega_max: d.omega_max,
            stats,
        })
    }

    pub fn input(&self, pricing: &Pricing) -> Vector {
        Vector::with_bits(vec![1.0; self.original.cols()], pricing.input_bits(&self.original))
    }

    /// Encodes, traces and prices one representation; `rows` restricts the
    /// trace to a few scalar products.
    pub fn measure(&self, kind: FormatKind, pricing: &Pricing, rows: Option<Range<usize>>) -> Result<Measurement> {
        let (encoded, omega_max) = match kind {
            FormatKind::Dense => (Encoded::Dense(self.original.clone()), 0.0),
            _ => (Encoded::encode(kind, &self.hat)?, self.omega_max),
        };
        let x = self.input(pricing);
        let cfg = KernelConfig {
            output_bits: pricing.output_bits,
        };
        let rows = rows.unwrap_or(0..self.original.rows());
        let elements = (rows.len() * self.original.cols()) as u64;
        let mut trace = OpTrace::new();
        traced_product(&encoded, omega_max, &x, rows, &cfg, Some(&mut trace))?;
        let b_o = cfg.output_bits(x.bits, encoded.element_bits());
        let sizes = ArraySizes::for_product(&encoded, x.bits, b_o);
        let energy = price_trace(&trace, &pricing.energy, &sizes, pricing.policy, elements)?;
        let time = match &pricing.latency {
            Some(t) => Some(price_trace(&trace, t, &sizes, pricing.policy, elements)?),
            None => None,
        };
        let stored_offset = if omega_max != 0.0 { u64::from(encoded.element_bits()) } else { 0 };
        Ok(Measurement {
            kind,
            storage_bits: encoded.storage_bits() + stored_offset,
            encoded,
            omega_max,
            trace,
            elements,
            energy,
            time,
        })
    }

    /// Leading-order storage formula in total bits.
    pub fn formula_storage_bits(&self, kind: FormatKind, pricing: &Pricing) -> Result<f64> {
        let x = FormulaInputs::from_stats(&self.stats, self.hat.element_bits(), pricing.input_bits(&self.original));
        Ok(estimate_storage(kind, &x, StorageMode::Asymptotic)? * self.stats.len as f64)
    }
}

/// Median wall-clock ns of `repeats` untraced products after one discarded
/// warm-up run.
pub fn wallclock_ns(m: &Measurement, x: &Vector, cfg: &KernelConfig, repeats: usize) -> Result<Option<f64>> {
    if repeats == 0 {
        return Ok(None);
    }
    let rows = 0..m.encoded.rows();
    traced_product(&m.encoded, m.omega_max, x, rows.clone(), cfg, None)?;
    let mut samples = Vec::with_capacity(repeats);
    for _ in 0..repeats {
        let start = Instant::now();
        let y = traced_product(&m.encoded, m.omega_max, x, rows.clone(), cfg, None)?;
        samples.push(start.elapsed().as_secs_f64() * 1e9);
        std::hint::black_box(y);
    }
    samples.sort_by(f64::total_cmp);
    Ok(Some(samples[repeats / 2]))
}

/// Options of [`bench_matrix`].
#[derive(Debug, Clone)]
pub struct BenchOptions {
    pub formats: Vec<FormatKind>,
    pub pricing: Pricing,
    /// Timed repetitions for the wall-clock median; 0 skips timing.
    pub repeats: usize,
    /// Trace a single scalar product instead of the whole product.
    pub row: Option<usize>,
    pub run_label: String,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            formats: FormatKind::ALL.to_vec(),
            pricing: Pricing::default(),
            repeats: 0,
            row: None,
            run_label: String::new(),
        }
    }
}

fn ratio(dense: f64, x: f64) -> f64 {
    if x == 0.0 {
        f64::INFINITY
    } else {
        dense / x
    }
}

fn record_from(
    p: &Prepared,
    m: &Measurement,
    dense: &Measurement,
    formula_bits: f64,
    wallclock: Option<f64>,
    matrix_id: &str,
    seed: Option<u64>,
    run_label: &str,
    pricing: &Pricing,
) -> BenchRecord {
    let cats = m.category_counts();
    let c = |name: &str| cats.get(name).copied().unwrap_or(0);
    let s = &p.stats;
    BenchRecord {
        run_label: run_label.to_string(),
        matrix_id: matrix_id.to_string(),
        format: m.kind.name().to_string(),
        m: s.rows,
        n: s.cols,
        entropy: s.entropy,
        p0: s.p0,
        k_bar: s.k_bar,
        k_tilde: s.k_tilde,
        seed,
        storage_bits_exact: m.storage_bits,
        storage_bits_formula: formula_bits,
        storage_ratio: ratio(dense.storage_bits as f64, m.storage_bits as f64),
        ops_total: m.trace.total(),
        ops_in_load: c("in_load"),
        ops_col_load: c("colI_load"),
        ops_omega_load: c("omega_load"),
        ops_omega_index_load: c("omegaI_load"),
        ops_ptr_load: c("ptr_load"),
        ops_add: c("add"),
        ops_mul: c("mul"),
        ops_write: c("write"),
        ops_other: c("other") + c("other_load"),
        ops_ratio: ratio(dense.trace.total() as f64, m.trace.total() as f64),
        energy_pj: m.energy.total,
        energy_ratio: ratio(dense.energy.total, m.energy.total),
        time_ns_modeled: m.time.as_ref().map(|t| t.total),
        time_ratio: match (&m.time, &dense.time) {
            (Some(t), Some(d)) => Some(ratio(d.total, t.total)),
            _ => None,
        },
        time_ns_wallclock: wallclock,
        energy_table: pricing.energy.name().to_string(),
        latency_table: pricing.latency.as_ref().map(|t| t.name().to_string()),
        tier_policy: pricing.policy.to_string(),
        sampler: seed.map(|_| SAMPLER_ID.to_string()),
    }
}

/// Benchmarks `a` in every requested format. Ratios are `dense / format`,
/// so values above 1 mean the format is cheaper.
pub fn bench_matrix(a: &DenseMatrix, matrix_id: &str, seed: Option<u64>, opts: &BenchOptions) -> Result<Vec<BenchRecord>> {
    if opts.formats.is_empty() {
        return Err(Error::invalid("no formats requested"));
    }
    let p = Prepared::new(a)?;
    let rows = match opts.row {
        Some(r) if r >= a.rows() => {
            return Err(Error::invalid(format!("row {r} outside a matrix with {} rows", a.rows())))
        }
        Some(r) => Some(r..r + 1),
        None => None,
    };
    let dense = p.measure(FormatKind::Dense, &opts.pricing, rows.clone())?;
    let x = p.input(&opts.pricing);
    let cfg = KernelConfig {
        output_bits: opts.pricing.output_bits,
    };
    let mut out = Vec::with_capacity(opts.formats.len());
    for &kind in &opts.formats {
        let m = if kind == FormatKind::Dense {
            dense.clone()
        } else {
            p.measure(kind, &opts.pricing, rows.clone())?
        };
        let wall = wallclock_ns(&m, &x, &cfg, opts.repeats)?;
        let formula = p.formula_storage_bits(kind, &opts.pricing)?;
        out.push(record_from(&p, &m, &dense, formula, wall, matrix_id, seed, &opts.run_label, &opts.pricing));
    }
    Ok(out)
}

/// Effective statistics over several matrices: H and p₀ weighted by element
/// count, k̄ and k̃ by row count, n by matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub matrices: usize,
    pub entropy: f64,
    pub p0: f64,
    pub k_bar: f64,
    pub k_tilde: f64,
    pub cols: f64,
    pub k_bar_over_n: f64,
}

pub fn aggregate_stats(stats: &[MatrixStats]) -> Result<AggregateStats> {
    if stats.is_empty() {
        return Err(Error::EmptyInput);
    }
    let elements: f64 = stats.iter().map(|s| s.len as f64).sum();
    let rows: f64 = stats.iter().map(|s| s.rows as f64).sum();
    let by_elem = |f: fn(&MatrixStats) -> f64| stats.iter().map(|s| f(s) * s.len as f64).sum::<f64>() / elements;
    let by_row = |f: fn(&MatrixStats) -> f64| stats.iter().map(|s| f(s) * s.rows as f64).sum::<f64>() / rows;
    let cols = stats.iter().map(|s| s.cols as f64).sum::<f64>() / stats.len() as f64;
    let k_bar = by_row(|s| s.k_bar);
    Ok(AggregateStats {
        matrices: stats.len(),
        entropy: by_elem(|s| s.entropy),
        p0: by_elem(|s| s.p0),
        k_bar,
        k_tilde: by_row(|s| s.k_tilde),
        cols,
        k_bar_over_n: k_bar / cols,
    })
}

/// Closed-form and, when a matrix is given, measured per-element costs of one
/// format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub format: String,
    pub storage_formula: f64,
    pub storage_formula_exact: f64,
    pub storage_measured: Option<f64>,
    pub energy_formula: f64,
    pub energy_measured: Option<f64>,
}

impl EstimateRow {
    pub const COLUMNS: [&'static str; 6] = [
        "format",
        "storage_formula",
        "storage_formula_exact",
        "storage_measured",
        "energy_formula",
        "energy_measured",
    ];

    pub fn rounded(&self) -> Self {
        Self {
            format: self.format.clone(),
            storage_formula: round_sig6(self.storage_formula),
            storage_formula_exact: round_sig6(self.storage_formula_exact),
            storage_measured: self.storage_measured.map(round_sig6),
            energy_formula: round_sig6(self.energy_formula),
            energy_measured: self.energy_measured.map(round_sig6),
        }
    }
}

/// Per-element storage (bits) and energy for each format from the closed
/// forms; `measured` adds the encoder and traced values for that matrix.
/// Measured values use the matrix as given, without decomposition.
pub fn estimate(
    x: &FormulaInputs,
    table: &CostTable,
    formats: &[FormatKind],
    measured: Option<&DenseMatrix>,
) -> Result<Vec<EstimateRow>> {
    x.validate()?;
    let pricing = Pricing {
        energy: table.clone(),
        latency: None,
        policy: x.tiers,
        input_bits: Some(x.input_bits),
        output_bits: Some(x.output_bits),
    };
    let prepared = match measured {
        Some(a) => {
            let stats = matrix_stats(a)?;
            Some(Prepared {
                original: a.clone(),
                hat: a.clone(),
                omega_max: 0.0,
                stats,
            })
        }
        None => None,
    };
    formats
        .iter()
        .map(|&kind| {
            let m = prepared.as_ref().map(|p| p.measure(kind, &pricing, None)).transpose()?;
            Ok(EstimateRow {
                format: kind.name().to_string(),
                storage_formula: estimate_storage(kind, x, StorageMode::Asymptotic)?,
                storage_formula_exact: estimate_storage(kind, x, StorageMode::Exact)?,
                storage_measured: m.as_ref().map(Measurement::storage_per_element),
                energy_formula: estimate_energy(kind, x, table)?,
                energy_measured: m.as_ref().map(|m| m.energy.per_element()),
            })
        })
        .collect()
}

/// Inclusive arithmetic range `start:end:step`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub start: f64,
    pub end: f64,
    pub step: f64,
}

impl Axis {
    pub fn points(&self) -> Vec<f64> {
        let count = ((self.end - self.start) / self.step + 1e-9).floor() as usize + 1;
        // values rounded so that 0.1 steps print as decimals
        (0..count)
            .map(|i| ((self.start + i as f64 * self.step) * 1e9).round() / 1e9)
            .collect()
    }
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<f64> = s
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::invalid(format!("axis '{s}' is not start:end:step")))?;
        let &[start, end, step] = parts.as_slice() else {
            return Err(Error::invalid(format!("axis '{s}' is not start:end:step")));
        };
        if !(step > 0.0) || !(end >= start) || !start.is_finite() || !end.is_finite() {
            return Err(Error::invalid(format!("axis '{s}' needs step > 0 and end >= start")));
        }
        Ok(Self { start, end, step })
    }
}

/// `H0:H1:dH,p0:p1:dp`.
pub fn parse_grid(s: &str) -> Result<(Axis, Axis)> {
    let (h, p) = s
        .split_once(',')
        .ok_or_else(|| Error::invalid(format!("grid '{s}' is not H0:H1:dH,p0:p1:dp")))?;
    Ok((h.parse()?, p.parse()?))
}

/// `n1,n2,...`.
pub fn parse_cols(s: &str) -> Result<Vec<usize>> {
    let cols: Vec<usize> = s
        .split(',')
        .map(|c| c.trim().parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid(format!("column list '{s}' is not n1,n2,...")))?;
    if cols.is_empty() || cols.contains(&0) {
        return Err(Error::invalid("column counts must be positive"));
    }
    Ok(cols)
}

/// Per-sample seed, a SplitMix64 hash of (base seed, point, sample).
pub fn sample_seed(base: u64, point: usize, sample: usize) -> u64 {
    let mut z = base
        .wrapping_add((point as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add((sample as u64).wrapping_mul(0xD1B5_4A32_D192_ED03));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Compared quantity of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Criterion {
    Storage,
    Ops,
    Energy,
    Time,
}

impl Criterion {
    pub fn name(self) -> &'static str {
        match self {
            Criterion::Storage => "storage",
            Criterion::Ops => "ops",
            Criterion::Energy => "energy",
            Criterion::Time => "time",
        }
    }

    fn of(self, m: &Measurement) -> Option<f64> {
        match self {
            Criterion::Storage => Some(m.storage_per_element()),
            Criterion::Ops => Some(m.ops_per_element()),
            Criterion::Energy => Some(m.energy.per_element()),
            Criterion::Time => m.time.as_ref().map(CostReport::per_element),
        }
    }
}

/// Winner classes; CER and CSER count as one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Winner {
    #[serde(rename = "dense")]
    Dense,
    #[serde(rename = "csr")]
    Csr,
    #[serde(rename = "cer-or-cser")]
    CerOrCser,
}

impl Winner {
    pub fn name(self) -> &'static str {
        match self {
            Winner::Dense => "dense",
            Winner::Csr => "csr",
            Winner::CerOrCser => "cer-or-cser",
        }
    }

    fn of(kind: FormatKind) -> Self {
        match kind {
            FormatKind::Dense => Winner::Dense,
            FormatKind::Csr => Winner::Csr,
            FormatKind::Cer | FormatKind::Cser => Winner::CerOrCser,
        }
    }
}

/// Cheapest class for per-format values; the first class wins exact ties.
fn winner_of(values: &[(FormatKind, f64)]) -> Winner {
    let mut best = values[0];
    for &v in &values[1..] {
        if v.1 < best.1 {
            best = v;
        }
    }
    Winner::of(best.0)
}

/// Settings shared by both sweeps.
#[derive(Debug, Clone)]
pub struct SweepSettings {
    pub rows: usize,
    pub samples: usize,
    pub alphabet_len: usize,
    pub seed: u64,
    pub pricing: Pricing,
    pub run_label: String,
}

impl SweepSettings {
    fn criteria(&self) -> Vec<Criterion> {
        let mut c = vec![Criterion::Storage, Criterion::Ops, Criterion::Energy];
        if self.pricing.latency.is_some() {
            c.push(Criterion::Time);
        }
        c
    }

    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(Error::invalid("samples must be at least 1"));
        }
        if self.rows == 0 {
            return Err(Error::invalid("rows must be at least 1"));
        }
        Ok(())
    }
}

/// One sampled matrix measured in all four formats, reduced to its records
/// and criterion values so that the matrix itself can be dropped.
struct Sample {
    records: Vec<BenchRecord>,
    /// `values[format][criterion]` per element.
    values: Vec<[Option<f64>; 4]>,
}

impl Sample {
    fn value(&self, format: usize, c: Criterion) -> Option<f64> {
        self.values[format][c as usize]
    }
}

const ALL_CRITERIA: [Criterion; 4] = [Criterion::Storage, Criterion::Ops, Criterion::Energy, Criterion::Time];

/// A sweep point: target distribution, column count and matrix id.
struct Point {
    spec: DistributionSpec,
    cols: usize,
    id: String,
}

fn run_sample(pt: &Point, point: usize, s: usize, set: &SweepSettings) -> Result<Sample> {
    let alphabet = synthesize_distribution(&pt.spec)?;
    let seed = sample_seed(set.seed, point, s);
    let a = sample_matrix(&alphabet, set.rows, pt.cols, seed)?;
    let prepared = Prepared::new(&a)?;
    let ms = FormatKind::ALL
        .iter()
        .map(|&k| prepared.measure(k, &set.pricing, None))
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::with_capacity(ms.len());
    for m in &ms {
        let formula = prepared.formula_storage_bits(m.kind, &set.pricing)?;
        records.push(record_from(&prepared, m, &ms[0], formula, None, &pt.id, Some(seed), &set.run_label, &set.pricing));
    }
    let values = ms.iter().map(|m| ALL_CRITERIA.map(|c| c.of(m))).collect();
    Ok(Sample { records, values })
}

/// Runs every (point, sample) pair, in parallel, returning results in
/// (point, sample) order.
fn run_points(points: &[Point], set: &SweepSettings) -> Result<Vec<Vec<Sample>>> {
    let tasks: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..set.samples).map(move |s| (p, s)))
        .collect();
    let results: Vec<Sample> = tasks
        .par_iter()
        .map(|&(p, s)| run_sample(&points[p], p, s, set))
        .collect::<Result<_>>()?;
    let mut grouped: Vec<Vec<Sample>> = (0..points.len()).map(|_| Vec::with_capacity(set.samples)).collect();
    for (sample, (p, _)) in results.into_iter().zip(tasks) {
        grouped[p].push(sample);
    }
    Ok(grouped)
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Mean per-element value of `c` for every format across samples.
fn criterion_means(samples: &[Sample], c: Criterion) -> Option<Vec<(FormatKind, f64)>> {
    FormatKind::ALL
        .iter()
        .enumerate()
        .map(|(i, &k)| {
            let vals: Option<Vec<f64>> = samples.iter().map(|s| s.value(i, c)).collect();
            vals.map(|v| (k, mean(v.into_iter())))
        })
        .collect()
}

/// Mean record per format over the samples of one point.
fn mean_records(samples: &[Sample], set: &SweepSettings) -> Vec<BenchRecord> {
    let per_sample: Vec<&Vec<BenchRecord>> = samples.iter().map(|s| &s.records).collect();
    let n = per_sample.len();
    (0..FormatKind::ALL.len())
        .map(|i| {
            let rs: Vec<&BenchRecord> = per_sample.iter().map(|v| &v[i]).collect();
            let f = |g: fn(&BenchRecord) -> f64| mean(rs.iter().map(|r| g(r)));
            let u = |g: fn(&BenchRecord) -> u64| (rs.iter().map(|r| g(r)).sum::<u64>() as f64 / n as f64).round() as u64;
            let o = |g: fn(&BenchRecord) -> Option<f64>| -> Option<f64> {
                rs.iter().map(|r| g(r)).collect::<Option<Vec<f64>>>().map(|v| mean(v.into_iter()))
            };
            BenchRecord {
                seed: Some(set.seed),
                entropy: f(|r| r.entropy),
                p0: f(|r| r.p0),
                k_bar: f(|r| r.k_bar),
                k_tilde: f(|r| r.k_tilde),
                storage_bits_exact: u(|r| r.storage_bits_exact),
                storage_bits_formula: f(|r| r.storage_bits_formula),
                storage_ratio: f(|r| r.storage_ratio),
                ops_total: u(|r| r.ops_total),
                ops_in_load: u(|r| r.ops_in_load),
                ops_col_load: u(|r| r.ops_col_load),
                ops_omega_load: u(|r| r.ops_omega_load),
                ops_omega_index_load: u(|r| r.ops_omega_index_load),
                ops_ptr_load: u(|r| r.ops_ptr_load),
                ops_add: u(|r| r.ops_add),
                ops_mul: u(|r| r.ops_mul),
                ops_write: u(|r| r.ops_write),
                ops_other: u(|r| r.ops_other),
                ops_ratio: f(|r| r.ops_ratio),
                energy_pj: f(|r| r.energy_pj),
                energy_ratio: f(|r| r.energy_ratio),
                time_ns_modeled: o(|r| r.time_ns_modeled),
                time_ratio: o(|r| r.time_ratio),
                ..rs[0].clone()
            }
        })
        .collect()
}

/// One row of the plane winner map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlaneRow {
    pub entropy: f64,
    pub p0: f64,
    pub criterion: String,
    /// `dense`, `csr`, `cer-or-cser`, or `infeasible` for skipped cells.
    pub winner: String,
    /// Samples in which the winner was cheapest.
    pub votes: usize,
    pub samples: usize,
    pub dense: Option<f64>,
    pub csr: Option<f64>,
    pub cer: Option<f64>,
    pub cser: Option<f64>,
}

impl PlaneRow {
    pub const COLUMNS: [&'static str; 10] =
        ["entropy", "p0", "criterion", "winner", "votes", "samples", "dense", "csr", "cer", "cser"];

    pub fn rounded(&self) -> Self {
        Self {
            dense: self.dense.map(round_sig6),
            csr: self.csr.map(round_sig6),
            cer: self.cer.map(round_sig6),
            cser: self.cser.map(round_sig6),
            ..self.clone()
        }
    }

    pub fn is_feasible(&self) -> bool {
        self.winner != "infeasible"
    }

    pub fn value(&self, kind: FormatKind) -> Option<f64> {
        match kind {
            FormatKind::Dense => self.dense,
            FormatKind::Csr => self.csr,
            FormatKind::Cer => self.cer,
            FormatKind::Cser => self.cser,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlaneSpec {
    pub entropy: Axis,
    pub p0: Axis,
    pub cols: usize,
    pub settings: SweepSettings,
}

impl Default for PlaneSpec {
    fn default() -> Self {
        Self {
            entropy: Axis {
                start: 0.1,
                end: 7.0,
                step: 0.1,
            },
            p0: Axis {
                start: 0.02,
                end: 0.98,
                step: 0.02,
            },
            cols: 100,
            settings: SweepSettings {
                rows: 100,
                samples: 10,
                alphabet_len: 128,
                seed: 0,
                pricing: Pricing {
                    policy: TierPolicy::Footprint,
                    ..Pricing::default()
                },
                run_label: "plane".into(),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepOutput<R> {
    pub rows: Vec<R>,
    pub report: BenchReport,
}

/// Majority-vote winners per feasible (H, p₀) cell; infeasible cells are
/// listed with winner `infeasible`.
pub fn plane_sweep(spec: &PlaneSpec) -> Result<SweepOutput<PlaneRow>> {
    let set = &spec.settings;
    set.validate()?;
    let mut cells = Vec::new();
    for &p0 in &spec.p0.points() {
        for &h in &spec.entropy.points() {
            let d = DistributionSpec::new(h, p0, set.alphabet_len);
            let feasible = match synthesize_distribution(&d) {
                Ok(_) => true,
                Err(Error::Infeasible(_)) => false,
                Err(e) => return Err(e),
            };
            cells.push((d, feasible));
        }
    }
    let points: Vec<Point> = cells
        .iter()
        .filter(|c| c.1)
        .map(|c| Point {
            spec: c.0,
            cols: spec.cols,
            id: format!("plane:H={}:p0={}", c.0.entropy, c.0.p0),
        })
        .collect();
    if points.is_empty() {
        return Err(Error::Infeasible("no grid cell lies inside the feasible band".into()));
    }
    let results = run_points(&points, set)?;
    let criteria = set.criteria();
    let mut rows = Vec::new();
    let mut report = BenchReport::new(set.run_label.clone());
    let mut results = results.into_iter();
    for (d, feasible) in &cells {
        if !feasible {
            rows.push(PlaneRow {
                entropy: d.entropy,
                p0: d.p0,
                criterion: "all".into(),
                winner: "infeasible".into(),
                votes: 0,
                samples: 0,
                dense: None,
                csr: None,
                cer: None,
                cser: None,
            });
            continue;
        }
        let samples = results.next().expect("one result per feasible cell");
        report.records.extend(mean_records(&samples, set));
        for &c in &criteria {
            let means = criterion_means(&samples, c).ok_or_else(|| Error::MissingCost(c.name().into()))?;
            let mut votes: BTreeMap<Winner, usize> = BTreeMap::new();
            for s in &samples {
                let vals: Vec<(FormatKind, f64)> = FormatKind::ALL
                    .iter()
                    .enumerate()
                    .map(|(i, &k)| (k, s.value(i, c).expect("checked above")))
                    .collect();
                *votes.entry(winner_of(&vals)).or_insert(0) += 1;
            }
            // most votes, then the lowest mean
            let class_mean = |w: Winner| {
                means
                    .iter()
                    .filter(|(k, _)| Winner::of(*k) == w)
                    .map(|(_, v)| *v)
                    .fold(f64::INFINITY, f64::min)
            };
            let (&winner, &count) = votes
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(class_mean(*b.0).total_cmp(&class_mean(*a.0))))
                .expect("at least one sample");
            let v = |k: FormatKind| means.iter().find(|(f, _)| *f == k).map(|(_, x)| *x);
            rows.push(PlaneRow {
                entropy: d.entropy,
                p0: d.p0,
                criterion: c.name().into(),
                winner: winner.name().into(),
                votes: count,
                samples: samples.len(),
                dense: v(FormatKind::Dense),
                csr: v(FormatKind::Csr),
                cer: v(FormatKind::Cer),
                cser: v(FormatKind::Cser),
            });
        }
    }
    Ok(SweepOutput { rows, report })
}

/// One row of the column sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnsRow {
    pub n: usize,
    pub format: String,
    pub criterion: String,
    /// Mean per-element value over the samples.
    pub value: f64,
    /// Dense value over this format's value.
    pub ratio_vs_dense: f64,
}

impl ColumnsRow {
    pub const COLUMNS: [&'static str; 5] = ["n", "format", "criterion", "value", "ratio_vs_dense"];

    pub fn rounded(&self) -> Self {
        Self {
            value: round_sig6(self.value),
            ratio_vs_dense: round_sig6(self.ratio_vs_dense),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone)]
pub struct ColumnsSpec {
    pub entropy: f64,
    pub p0: f64,
    pub cols: Vec<usize>,
    pub settings: SweepSettings,
}

impl Default for ColumnsSpec {
    fn default() -> Self {
        Self {
            entropy: 4.0,
            p0: 0.55,
            cols: vec![100, 300, 1_000, 3_000, 10_000, 30_000, 100_000],
            settings: SweepSettings {
                rows: 100,
                samples: 20,
                alphabet_len: 128,
                seed: 0,
                pricing: Pricing::default(),
                run_label: "columns".into(),
            },
        }
    }
}

/// Per-element costs of each format as the column count grows.
pub fn columns_sweep(spec: &ColumnsSpec) -> Result<SweepOutput<ColumnsRow>> {
    let set = &spec.settings;
    set.validate()?;
    if spec.cols.is_empty() {
        return Err(Error::invalid("column list is empty"));
    }
    let d = DistributionSpec::new(spec.entropy, spec.p0, set.alphabet_len);
    synthesize_distribution(&d)?;
    let points: Vec<Point> = spec
        .cols
        .iter()
        .map(|&n| Point {
            spec: d,
            cols: n,
            id: format!("columns:n={n}"),
        })
        .collect();
    let results = run_points(&points, set)?;
    let mut rows = Vec::new();
    let mut report = BenchReport::new(set.run_label.clone());
    for (&n, samples) in spec.cols.iter().zip(&results) {
        report.records.extend(mean_records(samples, set));
        for c in set.criteria() {
            let means = criterion_means(samples, c).ok_or_else(|| Error::MissingCost(c.name().into()))?;
            let dense = means[0].1;
            for (k, v) in means {
                rows.push(ColumnsRow {
                    n,
                    format: k.name().into(),
                    criterion: c.name().into(),
                    value: v,
                    ratio_vs_dense: ratio(dense, v),
                });
            }
        }
    }
    Ok(SweepOutput { rows, report })
}
