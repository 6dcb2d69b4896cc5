//! Tiered cost tables and pricing of operation traces.
//!
//! A table maps (operation, bit width, memory tier) to a cost in pJ or ns.
//! Arithmetic entries carry the tier `n/a`; reads and writes are priced by the
//! tier of the array they touch, chosen from its size in bytes.

mod calibrate;
mod formulas;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use calibrate::{calibrate_latency_table, TIER_PROBE_BYTES};
pub use formulas::{estimate_energy, estimate_storage, ArrayWidths, FormulaInputs, IndexPolicy, StorageMode};

use crate::error::{Error, Result};
use crate::formats::{ArrayTag, Encoded};
use crate::kernels::{OpKind, OpTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "pJ")]
    PicoJoule,
    #[serde(rename = "ns")]
    NanoSecond,
    /// Plain operation counts.
    #[serde(rename = "ops")]
    Ops,
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::PicoJoule => "pJ",
            Unit::NanoSecond => "ns",
            Unit::Ops => "ops",
        })
    }
}

/// Memory tier by array size; `NotApplicable` for arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Tier {
    #[serde(rename = "<8KB")]
    Under8K,
    #[serde(rename = "<32KB")]
    Under32K,
    #[serde(rename = "<1MB")]
    Under1M,
    #[serde(rename = ">=1MB")]
    AtLeast1M,
    #[serde(rename = "n/a")]
    NotApplicable,
}

impl Tier {
    pub const MEMORY: [Tier; 4] = [Tier::Under8K, Tier::Under32K, Tier::Under1M, Tier::AtLeast1M];

    pub fn name(self) -> &'static str {
        match self {
            Tier::Under8K => "<8KB",
            Tier::Under32K => "<32KB",
            Tier::Under1M => "<1MB",
            Tier::AtLeast1M => ">=1MB",
            Tier::NotApplicable => "n/a",
        }
    }
}

impl fmt::Display for Tier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tier {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "<8KB" => Ok(Tier::Under8K),
            "<32KB" => Ok(Tier::Under32K),
            "<1MB" => Ok(Tier::Under1M),
            ">=1MB" | "≥1MB" => Ok(Tier::AtLeast1M),
            "n/a" => Ok(Tier::NotApplicable),
            other => Err(Error::invalid(format!("unknown tier '{other}'"))),
        }
    }
}

/// Smallest tier whose bound exceeds `bytes` (KB = 1024 bytes).
pub fn tier_of(bytes: u64) -> Tier {
    match bytes {
        0..=8191 => Tier::Under8K,
        8192..=32767 => Tier::Under32K,
        32768..=1_048_575 => Tier::Under1M,
        _ => Tier::AtLeast1M,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEntry {
    pub op: OpKind,
    pub bits: u32,
    pub tier: Tier,
    pub cost: f64,
}

#[derive(Serialize, Deserialize)]
struct CostTableDoc {
    #[serde(default)]
    name: String,
    unit: Unit,
    entries: Vec<CostEntry>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    metadata: BTreeMap<String, String>,
}

/// Cost per (operation, width, tier).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CostTableDoc", into = "CostTableDoc")]
pub struct CostTable {
    name: String,
    unit: Unit,
    costs: BTreeMap<(OpKind, u32, Tier), f64>,
    metadata: BTreeMap<String, String>,
}

impl TryFrom<CostTableDoc> for CostTable {
    type Error = Error;

    fn try_from(doc: CostTableDoc) -> Result<Self> {
        let mut table = CostTable::new(doc.name, doc.unit);
        for e in doc.entries {
            table.insert(e)?;
        }
        table.metadata = doc.metadata;
        Ok(table)
    }
}

impl From<CostTable> for CostTableDoc {
    fn from(t: CostTable) -> Self {
        CostTableDoc {
            entries: t.entries(),
            name: t.name,
            unit: t.unit,
            metadata: t.metadata,
        }
    }
}

impl fmt::Display for CostEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}/{}", self.op.name(), self.bits, self.tier)
    }
}

const TABLE_BITS: [u32; 3] = [8, 16, 32];

impl CostTable {
    pub fn new(name: impl Into<String>, unit: Unit) -> Self {
        Self {
            name: name.into(),
            unit,
            costs: BTreeMap::new(),
            metadata: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, e: CostEntry) -> Result<()> {
        if !(e.cost >= 0.0 && e.cost.is_finite()) {
            return Err(Error::invalid(format!("cost for {e} must be finite and non-negative")));
        }
        let arithmetic = matches!(e.op, OpKind::Sum | OpKind::Mul);
        if arithmetic != (e.tier == Tier::NotApplicable) && e.op != OpKind::Other {
            return Err(Error::invalid(format!("{e}: arithmetic entries take tier n/a, memory entries a size tier")));
        }
        self.costs.insert((e.op, e.bits, e.tier), e.cost);
        Ok(())
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn unit(&self) -> Unit {
        self.unit
    }

    pub fn metadata(&self) -> &BTreeMap<String, String> {
        &self.metadata
    }

    pub fn set_metadata(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.metadata.insert(key.into(), value.into());
    }

    pub fn entries(&self) -> Vec<CostEntry> {
        self.costs
            .iter()
            .map(|(&(op, bits, tier), &cost)| CostEntry { op, bits, tier, cost })
            .collect()
    }

    /// Cost of one operation. 64-bit entries missing from the table are
    /// extrapolated as twice the 32-bit cost; the flag reports when that
    /// happened. `other` operations cost 0 unless the table prices them.
    pub fn cost(&self, op: OpKind, bits: u32, tier: Tier) -> Result<(f64, bool)> {
        let tier = if op.is_memory() { tier } else { Tier::NotApplicable };
        if let Some(&c) = self.costs.get(&(op, bits, tier)) {
            return Ok((c, false));
        }
        if op == OpKind::Other {
            return Ok((0.0, false));
        }
        if bits == 64 {
            if let Some(&c) = self.costs.get(&(op, 32, tier)) {
                return Ok((2.0 * c, true));
            }
        }
        Err(Error::MissingCost(format!("{}/{bits}/{tier} in table '{}'", op.name(), self.name)))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    fn with_rows(name: &str, unit: Unit, add: [f64; 3], mul: [f64; 3], rw: [[f64; 3]; 4]) -> Self {
        let mut t = CostTable::new(name, unit);
        for (i, &bits) in TABLE_BITS.iter().enumerate() {
            t.costs.insert((OpKind::Sum, bits, Tier::NotApplicable), add[i]);
            t.costs.insert((OpKind::Mul, bits, Tier::NotApplicable), mul[i]);
            for (tier, row) in Tier::MEMORY.iter().zip(&rw) {
                t.costs.insert((OpKind::Read, bits, *tier), row[i]);
                t.costs.insert((OpKind::Write, bits, *tier), row[i]);
            }
        }
        t
    }
}

/// Name of [`default_energy_table`].
pub const DEFAULT_ENERGY_TABLE: &str = "cmos45";
/// Name of [`corrected_energy_table`].
pub const CORRECTED_ENERGY_TABLE: &str = "cmos45-corrected";
/// Name of [`unit_cost_table`].
pub const UNIT_TABLE: &str = "unit";

/// Energy per operation in pJ for a 45 nm process. The 16-bit read/write
/// entry of the largest tier is kept as published (5000 pJ) even though it
/// breaks the progression of its neighbours; see [`corrected_energy_table`].
pub fn default_energy_table() -> CostTable {
    CostTable::with_rows(
        DEFAULT_ENERGY_TABLE,
        Unit::PicoJoule,
        [0.2, 0.4, 0.9],
        [0.6, 1.1, 3.7],
        [
            [1.25, 2.5, 5.0],
            [2.5, 5.0, 10.0],
            [12.5, 25.0, 50.0],
            [250.0, 5000.0, 1000.0],
        ],
    )
}

/// [`default_energy_table`] with the 16-bit ≥1MB read/write cost set to 500 pJ.
pub fn corrected_energy_table() -> CostTable {
    let mut t = default_energy_table();
    t.name = CORRECTED_ENERGY_TABLE.into();
    for op in [OpKind::Read, OpKind::Write] {
        t.costs.insert((op, 16, Tier::AtLeast1M), 500.0);
    }
    t
}

/// Every sum, mul, read and write costs 1; pricing a trace with it counts
/// operations.
pub fn unit_cost_table() -> CostTable {
    let mut t = CostTable::with_rows(UNIT_TABLE, Unit::Ops, [1.0; 3], [1.0; 3], [[1.0; 3]; 4]);
    for op in [OpKind::Sum, OpKind::Mul] {
        t.costs.insert((op, 64, Tier::NotApplicable), 1.0);
    }
    for op in [OpKind::Read, OpKind::Write] {
        for tier in Tier::MEMORY {
            t.costs.insert((op, 64, tier), 1.0);
        }
    }
    t
}

/// Looks up a built-in table by name.
pub fn builtin_table(name: &str) -> Option<CostTable> {
    match name {
        DEFAULT_ENERGY_TABLE => Some(default_energy_table()),
        CORRECTED_ENERGY_TABLE => Some(corrected_energy_table()),
        UNIT_TABLE => Some(unit_cost_table()),
        _ => None,
    }
}

/// Byte size of every array a product touches, plus the dense footprint of
/// the matrix.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ArraySizes {
    pub bytes: BTreeMap<ArrayTag, u64>,
    pub footprint: u64,
}

impl ArraySizes {
    /// Sizes for `A·x` with `x` of width `input_bits` and output width
    /// `output_bits`.
    pub fn for_product(a: &Encoded, input_bits: u32, output_bits: u32) -> Self {
        let mut bytes: BTreeMap<ArrayTag, u64> =
            a.entry_counts().arrays.iter().map(|e| (e.tag, e.bytes())).collect();
        bytes.insert(ArrayTag::Input, (a.cols() as u64 * u64::from(input_bits)).div_ceil(8));
        bytes.insert(ArrayTag::Output, (a.rows() as u64 * u64::from(output_bits)).div_ceil(8));
        let footprint = (a.rows() as u64 * a.cols() as u64 * u64::from(a.element_bits())).div_ceil(8);
        Self { bytes, footprint }
    }

    pub fn get(&self, tag: ArrayTag) -> u64 {
        self.bytes.get(&tag).copied().unwrap_or(0)
    }
}

/// Which tier memory operations are priced at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum TierPolicy {
    /// Each array by its own size.
    #[default]
    PerArray,
    /// Every array at the tier of the dense matrix footprint `m·n·b_Ω/8`.
    Footprint,
    Fixed(Tier),
}

impl TierPolicy {
    pub fn tier(&self, tag: ArrayTag, sizes: &ArraySizes) -> Tier {
        match self {
            TierPolicy::PerArray => tier_of(sizes.get(tag)),
            TierPolicy::Footprint => tier_of(sizes.footprint),
            TierPolicy::Fixed(t) => *t,
        }
    }
}

impl fmt::Display for TierPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TierPolicy::PerArray => f.write_str("per-array"),
            TierPolicy::Footprint => f.write_str("footprint"),
            TierPolicy::Fixed(t) => write!(f, "fixed:{t}"),
        }
    }
}

impl From<TierPolicy> for String {
    fn from(p: TierPolicy) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for TierPolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for TierPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "per-array" => Ok(TierPolicy::PerArray),
            "footprint" => Ok(TierPolicy::Footprint),
            _ => match s.strip_prefix("fixed:") {
                Some(t) => Ok(TierPolicy::Fixed(t.parse()?)),
                None => Err(Error::invalid(format!(
                    "tier policy '{s}' is not per-array, footprint or fixed:<tier>"
                ))),
            },
        }
    }
}

/// One priced (operation, width, array) group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostLine {
    pub op: OpKind,
    pub bits: u32,
    pub source: ArrayTag,
    pub tier: Tier,
    pub count: f64,
    pub unit_cost: f64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub unit: Unit,
    pub table: String,
    pub policy: TierPolicy,
    pub total: f64,
    /// Element count `N` used for normalization.
    pub elements: u64,
    pub lines: Vec<CostLine>,
    /// True if some cost was extrapolated from the 32-bit entry.
    pub extrapolated: bool,
}

/// Coarse categories used for cost breakdowns.
pub fn category(op: OpKind, source: ArrayTag) -> &'static str {
    match (op, source) {
        (OpKind::Read, ArrayTag::Input) => "in_load",
        (OpKind::Read, ArrayTag::ColIndices) => "colI_load",
        (OpKind::Read, ArrayTag::Values) => "omega_load",
        (OpKind::Read, ArrayTag::OmegaIndices) => "omegaI_load",
        (OpKind::Read, ArrayTag::OmegaPtr | ArrayTag::RowPtr) => "ptr_load",
        (OpKind::Read, _) => "other_load",
        (OpKind::Sum, _) => "add",
        (OpKind::Mul, _) => "mul",
        (OpKind::Write, _) => "write",
        (OpKind::Other, _) => "other",
    }
}

pub const CATEGORIES: [&str; 10] = [
    "in_load",
    "colI_load",
    "omega_load",
    "omegaI_load",
    "ptr_load",
    "other_load",
    "add",
    "mul",
    "write",
    "other",
];

impl CostReport {
    pub fn per_element(&self) -> f64 {
        if self.elements == 0 {
            0.0
        } else {
            self.total / self.elements as f64
        }
    }

    /// Cost per (operation, source array).
    pub fn breakdown(&self) -> BTreeMap<(OpKind, ArrayTag), f64> {
        let mut out = BTreeMap::new();
        for l in &self.lines {
            *out.entry((l.op, l.source)).or_insert(0.0) += l.cost;
        }
        out
    }

    /// Cost per [`category`], every category present.
    pub fn categories(&self) -> BTreeMap<&'static str, f64> {
        let mut out: BTreeMap<&'static str, f64> = CATEGORIES.iter().map(|&c| (c, 0.0)).collect();
        for l in &self.lines {
            *out.get_mut(category(l.op, l.source)).expect("known category") += l.cost;
        }
        out
    }

    /// All counts and costs multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> CostReport {
        let mut r = self.clone();
        for l in &mut r.lines {
            l.count *= factor;
            l.cost *= factor;
        }
        r.total *= factor;
        r
    }
}

/// Prices every operation of `trace` with `table`.
pub fn price_trace(
    trace: &OpTrace,
    table: &CostTable,
    sizes: &ArraySizes,
    policy: TierPolicy,
    elements: u64,
) -> Result<CostReport> {
    let mut lines = Vec::new();
    let mut extrapolated = false;
    for c in trace.iter() {
        let tier = if c.key.kind.is_memory() {
            policy.tier(c.key.source, sizes)
        } else {
            Tier::NotApplicable
        };
        let (unit_cost, extra) = table.cost(c.key.kind, c.key.bits, tier)?;
        extrapolated |= extra;
        lines.push(CostLine {
            op: c.key.kind,
            bits: c.key.bits,
            source: c.key.source,
            tier,
            count: c.count as f64,
            unit_cost,
            cost: c.count as f64 * unit_cost,
        });
    }
    Ok(CostReport {
        unit: table.unit(),
        table: table.name().to_string(),
        policy,
        total: lines.iter().map(|l| l.cost).sum(),
        elements,
        lines,
        extrapolated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::{dot_range, KernelConfig};
    use crate::matrix::Vector;
    use crate::testing::{matrix_m, TRACED_ROW};

    #[test]
    fn published_values() {
        let t = default_energy_table();
        assert_eq!(t.cost(OpKind::Mul, 32, Tier::NotApplicable).unwrap().0, 3.7);
        assert_eq!(t.cost(OpKind::Read, 16, Tier::Under32K).unwrap().0, 5.0);
        assert_eq!(t.cost(OpKind::Sum, 8, Tier::NotApplicable).unwrap().0, 0.2);
        assert_eq!(t.cost(OpKind::Write, 32, Tier::AtLeast1M).unwrap().0, 1000.0);
        assert_eq!(t.cost(OpKind::Read, 16, Tier::AtLeast1M).unwrap().0, 5000.0);
        assert_eq!(corrected_energy_table().cost(OpKind::Read, 16, Tier::AtLeast1M).unwrap().0, 500.0);
        assert_eq!(t.cost(OpKind::Read, 64, Tier::Under8K).unwrap(), (10.0, true));
        assert_eq!(t.cost(OpKind::Other, 32, Tier::NotApplicable).unwrap().0, 0.0);
    }

    #[test]
    fn tiers() {
        assert_eq!(tier_of(0), Tier::Under8K);
        assert_eq!(tier_of(8191), Tier::Under8K);
        assert_eq!(tier_of(8192), Tier::Under32K);
        assert_eq!(tier_of(30 * 1024), Tier::Under32K);
        assert_eq!(tier_of(1 << 20), Tier::AtLeast1M);
        assert_eq!(
            default_energy_table().cost(OpKind::Read, 16, tier_of(30 * 1024)).unwrap().0,
            5.0
        );
    }

    #[test]
    fn two_element_scalar_product() {
        let mut t = OpTrace::new();
        t.add(OpKind::Sum, 32, ArrayTag::None, 1);
        t.add(OpKind::Mul, 32, ArrayTag::None, 2);
        t.add(OpKind::Read, 32, ArrayTag::Values, 2);
        t.add(OpKind::Read, 32, ArrayTag::Input, 2);
        t.add(OpKind::Write, 32, ArrayTag::Output, 1);
        let r = price_trace(&t, &default_energy_table(), &ArraySizes::default(), TierPolicy::PerArray, 2).unwrap();
        assert!((r.total - 33.3).abs() < 1e-9);
        let empty = price_trace(&OpTrace::new(), &default_energy_table(), &ArraySizes::default(), TierPolicy::PerArray, 2);
        assert_eq!(empty.unwrap().total, 0.0);
    }

    #[test]
    fn unit_table_counts_operations() {
        let a = Encoded::Dense(matrix_m());
        let mut t = OpTrace::new();
        let r = TRACED_ROW;
        dot_range(&a, &Vector::ones(12), r..r + 1, &KernelConfig::default(), Some(&mut t)).unwrap();
        let sizes = ArraySizes::for_product(&a, 32, 32);
        let report = price_trace(&t, &unit_cost_table(), &sizes, TierPolicy::PerArray, 12).unwrap();
        assert_eq!(report.total, 48.0);
        assert_eq!(report.categories()["mul"], 12.0);
    }

    #[test]
    fn missing_entry_is_named() {
        let mut t = OpTrace::new();
        t.add(OpKind::Read, 16, ArrayTag::Input, 1);
        let table = CostTable::new("empty", Unit::NanoSecond);
        let err = price_trace(&t, &table, &ArraySizes::default(), TierPolicy::PerArray, 1).unwrap_err();
        assert!(err.to_string().contains("read/16/<8KB"), "{err}");
    }

    #[test]
    fn json_round_trip() {
        let t = corrected_energy_table();
        assert_eq!(CostTable::from_json(&t.to_json().unwrap()).unwrap(), t);
        assert!(CostTable::from_json(r#"{"unit":"pJ","entries":[{"op":"sum","bits":8,"tier":"<8KB","cost":1}]}"#).is_err());
    }

    #[test]
    fn policy_names() {
        for p in [TierPolicy::PerArray, TierPolicy::Footprint, TierPolicy::Fixed(Tier::Under1M)] {
            assert_eq!(p.to_string().parse::<TierPolicy>().unwrap(), p);
        }
    }
}
