//! `lemt` command-line driver.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or validation error,
//! 3 infeasible (H, p0) target.

use std::env;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use lemt::costmodel::{
    builtin_table, calibrate_latency_table, CostTable, FormulaInputs, IndexPolicy, TierPolicy, DEFAULT_ENERGY_TABLE,
};
use lemt::formats::{container, FormatKind, IndexWidth};
use lemt::io::{read_tensor, write_csv, BenchReport, ReportFormat, Tensor};
use lemt::pipeline::{
    aggregate_stats, bench_matrix, columns_sweep, estimate, parse_cols, parse_grid, plane_sweep, BenchOptions,
    ColumnsRow, ColumnsSpec, EstimateRow, PlaneRow, PlaneSpec, Prepared, Pricing,
};
use lemt::quantize::{decompose_most_frequent, uniform_quantize, QuantRange, QuantizerSpec};
use lemt::stats::{matrix_stats, sample_matrix, synthesize_distribution, DistributionSpec, MatrixStats};
use lemt::{DenseMatrix, Encoded, Error};

/// Environment variable naming a directory of default cost tables
/// (`energy.json`, `latency.json`, or `<name>.json`).
const COST_DIR_VAR: &str = "LEMT_COST_DIR";

#[derive(Parser)]
#[command(name = "lemt", version, about = "Entropy-aware matrix formats: statistics, encoding, cost models and sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Distribution statistics of one or more weight tensors
    Stats(StatsArgs),
    /// Uniformly quantize a tensor and report its decomposition
    Quantize(QuantizeArgs),
    /// Encode a tensor into a matrix container, or decode a container
    Convert(ConvertArgs),
    /// Storage, operation, energy and time benchmark per format
    Bench(BenchArgs),
    /// Closed-form per-element storage and energy
    Estimate(EstimateArgs),
    /// Synthetic sweeps over the (H, p0) plane or the column count
    Sweep(SweepArgs),
    /// Measure a latency table on this host
    Calibrate(CalibrateArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

impl From<OutFormat> for ReportFormat {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => ReportFormat::Csv,
            OutFormat::Json => ReportFormat::Json,
        }
    }
}

#[derive(Args)]
struct Output {
    /// Output file; standard output when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: OutFormat,
}

#[derive(Args)]
struct TableArgs {
    /// Energy table: built-in name (cmos45, cmos45-corrected, unit) or JSON path
    #[arg(long)]
    energy_table: Option<String>,
    /// Latency table: built-in name or JSON path
    #[arg(long)]
    latency_table: Option<String>,
    /// per-array, footprint or fixed:<tier>
    #[arg(long)]
    tier_policy: Option<String>,
}

#[derive(Args)]
struct StatsArgs {
    #[arg(long = "input", required = true)]
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct QuantizeArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    bits: u32,
    /// Explicit range "lo:hi"; the matrix range when absent
    #[arg(long)]
    range: Option<String>,
    /// Quantized tensor output
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ConvertArgs {
    #[arg(long)]
    input: PathBuf,
    /// Target format when encoding a tensor
    #[arg(long, default_value = "cer")]
    formats: String,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    /// Synthesized input "H:p0:m:n"
    #[arg(long)]
    synth: Option<String>,
    /// Alphabet size of synthesized inputs
    #[arg(long, default_value_t = 128)]
    alphabet: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "dense,csr,cer,cser")]
    formats: String,
    #[command(flatten)]
    tables: TableArgs,
    /// Input vector width in bits; the element width when absent
    #[arg(long)]
    input_bits: Option<u32>,
    /// Timed repetitions for the wall-clock median (0 disables timing)
    #[arg(long, default_value_t = 0)]
    repeats: usize,
    /// Trace only this row's scalar product
    #[arg(long)]
    row: Option<usize>,
    #[arg(long, default_value = "bench")]
    label: String,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct EstimateArgs {
    /// Measure this tensor and use its statistics
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    k_bar: Option<f64>,
    #[arg(long, default_value_t = 0.0)]
    k_tilde: f64,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    cols: Option<usize>,
    #[arg(long, default_value_t = 128)]
    alphabet: usize,
    #[arg(long, default_value_t = 32)]
    element_bits: u32,
    #[arg(long)]
    input_bits: Option<u32>,
    /// Index width for every index array (8, 16 or 32); per array when absent
    #[arg(long)]
    index_bits: Option<u32>,
    #[arg(long, default_value = "dense,csr,cer,cser")]
    formats: String,
    #[command(flatten)]
    tables: TableArgs,
    #[command(flatten)]
    output: Output,
}

#[derive(Clone, Copy, ValueEnum)]
enum SweepKind {
    Plane,
    Columns,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(value_enum)]
    kind: SweepKind,
    /// Plane grid "H0:H1:dH,p0:p1:dp"
    #[arg(long)]
    grid: Option<String>,
    /// Column counts "n1,n2,..."
    #[arg(long)]
    cols: Option<String>,
    #[arg(long)]
    rows: Option<usize>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long)]
    alphabet: Option<usize>,
    /// Target entropy of the columns sweep
    #[arg(long)]
    entropy: Option<f64>,
    /// Target p0 of the columns sweep
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    tables: TableArgs,
    /// Also write the per-point mean benchmark records here
    #[arg(long)]
    report: Option<PathBuf>,
    #[arg(long)]
    label: Option<String>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct CalibrateArgs {
    #[arg(long, default_value_t = 1_000_000)]
    repetitions: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Data(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Data(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| Failure::Data(Error::Io {
            path: p.to_path_buf(),
            source: e,
        })),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout.write_all(text.as_bytes()).map_err(|e| Failure::Data(Error::Io {
                path: "<stdout>".into(),
                source: e,
            }))
        }
    }
}

fn to_json<T: Serialize>(x: &T) -> CliResult<String> {
    Ok(serde_json::to_string_pretty(x).map_err(Error::from)? + "\n")
}

fn render_rows<T: Serialize>(columns: &[&str], rows: &[T], format: OutFormat) -> CliResult<String> {
    match format {
        OutFormat::Csv => Ok(write_csv(columns, rows.iter())?),
        OutFormat::Json => to_json(&rows),
    }
}

fn cost_dir() -> Option<PathBuf> {
    env::var_os(COST_DIR_VAR).map(PathBuf::from)
}

/// Resolves a table name: built-in, then a file path, then
/// `$LEMT_COST_DIR/<name>.json`.
fn load_table(name: &str) -> CliResult<CostTable> {
    if let Some(t) = builtin_table(name) {
        return Ok(t);
    }
    let path = Path::new(name);
    if path.exists() {
        return Ok(CostTable::load(path)?);
    }
    if let Some(dir) = cost_dir() {
        let p = dir.join(format!("{name}.json"));
        if p.exists() {
            return Ok(CostTable::load(&p)?);
        }
    }
    Err(usage(format!("cost table '{name}' is neither built in nor a readable file")))
}

/// `$LEMT_COST_DIR/<file>` when it exists.
fn default_from_dir(file: &str) -> Option<PathBuf> {
    cost_dir().map(|d| d.join(file)).filter(|p| p.exists())
}

fn pricing(t: &TableArgs, default_policy: TierPolicy) -> CliResult<Pricing> {
    let energy = match &t.energy_table {
        Some(n) => load_table(n)?,
        None => match default_from_dir("energy.json") {
            Some(p) => CostTable::load(&p)?,
            None => load_table(DEFAULT_ENERGY_TABLE)?,
        },
    };
    let latency = match &t.latency_table {
        Some(n) => Some(load_table(n)?),
        None => default_from_dir("latency.json").map(|p| CostTable::load(&p)).transpose()?,
    };
    let policy = match &t.tier_policy {
        Some(s) => s.parse().map_err(|e: Error| usage(e.to_string()))?,
        None => default_policy,
    };
    Ok(Pricing {
        energy,
        latency,
        policy,
        input_bits: None,
        output_bits: None,
    })
}

fn parse_formats(s: &str) -> CliResult<Vec<FormatKind>> {
    s.split(',')
        .map(|f| f.trim().parse::<FormatKind>().map_err(|e| usage(e.to_string())))
        .collect()
}

#[derive(Serialize)]
struct StatsEntry {
    input: String,
    #[serde(flatten)]
    stats: MatrixStats,
    k_bar_over_n: f64,
}

fn cmd_stats(a: StatsArgs) -> CliResult<()> {
    let mut entries = Vec::new();
    for path in &a.inputs {
        let s = matrix_stats(&read_tensor(path)?)?;
        eprintln!(
            "{}: H={:.4} p0={:.4} k_bar={:.4} k_tilde={:.4} n={} k_bar/n={:.6}",
            path.display(),
            s.entropy,
            s.p0,
            s.k_bar,
            s.k_tilde,
            s.cols,
            s.k_bar / s.cols as f64
        );
        entries.push(StatsEntry {
            input: path.display().to_string(),
            k_bar_over_n: s.k_bar / s.cols as f64,
            stats: s,
        });
    }
    let all: Vec<MatrixStats> = entries.iter().map(|e| e.stats.clone()).collect();
    let aggregate = aggregate_stats(&all)?;
    let doc = serde_json::json!({
        "matrices": entries,
        "aggregate": aggregate,
        "weighting": {
            "entropy": "elements",
            "p0": "elements",
            "k_bar": "rows",
            "k_tilde": "rows",
            "cols": "matrices"
        }
    });
    emit(a.out.as_deref(), &to_json(&doc)?)
}

fn cmd_quantize(a: QuantizeArgs) -> CliResult<()> {
    let w = read_tensor(&a.input)?;
    let range = match &a.range {
        None => QuantRange::PerMatrix,
        Some(r) => {
            let (lo, hi) = r
                .split_once(':')
                .and_then(|(l, h)| Some((l.trim().parse().ok()?, h.trim().parse().ok()?)))
                .ok_or_else(|| usage(format!("range '{r}' is not lo:hi")))?;
            QuantRange::Explicit { lo, hi }
        }
    };
    let q = uniform_quantize(&w, &QuantizerSpec { bits: a.bits, range })?;
    let d = decompose_most_frequent(&q)?;
    let name = a.input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    lemt::io::write_tensor(&a.out, &Tensor::from_matrix(name, &q)?)?;
    let stats = matrix_stats(&d.hat)?;
    let doc = serde_json::json!({ "omega_max": d.omega_max, "stats": stats });
    emit(None, &to_json(&doc)?)
}

fn cmd_convert(a: ConvertArgs) -> CliResult<()> {
    let bytes = fs::read(&a.input).map_err(|e| Error::Io {
        path: a.input.clone(),
        source: e,
    })?;
    if bytes.starts_with(b"LEMF") {
        let enc = container::from_bytes(&bytes)?;
        let dense = enc.decode()?;
        lemt::io::write_tensor(&a.out, &Tensor::from_matrix("decoded", &dense)?)?;
        eprintln!("decoded {} {}x{}", enc.kind().name(), dense.rows(), dense.cols());
        return Ok(());
    }
    let kinds = parse_formats(&a.formats)?;
    let &[kind] = kinds.as_slice() else {
        return Err(usage("convert takes exactly one target format"));
    };
    let w = read_tensor(&a.input)?;
    let d = decompose_most_frequent(&w)?;
    let enc = Encoded::encode(kind, &d.hat)?;
    let out = container::to_bytes(&enc)?;
    fs::write(&a.out, &out).map_err(|e| Error::Io {
        path: a.out.clone(),
        source: e,
    })?;
    if d.omega_max != 0.0 {
        eprintln!("stored the decomposed matrix; add omega_max = {} to every entry to recover it", d.omega_max);
    }
    eprintln!("{} storage bits, {} bytes written", enc.storage_bits(), out.len());
    Ok(())
}

/// "H:p0:m:n" → sampled matrix.
fn synth(spec: &str, alphabet: usize, seed: u64) -> CliResult<DenseMatrix> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || usage(format!("synth spec '{spec}' is not H:p0:m:n"));
    let &[h, p0, m, n] = parts.as_slice() else {
        return Err(bad());
    };
    let h: f64 = h.parse().map_err(|_| bad())?;
    let p0: f64 = p0.parse().map_err(|_| bad())?;
    let m: usize = m.parse().map_err(|_| bad())?;
    let n: usize = n.parse().map_err(|_| bad())?;
    let alphabet = synthesize_distribution(&DistributionSpec::new(h, p0, alphabet))?;
    Ok(sample_matrix(&alphabet, m, n, seed)?)
}

fn cmd_bench(a: BenchArgs) -> CliResult<()> {
    if a.inputs.is_empty() && a.synth.is_none() {
        return Err(usage("bench needs --input or --synth"));
    }
    let mut pricing = pricing(&a.tables, TierPolicy::PerArray)?;
    pricing.input_bits = a.input_bits;
    let opts = BenchOptions {
        formats: parse_formats(&a.formats)?,
        pricing,
        repeats: a.repeats,
        row: a.row,
        run_label: a.label.clone(),
    };
    let mut report = BenchReport::new(a.label.clone());
    for path in &a.inputs {
        let m = read_tensor(path)?;
        report.records.extend(bench_matrix(&m, &path.display().to_string(), None, &opts)?);
    }
    if let Some(spec) = &a.synth {
        let m = synth(spec, a.alphabet, a.seed)?;
        report.records.extend(bench_matrix(&m, &format!("synth:{spec}"), Some(a.seed), &opts)?);
    }
    emit(a.output.out.as_deref(), &report.render(a.output.format.into())?)
}

fn cmd_estimate(a: EstimateArgs) -> CliResult<()> {
    let pricing = pricing(&a.tables, TierPolicy::PerArray)?;
    let formats = parse_formats(&a.formats)?;
    let index = match a.index_bits {
        None => IndexPolicy::PerArray,
        Some(b) => IndexPolicy::Uniform(
            IndexWidth::from_bits(b).ok_or_else(|| usage(format!("index width {b} is not 8, 16 or 32")))?,
        ),
    };
    let (mut x, matrix) = match &a.input {
        Some(path) => {
            let p = Prepared::new(&read_tensor(path)?)?;
            let b = a.input_bits.unwrap_or(p.hat.element_bits());
            (FormulaInputs::from_stats(&p.stats, p.hat.element_bits(), b), Some(p.hat))
        }
        None => {
            let need = |name: &str| usage(format!("--{name} is required without --input"));
            let b = a.input_bits.unwrap_or(a.element_bits);
            let x = FormulaInputs {
                p0: a.p0.ok_or_else(|| need("p0"))?,
                k_bar: a.k_bar.ok_or_else(|| need("k-bar"))?,
                k_tilde: a.k_tilde,
                rows: a.rows.ok_or_else(|| need("rows"))?,
                cols: a.cols.ok_or_else(|| need("cols"))?,
                alphabet_len: a.alphabet,
                element_bits: a.element_bits,
                input_bits: b,
                output_bits: a.element_bits.max(b),
                index,
                tiers: pricing.policy,
            };
            (x, None)
        }
    };
    x.index = index;
    x.tiers = pricing.policy;
    let rows: Vec<EstimateRow> = estimate(&x, &pricing.energy, &formats, matrix.as_ref())?
        .iter()
        .map(EstimateRow::rounded)
        .collect();
    emit(a.output.out.as_deref(), &render_rows(&EstimateRow::COLUMNS, &rows, a.output.format)?)
}

fn cmd_sweep(a: SweepArgs) -> CliResult<()> {
    let (text, report) = match a.kind {
        SweepKind::Plane => {
            let mut spec = PlaneSpec::default();
            if let Some(g) = &a.grid {
                let (h, p) = parse_grid(g).map_err(|e| usage(e.to_string()))?;
                spec.entropy = h;
                spec.p0 = p;
            }
            if let Some(c) = &a.cols {
                let cols = parse_cols(c).map_err(|e| usage(e.to_string()))?;
                spec.cols = cols[0];
            }
            apply_settings(&mut spec.settings, &a, TierPolicy::Footprint)?;
            let out = plane_sweep(&spec)?;
            let rows: Vec<PlaneRow> = out.rows.iter().map(PlaneRow::rounded).collect();
            (render_rows(&PlaneRow::COLUMNS, &rows, a.output.format)?, out.report)
        }
        SweepKind::Columns => {
            let mut spec = ColumnsSpec::default();
            if let Some(c) = &a.cols {
                spec.cols = parse_cols(c).map_err(|e| usage(e.to_string()))?;
            }
            if let Some(h) = a.entropy {
                spec.entropy = h;
            }
            if let Some(p) = a.p0 {
                spec.p0 = p;
            }
            apply_settings(&mut spec.settings, &a, TierPolicy::PerArray)?;
            let out = columns_sweep(&spec)?;
            let rows: Vec<ColumnsRow> = out.rows.iter().map(ColumnsRow::rounded).collect();
            (render_rows(&ColumnsRow::COLUMNS, &rows, a.output.format)?, out.report)
        }
    };
    if let Some(p) = &a.report {
        report.write(a.output.format.into(), p)?;
    }
    emit(a.output.out.as_deref(), &text)
}

fn apply_settings(s: &mut lemt::pipeline::SweepSettings, a: &SweepArgs, policy: TierPolicy) -> CliResult<()> {
    if let Some(r) = a.rows {
        s.rows = r;
    }
    if let Some(n) = a.samples {
        s.samples = n;
    }
    if let Some(k) = a.alphabet {
        s.alphabet_len = k;
    }
    if let Some(l) = &a.label {
        s.run_label = l.clone();
    }
    s.seed = a.seed;
    s.pricing = pricing(&a.tables, policy)?;
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs) -> CliResult<()> {
    let table = calibrate_latency_table(a.repetitions)?;
    emit(a.out.as_deref(), &(table.to_json()? + "\n"))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Stats(a) => cmd_stats(a),
        Command::Quantize(a) => cmd_quantize(a),
        Command::Convert(a) => cmd_convert(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Estimate(a) => cmd_estimate(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Calibrate(a) => cmd_calibrate(a),
    }
}

fn exit_code(f: &Failure) -> u8 {
    match f {
        Failure::Usage(_) => 1,
        Failure::Data(Error::Infeasible(_)) => 3,
        Failure::Data(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            match &f {
                Failure::Usage(msg) => eprintln!("error: {msg}"),
                Failure::Data(e) => eprintln!("error: {e}"),
            }
            ExitCode::from(exit_code(&f))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use lemt::testing::matrix_m;

    fn exec(args: &[&str]) -> Result<(), u8> {
        let cli = Cli::try_parse_from(std::iter::once("lemt").chain(args.iter().copied())).map_err(|_| 1u8)?;
        run(cli).map_err(|f| exit_code(&f))
    }

    fn s(p: &Path) -> &str {
        p.to_str().unwrap()
    }

    #[test]
    fn convert_round_trips_through_a_container() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.lemt");
        lemt::io::write_tensor(&m, &Tensor::from_matrix("M", &matrix_m()).unwrap()).unwrap();
        for f in ["dense", "csr", "cer", "cser"] {
            let enc = dir.path().join(format!("m.{f}.lemf"));
            let back = dir.path().join(format!("back.{f}.lemt"));
            exec(&["convert", "--input", s(&m), "--formats", f, "--out", s(&enc)]).unwrap();
            exec(&["convert", "--input", s(&enc), "--out", s(&back)]).unwrap();
            assert_eq!(read_tensor(&back).unwrap(), matrix_m(), "{f}");
        }
    }

    #[test]
    fn stats_and_estimate_write_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let m = dir.path().join("m.lemt");
        lemt::io::write_tensor(&m, &Tensor::from_matrix("M", &matrix_m()).unwrap()).unwrap();
        let stats = dir.path().join("stats.json");
        exec(&["stats", "--input", s(&m), "--out", s(&stats)]).unwrap();
        let doc: serde_json::Value = serde_json::from_str(&fs::read_to_string(&stats).unwrap()).unwrap();
        assert!(doc.to_string().contains("p0"));

        let est = dir.path().join("est.csv");
        exec(&["estimate", "--p0", "0.55", "--k-bar", "40", "--rows", "100", "--cols", "1000", "--out", s(&est)]).unwrap();
        let text = fs::read_to_string(&est).unwrap();
        assert!(text.starts_with("format,"), "{text}");
        assert_eq!(text.lines().count(), 5);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exec(&["bench"]), Err(1));
        assert_eq!(exec(&["bench", "--synth", "0.89:0.89:4:8", "--energy-table", "nonsense"]), Err(1));
        assert_eq!(exec(&["stats", "--input", "/nonexistent/w.lemt"]), Err(2));
        assert_eq!(exec(&["bench", "--synth", "0.1:0.1:4:8"]), Err(3));
        assert_eq!(exec(&["sweep", "plane", "--grid", "0.1:0.1:0.1,0.1:0.1:0.1"]), Err(3));
        assert_eq!(exec(&["frobnicate"]), Err(1));
    }
}
