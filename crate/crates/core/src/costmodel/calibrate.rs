//! Host micro-benchmarks producing a latency table in ns.

use std::hint::black_box;
use std::sync::atomic::{AtomicBool, Ordering};
use std::time::{Duration, Instant};

use half::f16;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::kernels::OpKind;

use super::{CostTable, Tier, Unit};

/// Array size in bytes probed for each memory tier.
pub const TIER_PROBE_BYTES: [(Tier, usize); 4] = [
    (Tier::Under8K, 4 << 10),
    (Tier::Under32K, 16 << 10),
    (Tier::Under1M, 512 << 10),
    (Tier::AtLeast1M, 16 << 20),
];

const BATCHES: usize = 9;

/// Smallest non-zero step observed between two clock reads.
fn clock_resolution() -> Duration {
    let mut best = Duration::from_secs(1);
    for _ in 0..1000 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

static RUNNING: AtomicBool = AtomicBool::new(false);

struct Guard;

impl Drop for Guard {
    fn drop(&mut self) {
        RUNNING.store(false, Ordering::Release);
    }
}

/// Median ns per iteration of `body` over several batches.
fn median_ns(repetitions: usize, min_batch: Duration, mut body: impl FnMut(usize) -> u64) -> Result<f64> {
    body(repetitions.min(1024)); // warm-up
    let mut samples = Vec::with_capacity(BATCHES);
    for _ in 0..BATCHES {
        let start = Instant::now();
        black_box(body(repetitions));
        let elapsed = start.elapsed();
        if elapsed < min_batch {
            return Err(Error::Calibration(format!(
                "a batch of {repetitions} operations took {elapsed:?}, below the reliable clock range; \
                 increase the repetition count"
            )));
        }
        samples.push(elapsed.as_secs_f64() * 1e9 / repetitions as f64);
    }
    samples.sort_by(f64::total_cmp);
    Ok(samples[BATCHES / 2])
}

fn arith_chain(op: OpKind, bits: u32, reps: usize) -> u64 {
    // dependent chains so that each operation waits for the previous one
    match (op, bits) {
        (OpKind::Sum, 8) => {
            let mut a = black_box(1i8);
            let b = black_box(3i8);
            for _ in 0..reps {
                a = black_box(a.wrapping_add(b));
            }
            a as u64
        }
        (OpKind::Mul, 8) => {
            let mut a = black_box(3i8);
            let b = black_box(5i8);
            for _ in 0..reps {
                a = black_box(a.wrapping_mul(b));
            }
            a as u64
        }
        (OpKind::Sum, 16) => {
            let mut a = black_box(f16::from_f32(0.5));
            let b = black_box(f16::from_f32(1e-3));
            for _ in 0..reps {
                a = black_box(a + b);
            }
            a.to_bits() as u64
        }
        (OpKind::Mul, 16) => {
            let mut a = black_box(f16::from_f32(0.5));
            let b = black_box(f16::from_f32(1.0));
            for _ in 0..reps {
                a = black_box(a * b);
            }
            a.to_bits() as u64
        }
        (OpKind::Sum, _) => {
            let mut a = black_box(0.5f32);
            let b = black_box(1e-7f32);
            for _ in 0..reps {
                a = black_box(a + b);
            }
            a.to_bits() as u64
        }
        _ => {
            let mut a = black_box(0.5f32);
            let b = black_box(1.0000001f32);
            for _ in 0..reps {
                a = black_box(a * b);
            }
            a.to_bits() as u64
        }
    }
}

/// Word array of a given entry width with random contents.
enum Probe {
    U8(Vec<u8>),
    U16(Vec<u16>),
    U32(Vec<u32>),
}

impl Probe {
    fn new(bits: u32, bytes: usize, rng: &mut ChaCha8Rng) -> Self {
        let len = bytes * 8 / bits as usize;
        match bits {
            8 => Probe::U8((0..len).map(|_| rng.gen()).collect()),
            16 => Probe::U16((0..len).map(|_| rng.gen()).collect()),
            _ => Probe::U32((0..len).map(|_| rng.gen()).collect()),
        }
    }

    fn len(&self) -> usize {
        match self {
            Probe::U8(v) => v.len(),
            Probe::U16(v) => v.len(),
            Probe::U32(v) => v.len(),
        }
    }

    #[inline(always)]
    fn get(&self, i: usize) -> u64 {
        match self {
            Probe::U8(v) => u64::from(v[i]),
            Probe::U16(v) => u64::from(v[i]),
            Probe::U32(v) => u64::from(v[i]),
        }
    }

    #[inline(always)]
    fn set(&mut self, i: usize, x: u64) {
        match self {
            Probe::U8(v) => v[i] = x as u8,
            Probe::U16(v) => v[i] = x as u16,
            Probe::U32(v) => v[i] = x as u32,
        }
    }
}

/// Next pseudo-random position; the loaded value feeds in, making reads a
/// dependent chain.
#[inline(always)]
fn next_index(i: usize, v: u64, mask: usize) -> usize {
    (i.wrapping_mul(0x9E37_79B9).wrapping_add(v as usize).wrapping_add(0x7F4A_7C15)) & mask
}

fn read_chain(p: &Probe, reps: usize) -> u64 {
    let mask = p.len() - 1;
    let mut i = 0usize;
    let mut acc = 0u64;
    for _ in 0..reps {
        let v = p.get(i);
        acc = acc.wrapping_add(v);
        i = next_index(i, v, mask);
    }
    acc
}

fn write_chain(p: &mut Probe, reps: usize) -> u64 {
    let mask = p.len() - 1;
    let mut i = 0usize;
    for k in 0..reps {
        p.set(i, k as u64);
        i = next_index(i, k as u64, mask);
    }
    black_box(p.get(0))
}

/// Times every (operation, width, tier) on this host and returns the median
/// latency per operation.
///
/// The read loop subtracts nothing: each figure includes the index arithmetic
/// of the chain, which is the same for every tier. Refuses to run while
/// another calibration is in progress.
pub fn calibrate_latency_table(repetitions: usize) -> Result<CostTable> {
    if repetitions < 10_000 {
        return Err(Error::Calibration(format!(
            "{repetitions} repetitions requested, at least 10000 are required"
        )));
    }
    if RUNNING.swap(true, Ordering::AcqRel) {
        return Err(Error::Calibration("another calibration is already running".into()));
    }
    let _guard = Guard;

    let min_batch = clock_resolution() * 100;
    let mut table = CostTable::new("calibrated", Unit::NanoSecond);
    let mut rng = ChaCha8Rng::seed_from_u64(0x1a7e);
    for bits in [8u32, 16, 32] {
        for op in [OpKind::Sum, OpKind::Mul] {
            let ns = median_ns(repetitions, min_batch, |r| arith_chain(op, bits, r))?;
            table.insert(super::CostEntry {
                op,
                bits,
                tier: Tier::NotApplicable,
                cost: ns,
            })?;
        }
        for (tier, bytes) in TIER_PROBE_BYTES {
            let mut probe = Probe::new(bits, bytes, &mut rng);
            let read = median_ns(repetitions, min_batch, |r| read_chain(&probe, r))?;
            let write = median_ns(repetitions, min_batch, |r| write_chain(&mut probe, r))?;
            for (op, cost) in [(OpKind::Read, read), (OpKind::Write, write)] {
                table.insert(super::CostEntry { op, bits, tier, cost })?;
            }
        }
    }
    table.set_metadata("arch", std::env::consts::ARCH);
    table.set_metadata("os", std::env::consts::OS);
    table.set_metadata("repetitions", repetitions.to_string());
    table.set_metadata("statistic", format!("median of {BATCHES} batches"));
    Ok(table)
}
