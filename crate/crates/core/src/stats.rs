//! Empirical element distributions, entropy and per-row sharing statistics,
//! plus synthesis of distributions at chosen (entropy, sparsity) points.

use std::collections::HashMap;

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Identifier of the pseudo-random generator and sampling scheme used by
/// [`sample_matrix`]. Reports carry it so sweeps can be reproduced.
pub const SAMPLER_ID: &str = "chacha8-rand0.8-weighted-index";

const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ElementOrder {
    /// Descending mass, ties broken by ascending value.
    FrequencyMajor,
    ValueAscending,
}

/// Ordered set of distinct elements with their probability masses.
#[derive(Debug, Clone, PartialEq)]
pub struct Alphabet {
    elements: Vec<f64>,
    masses: Vec<f64>,
    counts: Option<Vec<u64>>,
    order: ElementOrder,
}

impl Alphabet {
    /// Builds a frequency-major alphabet from `(element, mass)` pairs in any order.
    pub fn from_masses(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut pairs: Vec<(f64, f64)> = pairs.into_iter().collect();
        pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.total_cmp(&b.0)));
        let (elements, masses) = pairs.into_iter().unzip();
        let alphabet = Self {
            elements,
            masses,
            counts: None,
            order: ElementOrder::FrequencyMajor,
        };
        alphabet.validate()?;
        Ok(alphabet)
    }

    fn from_counts(mut pairs: Vec<(f64, u64)>) -> Result<Self> {
        let total: u64 = pairs.iter().map(|p| p.1).sum();
        if total == 0 {
            return Err(Error::EmptyInput);
        }
        pairs.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.total_cmp(&b.0)));
        let elements = pairs.iter().map(|p| p.0).collect();
        let masses = pairs.iter().map(|p| p.1 as f64 / total as f64).collect();
        let counts = pairs.iter().map(|p| p.1).collect();
        let alphabet = Self {
            elements,
            masses,
            counts: Some(counts),
            order: ElementOrder::FrequencyMajor,
        };
        alphabet.validate()?;
        Ok(alphabet)
    }

    fn validate(&self) -> Result<()> {
        if self.elements.is_empty() {
            return Err(Error::EmptyInput);
        }
        if self.masses.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::invalid("every alphabet mass must be positive"));
        }
        let total: f64 = self.masses.iter().sum();
        if (total - 1.0).abs() > MASS_TOLERANCE * self.masses.len().max(1) as f64 {
            return Err(Error::invalid(format!("masses sum to {total}, not 1")));
        }
        let mut sorted = self.elements.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("alphabet elements must be distinct"));
        }
        Ok(())
    }

    pub fn elements(&self) -> &[f64] {
        &self.elements
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Occurrence counts, present when the alphabet was measured from data.
    pub fn counts(&self) -> Option<&[u64]> {
        self.counts.as_deref()
    }

    pub fn order(&self) -> ElementOrder {
        self.order
    }

    /// Alphabet size `K`.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Shannon entropy in bits.
    pub fn entropy(&self) -> f64 {
        entropy_of(&self.masses)
    }

    /// Mass of the most frequent element.
    pub fn max_mass(&self) -> f64 {
        self.masses.iter().copied().fold(0.0, f64::max)
    }

    /// The most frequent element (smallest value among ties).
    pub fn mode(&self) -> f64 {
        match self.order {
            ElementOrder::FrequencyMajor => self.elements[0],
            ElementOrder::ValueAscending => self.to_frequency_major().elements[0],
        }
    }

    pub fn to_value_ascending(&self) -> Self {
        self.reordered(ElementOrder::ValueAscending)
    }

    pub fn to_frequency_major(&self) -> Self {
        self.reordered(ElementOrder::FrequencyMajor)
    }

    fn reordered(&self, order: ElementOrder) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        match order {
            ElementOrder::ValueAscending => {
                idx.sort_by(|&a, &b| self.elements[a].total_cmp(&self.elements[b]))
            }
            ElementOrder::FrequencyMajor => idx.sort_by(|&a, &b| {
                self.masses[b]
                    .total_cmp(&self.masses[a])
                    .then(self.elements[a].total_cmp(&self.elements[b]))
            }),
        }
        Self {
            elements: idx.iter().map(|&i| self.elements[i]).collect(),
            masses: idx.iter().map(|&i| self.masses[i]).collect(),
            counts: self
                .counts
                .as_ref()
                .map(|c| idx.iter().map(|&i| c[i]).collect()),
            order,
        }
    }
}

pub(crate) fn entropy_of(masses: &[f64]) -> f64 {
    let h: f64 = masses
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    h.max(0.0)
}

/// Counts every distinct value of `matrix` and returns the frequency-major alphabet.
pub fn empirical_distribution(matrix: &DenseMatrix) -> Result<Alphabet> {
    if matrix.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut sorted = matrix.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut pairs: Vec<(f64, u64)> = Vec::new();
    for v in sorted {
        match pairs.last_mut() {
            Some((last, count)) if *last == v => *count += 1,
            _ => pairs.push((v, 1)),
        }
    }
    Alphabet::from_counts(pairs)
}

/// Entropy of an alphabet in bits.
pub fn entropy(alphabet: &Alphabet) -> f64 {
    alphabet.entropy()
}

/// Summary statistics of one matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixStats {
    /// Entropy `H` in bits.
    pub entropy: f64,
    /// Mass of the most frequent element.
    pub p0: f64,
    /// Mean number of distinct non-mode elements per row.
    pub k_bar: f64,
    /// Mean number of padded (empty) segments per row under the global
    /// frequency-major order.
    pub k_tilde: f64,
    pub rows: usize,
    pub cols: usize,
    pub len: usize,
    /// Alphabet size `K`.
    pub alphabet_len: usize,
    /// The most frequent element.
    pub mode: f64,
}

impl MatrixStats {
    /// Total segment count of the entropy-row encoding, `m·(k̄ + k̃)`.
    pub fn padded_segments(&self) -> usize {
        ((self.k_bar + self.k_tilde) * self.rows as f64).round() as usize
    }

    /// Total segment count of the shared-elements encoding, `m·k̄`.
    pub fn shared_segments(&self) -> usize {
        (self.k_bar * self.rows as f64).round() as usize
    }

    /// Number of entries different from the mode, `N·(1 − p₀)`.
    pub fn non_mode_len(&self) -> usize {
        ((1.0 - self.p0) * self.len as f64).round() as usize
    }
}

/// Computes H, p₀, k̄ and k̃ for `matrix`.
///
/// k̃ counts, per row, the alphabet positions `1 ≤ j < j_max(r)` whose element
/// is absent from the row while a later-ranked element is present.
pub fn matrix_stats(matrix: &DenseMatrix) -> Result<MatrixStats> {
    let alphabet = empirical_distribution(matrix)?;
    let rank: HashMap<u64, usize> = alphabet
        .elements()
        .iter()
        .enumerate()
        .map(|(i, v)| (v.to_bits(), i))
        .collect();

    let k = alphabet.len();
    let mut seen = vec![false; k];
    let mut touched = Vec::with_capacity(k);
    let (mut distinct_total, mut padded_total) = (0usize, 0usize);
    for r in 0..matrix.rows() {
        let mut max_rank = 0;
        for v in matrix.row(r) {
            let j = rank[&v.to_bits()];
            if j > 0 && !seen[j] {
                seen[j] = true;
                touched.push(j);
                max_rank = max_rank.max(j);
            }
        }
        distinct_total += touched.len();
        padded_total += max_rank - touched.len();
        for j in touched.drain(..) {
            seen[j] = false;
        }
    }

    let m = matrix.rows() as f64;
    Ok(MatrixStats {
        entropy: alphabet.entropy(),
        p0: alphabet.masses()[0],
        k_bar: distinct_total as f64 / m,
        k_tilde: padded_total as f64 / m,
        rows: matrix.rows(),
        cols: matrix.cols(),
        len: matrix.len(),
        alphabet_len: k,
        mode: alphabet.mode(),
    })
}

fn check_band_args(p0: f64, alphabet_len: usize) -> Result<()> {
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(Error::invalid(format!("p0 = {p0} must lie in (0, 1)")));
    }
    if alphabet_len < 2 {
        return Err(Error::invalid("alphabet size must be at least 2"));
    }
    if p0 * (alphabet_len as f64) < 1.0 - 1e-12 {
        return Err(Error::Infeasible(format!(
            "p0 = {p0} is below 1/K = {}",
            1.0 / alphabet_len as f64
        )));
    }
    Ok(())
}

/// Support-minimal distribution with maximum mass `p0`: `p0` repeated
/// `⌊1/p0⌋` times plus the remainder.
fn min_entropy_masses(p0: f64) -> Vec<f64> {
    let full = (1.0 / p0 + 1e-9).floor() as usize;
    let mut masses = vec![p0; full];
    let rest = 1.0 - full as f64 * p0;
    if rest > MASS_TOLERANCE {
        masses.push(rest);
    }
    masses
}

/// Spike-and-slab masses: `p0` followed by `K − 1` equal masses.
fn spike_and_slab_masses(p0: f64, alphabet_len: usize) -> Vec<f64> {
    let mut masses = vec![(1.0 - p0) / (alphabet_len - 1) as f64; alphabet_len];
    masses[0] = p0;
    masses
}

/// Entropy range `(H_min, H_max)` reachable by distributions over `K`
/// elements whose largest mass is `p0`.
pub fn feasible_band(p0: f64, alphabet_len: usize) -> Result<(f64, f64)> {
    check_band_args(p0, alphabet_len)?;
    let h_min = entropy_of(&min_entropy_masses(p0));
    let q = 1.0 - p0;
    let h_max = -p0 * p0.log2() - q * (q / (alphabet_len - 1) as f64).log2();
    Ok((h_min, h_max.max(h_min)))
}

/// Target point on the (H, p₀) plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistributionSpec {
    pub entropy: f64,
    pub p0: f64,
    pub alphabet_len: usize,
    pub tolerance: f64,
}

impl DistributionSpec {
    pub fn new(entropy: f64, p0: f64, alphabet_len: usize) -> Self {
        Self {
            entropy,
            p0,
            alphabet_len,
            tolerance: 1e-3,
        }
    }
}

/// Builds an alphabet `{0, 1, …, K−1}` with mass `p0` on 0 and entropy within
/// `spec.tolerance` of the target.
///
/// Masses are the mixture `(1 − t)·P_min + t·P_slab` of the min-entropy and
/// spike-and-slab distributions for the given `p0`; both are non-increasing
/// with leading mass `p0`, so every mixture keeps `p0` as the largest mass,
/// and entropy rises monotonically from `H_min` at `t = 0` to `H_max` at
/// `t = 1`. `t` is found by bisection.
pub fn synthesize_distribution(spec: &DistributionSpec) -> Result<Alphabet> {
    let DistributionSpec {
        entropy: target,
        p0,
        alphabet_len: k,
        tolerance,
    } = *spec;
    let (h_min, h_max) = feasible_band(p0, k)?;
    if !(tolerance >= 0.0) {
        return Err(Error::invalid("tolerance must be non-negative"));
    }
    if target < h_min - tolerance || target > h_max + tolerance {
        return Err(Error::Infeasible(format!(
            "H = {target} outside feasible band [{h_min:.6}, {h_max:.6}] for p0 = {p0}, K = {k}"
        )));
    }

    let mut low = min_entropy_masses(p0);
    low.resize(k, 0.0);
    let high = spike_and_slab_masses(p0, k);
    let mix = |t: f64| -> Vec<f64> {
        low.iter()
            .zip(&high)
            .map(|(a, b)| (1.0 - t) * a + t * b)
            .collect()
    };

    let t = if target <= h_min {
        0.0
    } else if target >= h_max {
        1.0
    } else {
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut mid = 0.5;
        for _ in 0..200 {
            mid = 0.5 * (lo + hi);
            let h = entropy_of(&mix(mid));
            if (h - target).abs() <= tolerance * 1e-3 {
                break;
            }
            if h < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        mid
    };

    let masses = mix(t);
    Alphabet::from_masses(
        masses
            .into_iter()
            .enumerate()
            .filter(|(_, p)| *p > 0.0)
            .map(|(i, p)| (i as f64, p)),
    )
}

/// Draws an `m × n` matrix with i.i.d. entries from `alphabet`.
pub fn sample_matrix(alphabet: &Alphabet, rows: usize, cols: usize, seed: u64) -> Result<DenseMatrix> {
    if rows == 0 || cols == 0 {
        return Err(Error::invalid("sampled matrices need at least one row and column"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = WeightedIndex::new(alphabet.masses())
        .map_err(|e| Error::invalid(format!("alphabet masses: {e}")))?;
    let elements = alphabet.elements();
    let values = (0..rows * cols)
        .map(|_| elements[dist.sample(&mut rng)])
        .collect();
    DenseMatrix::new(rows, cols, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testing::matrix_m;

    #[test]
    fn empirical_distribution_of_m() {
        let a = empirical_distribution(&matrix_m()).unwrap();
        assert_eq!(a.elements(), &[0.0, 4.0, 3.0, 2.0]);
        assert_eq!(a.counts().unwrap(), &[32, 21, 4, 3]);
    }

    #[test]
    fn single_element_and_ties() {
        let a = empirical_distribution(&DenseMatrix::filled(2, 2, 7.0).unwrap()).unwrap();
        assert_eq!(a.elements(), &[7.0]);
        assert_eq!(a.masses(), &[1.0]);
        assert_eq!(a.entropy(), 0.0);

        let b = empirical_distribution(&DenseMatrix::new(1, 4, vec![1.0, 2.0, 1.0, 3.0]).unwrap())
            .unwrap();
        assert_eq!(b.elements(), &[1.0, 2.0, 3.0]);
        assert_eq!(b.masses(), &[0.5, 0.25, 0.25]);
    }

    #[test]
    fn empty_matrix_is_rejected() {
        let e = DenseMatrix::new(0, 0, vec![]).unwrap();
        assert!(matches!(empirical_distribution(&e), Err(Error::EmptyInput)));
        assert!(matrix_stats(&e).is_err());
    }

    #[test]
    fn entropy_values() {
        let uniform = Alphabet::from_masses((0..4).map(|i| (i as f64, 0.25))).unwrap();
        assert_eq!(uniform.entropy(), 2.0);
        // −Σ p log₂ p for counts 32, 21, 4, 3 out of 60
        let expected: f64 = [32.0, 21.0, 4.0, 3.0]
            .iter()
            .map(|c: &f64| {
                let p = c / 60.0;
                -p * p.log2()
            })
            .sum();
        let h = empirical_distribution(&matrix_m()).unwrap().entropy();
        assert!((h - expected).abs() < 1e-12);
        assert!((h - 1.4903).abs() < 1e-4);
    }

    #[test]
    fn stats_of_m() {
        let s = matrix_stats(&matrix_m()).unwrap();
        assert_eq!(s.k_bar, 2.0);
        assert_eq!(s.k_tilde, 0.0);
        assert_eq!((s.rows, s.cols, s.len, s.alphabet_len), (5, 12, 60, 4));
        assert!((s.p0 - 32.0 / 60.0).abs() < 1e-15);
    }

    #[test]
    fn padding_counted_for_skipped_element() {
        // global order (0, 1, 2): 0 ×5, 1 ×2, 2 ×1; last row skips element 1
        let a = DenseMatrix::from_rows(&[[0.0, 1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 2.0, 0.0]]).unwrap();
        let s = matrix_stats(&a).unwrap();
        assert_eq!(s.k_bar, 1.0);
        assert!((s.k_tilde - 1.0 / 3.0).abs() < 1e-15);

        let z = matrix_stats(&DenseMatrix::zeros(3, 4)).unwrap();
        assert_eq!((z.k_bar, z.k_tilde, z.entropy, z.p0), (0.0, 0.0, 0.0, 1.0));
    }

    #[test]
    fn band_endpoints() {
        assert_eq!(feasible_band(0.5, 2).unwrap(), (1.0, 1.0));
        assert!((feasible_band(0.25, 16).unwrap().0 - 2.0).abs() < 1e-12);
        let expected = -0.55 * 0.55f64.log2() - 0.45 * (0.45f64 / 127.0).log2();
        let (_, h_max) = feasible_band(0.55, 128).unwrap();
        assert!((h_max - expected).abs() < 1e-12);
        assert!((h_max - 4.1377).abs() < 1e-4);
        assert!(feasible_band(0.0, 4).is_err());
        assert!(feasible_band(0.5, 1).is_err());
        assert!(matches!(feasible_band(0.1, 4), Err(Error::Infeasible(_))));
    }

    #[test]
    fn synthesis_endpoints() {
        let (_, h_max) = feasible_band(0.55, 128).unwrap();
        let a = synthesize_distribution(&DistributionSpec::new(h_max, 0.55, 128)).unwrap();
        assert_eq!(a.len(), 128);
        let slab = a.masses()[1];
        assert!(a.masses()[1..].iter().all(|&p| (p - slab).abs() < 1e-15));

        let b = synthesize_distribution(&DistributionSpec::new(2.0, 0.25, 128)).unwrap();
        assert_eq!(b.masses(), &[0.25; 4]);

        let c = synthesize_distribution(&DistributionSpec::new(4.0, 0.55, 128)).unwrap();
        assert!((c.entropy() - 4.0).abs() <= 1e-3);
        assert_eq!(c.elements()[0], 0.0);
        assert_eq!(c.masses()[0], 0.55);
    }

    #[test]
    fn synthesis_rejects_infeasible() {
        let err = synthesize_distribution(&DistributionSpec::new(6.0, 0.55, 128)).unwrap_err();
        assert!(matches!(err, Error::Infeasible(ref m) if m.contains("feasible band")));
    }

    #[test]
    fn sampling() {
        let seven = Alphabet::from_masses([(7.0, 1.0)]).unwrap();
        let a = sample_matrix(&seven, 3, 4, 9).unwrap();
        assert!(a.values().iter().all(|&v| v == 7.0));

        let alph = Alphabet::from_masses([(0.0, 0.9), (1.0, 0.05), (2.0, 0.05)]).unwrap();
        let x = sample_matrix(&alph, 100, 100, 42).unwrap();
        let y = sample_matrix(&alph, 100, 100, 42).unwrap();
        assert_eq!(x, y);
        let p0 = empirical_distribution(&x).unwrap().masses()[0];
        assert!((p0 - 0.9).abs() < 0.03, "p0 = {p0}");
    }

    #[test]
    fn k_bar_tracks_entropy() {
        let mut previous = f64::INFINITY;
        for (h, p0) in [(6.0, 0.05), (3.0, 0.5), (0.5, 0.9)] {
            let a = synthesize_distribution(&DistributionSpec::new(h, p0, 128)).unwrap();
            let m = sample_matrix(&a, 50, 200, 3).unwrap();
            let k_bar = matrix_stats(&m).unwrap().k_bar;
            assert!(k_bar < previous, "k_bar {k_bar} not decreasing at H = {h}");
            previous = k_bar;
        }
    }
}
