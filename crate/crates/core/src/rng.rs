//! Seeded pseudorandom streams.
//!
//! Every random decision in a run is drawn from a [`SeededRng`]. The
//! generator is PCG-XSL-RR 128/64 (`pcg64`), initialised from a 64-bit seed
//! by expanding it with SplitMix64 into the 128-bit state and stream
//! constants. The draw helpers below (`unit`, `below`, `range_f64`, ...)
//! are implemented here rather than through a distribution library so the
//! mapping from raw 64-bit outputs to values is pinned and documented:
//!
//! * `unit()`      = `(next_u64() >> 11) * 2^-53`, in `[0, 1)`.
//! * `below(n)`    = Lemire's multiply-shift with rejection, one or more
//!                   `next_u64()` calls.
//! * `range_f64(a, b)` = `a + (b - a) * unit()`.
//!
//! Sub-streams are derived with [`derive_seed`], a SplitMix64-based mixer of
//! `(parent, stream tag, index)`, so adding replications or candidates never
//! perturbs earlier draws.

use rand_core::Rng;
use rand_pcg::Pcg64;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives the seed of sub-stream `index` under `tag` of `parent`.
pub fn derive_seed(parent: u64, tag: StreamTag, index: u64) -> u64 {
    let a = splitmix64(parent ^ (tag as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93));
    splitmix64(a ^ splitmix64(index.wrapping_add(0xA076_1D64_78BD_642F)))
}

/// Named sub-streams. The discriminants are part of the replay contract.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum StreamTag {
    CoverageCandidates = 1,
    RandomCandidates = 2,
    InternalSeed = 3,
    Replication = 4,
    RandomReplication = 5,
    Navigation = 6,
    Traffic = 7,
    SweepSet = 8,
}

/// Deterministic generator seeded by a 64-bit integer.
#[derive(Debug, Clone)]
pub struct SeededRng {
    inner: Pcg64,
    draws: u64,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        let s0 = splitmix64(seed);
        let s1 = splitmix64(s0);
        let s2 = splitmix64(s1);
        let s3 = splitmix64(s2);
        let state = ((s0 as u128) << 64) | s1 as u128;
        let stream = ((s2 as u128) << 64) | s3 as u128;
        Self {
            inner: Pcg64::new(state, stream),
            draws: 0,
        }
    }

    /// Sub-stream of this seed's family, see [`derive_seed`].
    pub fn substream(seed: u64, tag: StreamTag, index: u64) -> Self {
        Self::new(derive_seed(seed, tag, index))
    }

    /// Number of raw 64-bit outputs consumed so far.
    pub fn draws(&self) -> u64 {
        self.draws
    }

    pub fn next_u64(&mut self) -> u64 {
        self.draws += 1;
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` with 53 bits of precision.
    pub fn unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform integer in `0..n`. Panics if `n == 0`.
    pub fn below(&mut self, n: u64) -> u64 {
        assert!(n > 0, "below(0)");
        // Lemire's nearly-divisionless method.
        let mut m = (self.next_u64() as u128) * (n as u128);
        let mut low = m as u64;
        if low < n {
            let threshold = n.wrapping_neg() % n;
            while low < threshold {
                m = (self.next_u64() as u128) * (n as u128);
                low = m as u64;
            }
        }
        (m >> 64) as u64
    }

    /// Uniform integer in the closed interval `[lo, hi]`.
    pub fn range_inclusive(&mut self, lo: u32, hi: u32) -> u32 {
        debug_assert!(lo <= hi);
        lo + self.below((hi - lo) as u64 + 1) as u32
    }

    pub fn range_f64(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.unit()
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.unit() < p
    }

    /// Index drawn with probability proportional to `weights`.
    /// Returns `None` when the weights are empty or sum to zero.
    pub fn weighted_index(&mut self, weights: &[f64]) -> Option<usize> {
        let total: f64 = weights.iter().sum();
        if weights.is_empty() || !(total > 0.0) {
            return None;
        }
        let mut x = self.unit() * total;
        for (i, w) in weights.iter().enumerate() {
            if x < *w {
                return Some(i);
            }
            x -= w;
        }
        // Rounding fell off the end; take the last positive weight.
        weights.iter().rposition(|w| *w > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_seed_identical_sequence() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..1000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
        assert_eq!(a.draws(), 1000);
    }

    #[test]
    fn different_seeds_differ() {
        let mut a = SeededRng::new(1);
        let mut b = SeededRng::new(2);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn pinned_reference_values() {
        // Frozen outputs: a change here breaks replay of stored campaigns.
        let mut r = SeededRng::new(0);
        let first: Vec<u64> = (0..3).map(|_| r.next_u64()).collect();
        let mut again = SeededRng::new(0);
        assert_eq!(first, (0..3).map(|_| again.next_u64()).collect::<Vec<_>>());
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
    }

    #[test]
    fn below_is_in_range_and_roughly_uniform() {
        let mut r = SeededRng::new(7);
        let mut counts = [0u32; 3];
        for _ in 0..30_000 {
            counts[r.below(3) as usize] += 1;
        }
        for c in counts {
            assert!((c as f64 / 30_000.0 - 1.0 / 3.0).abs() < 0.02);
        }
    }

    #[test]
    fn unit_in_half_open_interval() {
        let mut r = SeededRng::new(9);
        for _ in 0..10_000 {
            let u = r.unit();
            assert!((0.0..1.0).contains(&u));
        }
    }

    #[test]
    fn weighted_index_skips_zero_weights() {
        let mut r = SeededRng::new(3);
        for _ in 0..1000 {
            assert_eq!(r.weighted_index(&[0.0, 2.0, 0.0]), Some(1));
        }
        assert_eq!(r.weighted_index(&[]), None);
        assert_eq!(r.weighted_index(&[0.0]), None);
    }

    #[test]
    fn substreams_are_independent_of_sibling_count() {
        let a = derive_seed(99, StreamTag::CoverageCandidates, 5);
        let b = derive_seed(99, StreamTag::CoverageCandidates, 5);
        assert_eq!(a, b);
        assert_ne!(a, derive_seed(99, StreamTag::RandomCandidates, 5));
        assert_ne!(a, derive_seed(99, StreamTag::CoverageCandidates, 6));
    }
}
