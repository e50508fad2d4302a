//! Deterministic random streams.
//!
//! Every random decision draws from its own ChaCha stream, keyed by the
//! run seed plus a purpose tag and position (epoch, graph index, ...).
//! Keyed streams make results independent of visiting order, which is
//! what lets a resumed run replay exactly the draws of an uninterrupted
//! one.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags, one per kind of random decision.
pub mod tag {
    /// Parameter initialization.
    pub const INIT: u64 = 1;
    /// Per-epoch dataset shuffling.
    pub const SHUFFLE: u64 = 2;
    /// Per-graph corruption during pretraining.
    pub const CORRUPT: u64 = 3;
    /// Per-molecule draws during generation.
    pub const GENERATE: u64 = 4;
    /// Synthetic dataset construction.
    pub const SYNTH: u64 = 5;
}

fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds stream parts into a single derived seed. Useful when a
/// component wants to record the one number that reproduces its draws.
pub fn derive(seed: u64, parts: &[u64]) -> u64 {
    let mut h = mix(seed ^ 0x9e37_79b9_7f4a_7c15);
    for &p in parts {
        h = mix(h ^ p.wrapping_mul(0x2545_f491_4f6c_dd1d));
    }
    h
}

/// A ChaCha stream keyed by `seed` and a sequence of stream parts.
///
/// Different part sequences give statistically independent streams; the
/// same parts always give the same stream.
pub fn stream(seed: u64, parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(seed, parts))
}

/// `k` distinct indices sampled uniformly from `0..n`, via a partial
/// Fisher-Yates shuffle. Caps `k` at `n`.
pub fn sample_indices(rng: &mut impl Rng, n: usize, k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..n).collect();
    let k = k.min(n);
    for i in 0..k {
        let j = rng.gen_range(i..n);
        pool.swap(i, j);
    }
    pool.truncate(k);
    pool
}

/// Shuffles `0..n` with a full Fisher-Yates pass.
pub fn shuffled_indices(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    sample_indices(rng, n, n)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_key_same_stream() {
        let mut a = stream(7, &[tag::CORRUPT, 3, 9]);
        let mut b = stream(7, &[tag::CORRUPT, 3, 9]);
        let xs: Vec<u64> = (0..8).map(|_| a.gen()).collect();
        let ys: Vec<u64> = (0..8).map(|_| b.gen()).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn part_order_matters() {
        let mut a = stream(7, &[1, 2]);
        let mut b = stream(7, &[2, 1]);
        assert_ne!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn tags_separate_streams() {
        let mut a = stream(7, &[tag::SHUFFLE, 1]);
        let mut b = stream(7, &[tag::CORRUPT, 1]);
        assert_ne!(a.gen::<u64>(), b.gen::<u64>());
    }

    #[test]
    fn sample_indices_are_distinct_and_in_range() {
        let mut rng = stream(1, &[tag::SYNTH]);
        for _ in 0..100 {
            let picks = sample_indices(&mut rng, 10, 4);
            assert_eq!(picks.len(), 4);
            let mut sorted = picks.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), 4, "duplicates in {picks:?}");
            assert!(picks.iter().all(|&i| i < 10));
        }
    }

    #[test]
    fn sample_indices_caps_at_population() {
        let mut rng = stream(1, &[tag::SYNTH]);
        let picks = sample_indices(&mut rng, 3, 10);
        let mut sorted = picks.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, vec![0, 1, 2]);
    }

    #[test]
    fn sample_is_roughly_uniform() {
        // Each index of 0..5 should appear in a 2-sample about 2/5 of the time.
        let mut rng = stream(42, &[tag::SYNTH, 0]);
        let mut counts = [0usize; 5];
        let trials = 20_000;
        for _ in 0..trials {
            for i in sample_indices(&mut rng, 5, 2) {
                counts[i] += 1;
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            let freq = c as f64 / trials as f64;
            assert!((freq - 0.4).abs() < 0.02, "index {i} frequency {freq}");
        }
    }
}
