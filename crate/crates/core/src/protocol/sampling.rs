//! Seeded draws for batches and phase-2 splits.
//!
//! Each draw gets its own ChaCha stream so a batch depends only on the
//! session seed, the round index and the pool it is drawn from.

use rand::seq::{index, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const PARTITION_STREAM: u64 = u64::MAX;

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform sample without replacement of `min(amount, len)` positions in
/// `0..len`, returned in ascending order.
pub fn sample_positions(seed: u64, round: u32, len: usize, amount: usize) -> Vec<usize> {
    let amount = amount.min(len);
    let mut picked = index::sample(&mut rng(seed, round as u64), len, amount).into_vec();
    picked.sort_unstable();
    picked
}

/// Seeded shuffle used to split the remaining pool between reviewers.
pub fn shuffle_for_partition<T>(seed: u64, items: &mut [T]) {
    items.shuffle(&mut rng(seed, PARTITION_STREAM));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_is_distinct_and_bounded() {
        let picked = sample_positions(7, 1, 152, 15);
        assert_eq!(picked.len(), 15);
        assert!(picked.windows(2).all(|w| w[0] < w[1]));
        assert!(picked.iter().all(|&p| p < 152));
    }

    #[test]
    fn sample_truncates_small_pools() {
        assert_eq!(sample_positions(7, 1, 7, 15), (0..7).collect::<Vec<_>>());
        assert!(sample_positions(7, 1, 0, 15).is_empty());
    }

    #[test]
    fn sample_is_reproducible_and_round_dependent() {
        assert_eq!(sample_positions(42, 3, 100, 15), sample_positions(42, 3, 100, 15));
        assert_ne!(sample_positions(42, 3, 100, 15), sample_positions(42, 4, 100, 15));
        assert_ne!(sample_positions(42, 3, 100, 15), sample_positions(43, 3, 100, 15));
    }

    #[test]
    fn every_position_is_reachable() {
        // 400 draws of 15 from 30: each position should show up.
        let mut seen = [false; 30];
        for seed in 0..400 {
            for p in sample_positions(seed, 1, 30, 15) {
                seen[p] = true;
            }
        }
        assert!(seen.iter().all(|&s| s));
    }
}
