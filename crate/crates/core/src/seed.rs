//! Deterministic seed derivation.
//!
//! Every random stream in the benchmark is keyed by a master seed plus a
//! small list of integer labels (purpose tag, replicate, object, start view,
//! ...). Streams are therefore independent of execution order: adding a
//! strategy or reordering work never perturbs the draws seen by an existing
//! episode.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// Stream label for synthetic world generation.
pub const STREAM_WORLD: u64 = 1;
/// Stream label for weight learning.
pub const STREAM_WEIGHTS: u64 = 2;
/// Stream label for quality predictor fitting.
pub const STREAM_QUALITY: u64 = 3;
/// Stream label for benchmark episodes.
pub const STREAM_EPISODE: u64 = 4;

/// splitmix64 finaliser. Bijective on u64, good avalanche behaviour.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `labels` into `master` one at a time, mixing after each fold.
pub fn derive_seed(master: u64, labels: &[u64]) -> u64 {
    let mut acc = mix(master);
    for &label in labels {
        acc = mix(acc ^ mix(label));
    }
    acc
}

/// A ChaCha stream keyed by `master` and `labels`.
pub fn stream(master: u64, labels: &[u64]) -> ChaCha12Rng {
    ChaCha12Rng::seed_from_u64(derive_seed(master, labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn derivation_is_stable() {
        assert_eq!(derive_seed(7, &[1, 2, 3]), derive_seed(7, &[1, 2, 3]));
    }

    #[test]
    fn label_order_matters() {
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
    }

    #[test]
    fn labels_are_not_prefix_ambiguous() {
        // (a, b) and (a ^ mix-of-b-ish, ...) collisions aside, the common
        // hazard is [x] vs [x, 0]; make sure the fold distinguishes them.
        assert_ne!(derive_seed(7, &[5]), derive_seed(7, &[5, 0]));
        assert_ne!(derive_seed(7, &[]), derive_seed(7, &[0]));
    }

    #[test]
    fn streams_with_same_key_agree() {
        let mut a = stream(42, &[STREAM_EPISODE, 3, 9]);
        let mut b = stream(42, &[STREAM_EPISODE, 3, 9]);
        for _ in 0..16 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn streams_with_different_key_diverge() {
        let mut a = stream(42, &[STREAM_EPISODE, 3, 9]);
        let mut b = stream(42, &[STREAM_EPISODE, 3, 10]);
        let same = (0..16).filter(|_| a.next_u64() == b.next_u64()).count();
        assert!(same < 2);
    }
}
