//! Seeded random streams.
//!
//! Every stochastic routine takes a caller-owned `Rng`. Independent
//! substreams are ChaCha streams keyed by `(master seed, stream index)`, so
//! adding trajectories never perturbs existing ones.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::scalar::Real;

pub type RandomStream = ChaCha20Rng;

/// Child stream `index` of `master`.
pub fn substream(master: u64, index: u64) -> RandomStream {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng
}

/// Draws a fresh seed from `rng` and returns `count` independent shard streams.
pub(crate) fn shard_streams<R: RngCore + ?Sized>(rng: &mut R, count: usize) -> Vec<RandomStream> {
    let seed = rng.next_u64();
    (0..count as u64).map(|k| substream(seed, k)).collect()
}

/// Inverse-CDF draw from a probability vector. Never returns an index with
/// zero mass; returns `None` only if the vector has no positive entry.
pub fn sample_index<T: Real, R: Rng + ?Sized>(probs: &[T], rng: &mut R) -> Option<usize> {
    let u: f64 = rng.gen();
    let mut cumulative = 0.0;
    let mut last_positive = None;
    for (i, p) in probs.iter().enumerate() {
        let p = p.as_f64();
        if p <= 0.0 {
            continue;
        }
        last_positive = Some(i);
        cumulative += p;
        if u < cumulative {
            return Some(i);
        }
    }
    last_positive
}
