//! Seeded random streams.
//!
//! All randomness comes from ChaCha20, a counter-based generator. A seed picks
//! the key; independent workers draw from distinct streams of the same key, so
//! trial `i` of a campaign seeded with `s` always sees `split(s, i)` no matter
//! how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub type StreamRng = ChaCha20Rng;

pub fn seeded(seed: u64) -> StreamRng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn split(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
