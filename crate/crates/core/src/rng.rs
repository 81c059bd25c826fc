//! Deterministic random substreams.
//!
//! Every consumer derives its generator from `(seed, stream)`; no ambient
//! state is involved, so results do not depend on thread scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream-id namespaces, kept disjoint so substreams never collide.
pub mod streams {
    pub const ALICE: u64 = 0x0100_0000_0000;
    pub const DETECTION: u64 = 0x0200_0000_0000;
    pub const DRIFT: u64 = 0x0300_0000_0000;
    pub const WINDOW: u64 = 0x0400_0000_0000;
}

pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
