//! Named random sub-streams derived from a single run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

pub type StreamRng = ChaCha8Rng;

/// Stream names used by the pipeline.
pub mod stream {
    pub const INIT: &str = "init";
    pub const SHUFFLE: &str = "shuffle";
    pub const SYNTH: &str = "synth";
    pub const SPLIT: &str = "split";
    pub const SAMPLE: &str = "sample";
}

/// An independent generator for `(seed, name)`. Streams with different names
/// never share state, so adding a consumer does not shift any other stream.
pub fn substream(seed: u64, name: &str) -> StreamRng {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update(name.as_bytes());
    let digest: [u8; 32] = h.finalize().into();
    ChaCha8Rng::from_seed(digest)
}
