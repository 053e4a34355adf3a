//! Seeded random number streams.
//!
//! Every source of randomness in the pipeline is a ChaCha stream derived
//! from one master seed plus a fixed stream id, so separate stages never
//! share or perturb each other's draws and whole runs replay bit-for-bit.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

pub type SeedRng = ChaCha12Rng;

/// Stream ids for the pipeline stages. Adding a stage never shifts the
/// draws of an existing one.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const CORRUPT: u64 = 2;
    pub const UNPOOL: u64 = 3;
    pub const CLUSTER: u64 = 4;
    pub const SYNTH: u64 = 5;
    pub const GRADCHECK: u64 = 6;
}

/// Generator for `(seed, stream)`.
pub fn seeded(seed: u64, stream: u64) -> SeedRng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream.into());
    rng
}
