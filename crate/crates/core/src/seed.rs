//! Seed derivation for reproducible parallel simulation.
//!
//! Every random stream is a ChaCha8 generator keyed by `(master seed, domain)`
//! and selected by a 64-bit stream index:
//!
//! * key bytes `0..8` = master seed (little endian),
//! * key bytes `8..16` = domain tag (little endian), remaining bytes zero,
//! * stream = index (frame number, generation number, ...).
//!
//! Worker identity never enters the derivation, so results do not depend on
//! how frames are scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent purposes a master seed is split into.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    /// One stream per simulated frame: symbols, fading gains, noise.
    Frame,
    /// Population initialisation in differential evolution.
    Population,
    /// Donor/crossover draws, one stream per generation.
    Trial,
    /// Per-generation evaluation seeds when common random numbers are resampled.
    Evaluation,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Frame => 0x6672_616d_6573_0001,
            Domain::Population => 0x706f_7075_6c61_0002,
            Domain::Trial => 0x7472_6961_6c73_0003,
            Domain::Evaluation => 0x6576_616c_7561_0004,
        }
    }
}

/// Returns the generator for stream `index` of `domain` under `master`.
pub fn stream_rng(master: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master.to_le_bytes());
    key[8..16].copy_from_slice(&domain.tag().to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
