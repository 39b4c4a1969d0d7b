//! Counter-based random streams keyed by (seed, index, purpose).
//!
//! Stream `(s, i, p)` is the same no matter which worker draws it or in what
//! order.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    Pilots,
    Channel,
    PilotNoise,
    DataSymbols,
    DataNoise,
    BoundChannel,
    Test,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Pilots => 0x5049_4c4f,
            Purpose::Channel => 0x4348_414e,
            Purpose::PilotNoise => 0x504e_4f49,
            Purpose::DataSymbols => 0x4453_594d,
            Purpose::DataNoise => 0x444e_4f49,
            Purpose::BoundChannel => 0x4243_484e,
            Purpose::Test => 0x5445_5354,
        }
    }
}

pub type StreamRng = ChaCha12Rng;

pub fn stream(seed: u64, index: u64, purpose: Purpose) -> StreamRng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&purpose.tag().to_le_bytes());
    let mut rng = ChaCha12Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
