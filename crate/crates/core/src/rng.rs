//! Seeded, reproducible random streams.
//!
//! Every unit of parallel work (an MCMC chain, a predictive replicate, an
//! oracle batch) draws from its own ChaCha stream. The key is derived from the
//! master seed and a domain tag, and the stream id is the unit's index, so
//! results never depend on thread count or scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Independent purposes that draw from a master seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Domain {
    Chain,
    Simulation,
    DesignPermutation,
    TruthOracle,
    Predictive,
    Test,
}

impl Domain {
    fn tag(self) -> u64 {
        match self {
            Domain::Chain => 0x6368_6169_6e00_0001,
            Domain::Simulation => 0x7369_6d75_6c00_0002,
            Domain::DesignPermutation => 0x6465_7369_676e_0003,
            Domain::TruthOracle => 0x7472_7574_6800_0004,
            Domain::Predictive => 0x7072_6564_6963_0005,
            Domain::Test => 0x7465_7374_0000_0006,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Stream `index` of `domain` under `master`.
pub fn stream(master: u64, domain: Domain, index: u64) -> StreamRng {
    let mut key = [0u8; 32];
    let mut state = master ^ domain.tag();
    for chunk in key.chunks_exact_mut(8) {
        state = splitmix64(state);
        chunk.copy_from_slice(&state.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}
