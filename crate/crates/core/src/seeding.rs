//! Reproducible random streams for trajectory ensembles.
//!
//! Every trajectory draws from its own ChaCha stream derived from
//! `(master seed, stream index)` by a SplitMix64 chain, so ensembles are
//! bit-identical regardless of thread count or scheduling.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for stream `index` of the ensemble seeded by `master`.
pub fn derive_rng(master: u64, index: u64) -> ChaCha12Rng {
    let mut state = master ^ 0xA076_1D64_78BD_642F ^ index.wrapping_mul(0x8CB9_2BA7_2F3D_8DD7);
    let mut seed = [0u8; 32];
    for chunk in seed.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha12Rng::from_seed(seed)
}
