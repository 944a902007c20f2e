//! Dataset plumbing: image I/O, the synthetic ISP simulator, pair
//! management, deterministic splits, and patch sampling.

mod io;
mod isp;
mod pairs;
mod patches;
mod scenes;

pub use io::{load_image, save_image, save_png8};
pub use isp::{simulate_isp, IspParams};
pub use pairs::{split_pairs, ImagePair, PairEntry, PairSet, Split};
pub use patches::{extract_patches, sample_patch};
pub use scenes::{generate_dataset, synth_pair, synth_scene_xyz};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Splitmix-style stream seeding so per-pair randomness stays independent of
/// scheduling and pair order.
pub(crate) fn stream_seed(parts: &[u64]) -> u64 {
    let mut z = 0x9E37_79B9_7F4A_7C15u64;
    for &p in parts {
        z ^= p.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_add(z << 6).wrapping_add(z >> 2);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
    }
    z
}

pub(crate) fn stream_rng(parts: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(stream_seed(parts))
}
