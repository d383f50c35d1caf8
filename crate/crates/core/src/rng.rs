//! Counter-based Gaussian draws keyed by `(seed, path, node)`.

use crate::partition::NodeIndex;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic generator for one `(seed, path, node, stream)` key.
pub fn keyed_rng(seed: u64, path: u64, idx: NodeIndex, stream: u64) -> ChaCha8Rng {
    let key = splitmix(splitmix(splitmix(seed) ^ path) ^ (idx.flat() as u64)) ^ splitmix(stream);
    let mut rng = ChaCha8Rng::seed_from_u64(key);
    rng.set_stream(stream);
    rng
}

/// Standard normal vector of length `d` for node `idx` of path `path`.
pub fn node_normal(seed: u64, path: u64, idx: NodeIndex, d: usize) -> DVector<f64> {
    let mut rng = keyed_rng(seed, path, idx, 0);
    DVector::from_fn(d, |_, _| rng.sample(StandardNormal))
}

/// Uniform draw in `[0, 1)` for node `idx`, independent of `node_normal`.
pub fn node_uniform(seed: u64, path: u64, idx: NodeIndex) -> f64 {
    keyed_rng(seed, path, idx, 1).gen::<f64>()
}
