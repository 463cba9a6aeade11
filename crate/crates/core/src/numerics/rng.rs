use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::linalg::CholFactor;

/// A reproducible random stream addressed by a root seed and a lineage path.
///
/// Streams are never shared: child streams are derived with [`RngStream::fork`],
/// and each `(seed, path)` pair maps to its own ChaCha8 key.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub path: Vec<u64>,
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        RngStream {
            seed,
            path: Vec::new(),
        }
    }

    pub fn fork(&self, index: u64) -> Self {
        let mut path = self.path.clone();
        path.push(index);
        RngStream {
            seed: self.seed,
            path,
        }
    }

    pub fn fork_path(&self, indices: &[u64]) -> Self {
        let mut path = self.path.clone();
        path.extend_from_slice(indices);
        RngStream {
            seed: self.seed,
            path,
        }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn generator(&self) -> ChaCha8Rng {
        let mut state = self.seed;
        let mut acc = splitmix64(&mut state);
        for (depth, &p) in self.path.iter().enumerate() {
            // fold (depth, index) so that [1, 0] and [0, 1] differ
            state ^= p.wrapping_add((depth as u64 + 1).wrapping_mul(0xD6E8_FEB8_6659_FD93));
            acc ^= splitmix64(&mut state).rotate_left(depth as u32 % 64);
        }
        let mut key = [0u8; 32];
        let mut s = acc ^ (self.path.len() as u64);
        for chunk in key.chunks_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut s).to_le_bytes());
        }
        ChaCha8Rng::from_seed(key)
    }
}

/// One draw of `L z` with `z` standard normal.
pub fn sample_mvn<R: Rng + ?Sized>(factor: &CholFactor, rng: &mut R) -> DVector<f64> {
    let d = factor.dim();
    let z = DVector::from_iterator(d, (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)));
    factor.l() * z
}

/// `count` draws from `N(0, Σ)`, consuming the stream from its start.
pub fn sample_mvn_batch(factor: &CholFactor, stream: &RngStream, count: usize) -> Vec<DVector<f64>> {
    let mut rng = stream.generator();
    (0..count).map(|_| sample_mvn(factor, &mut rng)).collect()
}
