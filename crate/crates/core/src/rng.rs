//! Seeded randomness.
//!
//! Every stochastic step in the crate draws from a [`ChaCha8Rng`] built from a
//! `u64` seed. Child seeds are derived with [`derive_seed`], so a trial,
//! permutation or minibatch order is a pure function of the master seed and
//! its index, independent of scheduling order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use rand_chacha::ChaCha8Rng as StdRng;

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for substream `stream` of `master`.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    mix(mix(master) ^ stream.wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

/// Named substreams so that different consumers of one trial seed never collide.
#[derive(Clone, Copy, Debug)]
#[repr(u64)]
pub enum Stream {
    SampleP = 1,
    SampleQ = 2,
    Split = 3,
    Unlabeled = 4,
    Encoder = 5,
    Decoder = 6,
    Head = 7,
    AutoencoderBatches = 8,
    ClassifierBatches = 9,
    Permutation = 10,
}

pub fn substream(seed: u64, stream: Stream) -> u64 {
    derive_seed(seed, stream as u64)
}

/// Two independent standard normal draws by the Box-Muller transform.
pub fn normal_pair<R: Rng + ?Sized>(rng: &mut R) -> (f64, f64) {
    // u1 in (0, 1] keeps the log finite.
    let u1 = 1.0 - rng.random::<f64>();
    let u2 = rng.random::<f64>();
    let radius = (-2.0 * u1.ln()).sqrt();
    let theta = std::f64::consts::TAU * u2;
    (radius * theta.cos(), radius * theta.sin())
}

/// Fills `out` with i.i.d. standard normal draws.
pub fn fill_standard_normal<R: Rng + ?Sized>(rng: &mut R, out: &mut [f64]) {
    let mut chunks = out.chunks_exact_mut(2);
    for pair in &mut chunks {
        let (a, b) = normal_pair(rng);
        pair[0] = a;
        pair[1] = b;
    }
    if let [last] = chunks.into_remainder() {
        *last = normal_pair(rng).0;
    }
}
