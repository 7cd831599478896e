//! Counter-addressed random streams.
//!
//! Every observation of a dataset owns a fixed window of the ChaCha8 keystream, so
//! observation `i` is a pure function of `(seed, i)`. Generating a sample front to back,
//! back to front, or split across threads yields the same numbers.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// 32-bit keystream words reserved for each observation (four `u64` draws).
const WORDS_PER_OBSERVATION: u128 = 8;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(GOLDEN_GAMMA);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a child seed from a master seed and a path of indices, e.g.
/// `derive_seed(master, &[grid_index, rep_index])`.
///
/// Distinct paths of the same length give unrelated seeds; the depth is folded in so
/// that `[a]` and `[a, 0]` differ too.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    let mut state = mix64(master);
    for (depth, &step) in path.iter().enumerate() {
        let salted = step ^ (depth as u64 + 1).wrapping_mul(GOLDEN_GAMMA);
        state = mix64(state ^ mix64(salted));
    }
    state
}

/// Uniform on (0, 1], safe to feed to `ln`.
fn open_unit(bits: u64) -> f64 {
    ((bits >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform on [0, 1).
fn half_open_unit(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn box_muller(a: u64, b: u64) -> (f64, f64) {
    let radius = (-2.0 * open_unit(a).ln()).sqrt();
    let angle = std::f64::consts::TAU * half_open_unit(b);
    (radius * angle.cos(), radius * angle.sin())
}

/// Stream of independent standard-normal triples, one triple per observation index.
pub struct NormalStream {
    rng: ChaCha8Rng,
}

impl NormalStream {
    pub fn new(seed: u64) -> Self {
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Positions the stream at the start of observation `index`.
    pub fn seek(&mut self, index: u64) {
        self.rng.set_word_pos(index as u128 * WORDS_PER_OBSERVATION);
    }

    /// Three independent N(0, 1) draws for the current observation; advances to the next.
    pub fn next_triple(&mut self) -> [f64; 3] {
        let (a, b) = box_muller(self.rng.next_u64(), self.rng.next_u64());
        let (c, _) = box_muller(self.rng.next_u64(), self.rng.next_u64());
        [a, b, c]
    }

    /// The triple for observation `index`, independent of the current position.
    pub fn triple_at(&mut self, index: u64) -> [f64; 3] {
        self.seek(index);
        self.next_triple()
    }
}
