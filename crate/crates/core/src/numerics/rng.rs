//! Splittable, counter-based random streams.
//!
//! A stream is addressed by `(seed, purpose, round, client)`. The seed keys a
//! ChaCha8 generator and the remaining three coordinates are packed into its
//! 64-bit stream id, so every stream is an independent keystream that can be
//! opened from any thread in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{Params, Scalar};

pub type StreamRng = ChaCha8Rng;

const ROUND_BITS: u32 = 28;
const CLIENT_BITS: u32 = 28;

/// What a stream is used for. Distinct purposes never share draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Purpose {
    Init = 1,
    ClientSampling = 2,
    Batch = 3,
    Noise = 4,
    Synthesis = 5,
    Partition = 6,
    Probe = 7,
    EvalSample = 8,
    Test = 255,
}

/// Factory for the streams derived from one top-level seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Streams {
    seed: u64,
}

impl Streams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, purpose: Purpose, round: u64, client: u64) -> StreamRng {
        assert!(round < (1 << ROUND_BITS), "round index {round} exceeds stream addressing");
        assert!(client < (1 << CLIENT_BITS), "client index {client} exceeds stream addressing");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let id = ((purpose as u64) << (ROUND_BITS + CLIENT_BITS)) | (round << CLIENT_BITS) | client;
        rng.set_stream(id);
        rng
    }
}

/// Vector of independent `N(0, std^2)` draws.
pub fn gaussian_vector<T: Scalar, R: rand::Rng + ?Sized>(dim: usize, std: T, rng: &mut R) -> Params<T> {
    let mut v = Vec::with_capacity(dim);
    for _ in 0..dim {
        let z: f64 = StandardNormal.sample(rng);
        v.push(T::lit(z) * std);
    }
    Params::from_vec(v)
}
