//! Addressable Gaussian noise streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream addressed by
//! `(master seed, purpose, time index, member index)`. The key is derived
//! from the master seed and purpose; the 64-bit ChaCha stream id packs the
//! time and member indices. Draws therefore never depend on evaluation order
//! or worker count.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// What a stream is used for. Distinct purposes never share a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    SignalInit = 1,
    SystemNoise = 2,
    ObservationNoise = 3,
    EnsembleInit = 4,
    ForecastNoise = 5,
    ObservationPerturbation = 6,
    Concentration = 7,
    Shifts = 8,
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent child seed from a parent seed and a label.
pub fn derive_seed(parent: u64, label: u64) -> u64 {
    mix64(mix64(parent) ^ mix64(label.wrapping_mul(0xd6e8_feb8_6659_fd93)))
}

/// A family of streams sharing one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Streams {
    master: u64,
}

impl Streams {
    pub fn new(master: u64) -> Self {
        Self { master }
    }

    pub fn master(&self) -> u64 {
        self.master
    }

    pub fn stream(&self, purpose: Purpose, time: u64, member: u64) -> NoiseStream {
        assert!(time < (1 << 32) && member < (1 << 32), "stream address overflow");
        let mut key = [0u8; 32];
        let mut state = derive_seed(self.master, purpose as u64);
        for chunk in key.chunks_mut(8) {
            state = mix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream((time << 32) | member);
        NoiseStream { rng }
    }
}

/// One addressed stream.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
}

impl NoiseStream {
    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn normal_vector(&mut self, n: usize) -> DVector<f64> {
        DVector::from_fn(n, |_, _| self.normal())
    }

    /// An `n x k` matrix of standard normals, filled column by column.
    pub fn normal_matrix(&mut self, n: usize, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, k, |_, _| self.normal())
    }

    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }
}

impl rand::RngCore for NoiseStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
