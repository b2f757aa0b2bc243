//! Reproducible random streams.
//!
//! Every consumer (step sampler, batch sampler, noise generator, ...) draws
//! from its own ChaCha8 stream derived from a root `(seed, stream_id)` pair.
//! ChaCha8 output is value-stable across platforms and `rand_chacha`
//! versions, so a given `(seed, stream_id, draw index)` always yields the
//! same number.

use alloc::string::ToString;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::error::{Error, Result};

/// Version tag of the stream derivation scheme. Bump if `split`/`fork` change.
pub const RNG_SCHEME_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Consumer {
    Step,
    Batch,
    Noise,
    Init,
    Power,
    Midpoint,
    Data,
}

impl Consumer {
    pub const ALL: [Consumer; 7] = [
        Consumer::Step,
        Consumer::Batch,
        Consumer::Noise,
        Consumer::Init,
        Consumer::Power,
        Consumer::Midpoint,
        Consumer::Data,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Consumer::Step => "step",
            Consumer::Batch => "batch",
            Consumer::Noise => "noise",
            Consumer::Init => "init",
            Consumer::Power => "power",
            Consumer::Midpoint => "midpoint",
            Consumer::Data => "data",
        }
    }

    pub fn from_name(name: &str) -> Option<Consumer> {
        Self::ALL.into_iter().find(|c| c.name() == name)
    }

    fn code(self) -> u64 {
        match self {
            Consumer::Step => 1,
            Consumer::Batch => 2,
            Consumer::Noise => 3,
            Consumer::Init => 4,
            Consumer::Power => 5,
            Consumer::Midpoint => 6,
            Consumer::Data => 7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngState {
    pub seed: u64,
    pub stream_id: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngState {
    pub fn new(seed: u64) -> Self {
        RngState { seed, stream_id: 0 }
    }

    pub fn split(self, consumer: Consumer) -> RngState {
        RngState {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ consumer.code().rotate_left(40)),
        }
    }

    /// Keyed child stream, e.g. one per step counter.
    pub fn fork(self, key: u64) -> RngState {
        RngState { seed: splitmix64(self.seed ^ splitmix64(key)), stream_id: self.stream_id }
    }

    pub fn rng(self) -> StreamRng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(self.stream_id);
        StreamRng { origin: self, inner }
    }
}

/// Derive the stream for a named consumer.
pub fn split_rng(root: RngState, consumer: &str) -> Result<RngState> {
    Consumer::from_name(consumer)
        .map(|c| root.split(c))
        .ok_or_else(|| Error::UnknownConsumer(consumer.to_string()))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamRng {
    origin: RngState,
    inner: ChaCha8Rng,
}

/// Exact position of a stream: enough to rebuild it bit-for-bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngSnapshot {
    pub origin: RngState,
    pub word_pos: u128,
}

impl StreamRng {
    pub fn origin(&self) -> RngState {
        self.origin
    }

    pub fn snapshot(&self) -> RngSnapshot {
        RngSnapshot { origin: self.origin, word_pos: self.inner.get_word_pos() }
    }

    pub fn restore(snapshot: RngSnapshot) -> StreamRng {
        let mut rng = snapshot.origin.rng();
        rng.inner.set_word_pos(snapshot.word_pos);
        rng
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform on `[0, 1)` with 53 random bits.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `(0, 1]`; never returns zero, so `ln` is always finite.
    pub fn uniform_pos(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard normal via Box–Muller (one output per pair of uniforms).
    pub fn normal(&mut self) -> f64 {
        let u1 = self.uniform_pos();
        let u2 = self.uniform();
        libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(core::f64::consts::TAU * u2)
    }

    /// Uniform index in `0..n` (rejection sampling, no modulo bias).
    pub fn index(&mut self, n: usize) -> usize {
        assert!(n > 0, "index range must be nonempty");
        let n = n as u64;
        let zone = u64::MAX - (u64::MAX % n);
        loop {
            let v = self.next_u64();
            if v < zone {
                return (v % n) as usize;
            }
        }
    }

    pub fn sign(&mut self) -> f64 {
        if self.next_u64() >> 63 == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    fn draws(state: RngState, n: usize) -> Vec<u64> {
        let mut rng = state.rng();
        (0..n).map(|_| rng.next_u64()).collect()
    }

    #[test]
    fn same_consumer_is_deterministic() {
        let a = split_rng(RngState::new(7), "step").unwrap();
        let b = split_rng(RngState::new(7), "step").unwrap();
        assert_eq!(draws(a, 16), draws(b, 16));
    }

    #[test]
    fn consumers_and_seeds_differ() {
        let step = split_rng(RngState::new(7), "step").unwrap();
        let batch = split_rng(RngState::new(7), "batch").unwrap();
        let step8 = split_rng(RngState::new(8), "step").unwrap();
        assert_ne!(draws(step, 1), draws(batch, 1));
        assert_ne!(draws(step, 1), draws(step8, 1));
    }

    #[test]
    fn unknown_consumer() {
        assert_eq!(
            split_rng(RngState::new(1), "bogus"),
            Err(Error::UnknownConsumer("bogus".into()))
        );
    }

    #[test]
    fn pinned_stream_values() {
        // Frozen output of the v1 scheme; a change here breaks reproducibility.
        let mut rng = split_rng(RngState::new(7), "step").unwrap().rng();
        let first = rng.next_u64();
        let mut again = RngState::new(7).split(Consumer::Step).rng();
        assert_eq!(first, again.next_u64());
        assert_eq!(RngState::new(7).split(Consumer::Step).stream_id, PINNED_STEP_STREAM);
        assert_eq!(first, PINNED_FIRST_DRAW);
    }

    const PINNED_STEP_STREAM: u64 = 2296115805719413641;
    const PINNED_FIRST_DRAW: u64 = 4590241596171255213;

    #[test]
    fn snapshot_restore() {
        let mut rng = RngState::new(3).split(Consumer::Batch).rng();
        for _ in 0..5 {
            rng.next_u64();
        }
        let snap = rng.snapshot();
        let tail: Vec<u64> = (0..4).map(|_| rng.next_u64()).collect();
        let mut back = StreamRng::restore(snap);
        let again: Vec<u64> = (0..4).map(|_| back.next_u64()).collect();
        assert_eq!(tail, again);
    }

    #[test]
    fn uniform_ranges() {
        let mut rng = RngState::new(11).rng();
        for _ in 0..10_000 {
            let u = rng.uniform_pos();
            assert!(u > 0.0 && u <= 1.0);
            let v = rng.uniform();
            assert!((0.0..1.0).contains(&v));
            assert!(rng.index(3) < 3);
        }
    }
}
