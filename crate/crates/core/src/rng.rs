//! Counter-based random streams.
//!
//! Output `i` of the stream with key `k` is `mix(k ^ mix(i))`, where `mix` is the
//! SplitMix64 finalizer. Streams are addressed by hierarchical keys
//! (master seed, replica, displacement class, ...), so any stream can be
//! regenerated in isolation and results never depend on thread scheduling.

use rand_core::{impls, Error as RandError, RngCore};

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer; a bijection on `u64`.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// A node in the key hierarchy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct StreamKey(u64);

impl StreamKey {
    pub fn root(seed: u64) -> Self {
        StreamKey(mix64(seed ^ 0x6c72_7065_7263_0001))
    }

    #[inline]
    pub fn child(self, tag: u64) -> Self {
        StreamKey(mix64(self.0 ^ mix64(tag.wrapping_add(GOLDEN))))
    }

    #[inline]
    pub fn stream(self) -> StreamRng {
        StreamRng {
            key: self.0,
            counter: 0,
        }
    }

    pub fn raw(self) -> u64 {
        self.0
    }
}

/// Stateless-in-spirit generator: the state is just `(key, counter)`.
#[derive(Clone, Debug)]
pub struct StreamRng {
    key: u64,
    counter: u64,
}

impl StreamRng {
    /// Output at an arbitrary position without advancing.
    #[inline]
    pub fn at(&self, counter: u64) -> u64 {
        mix64(self.key ^ mix64(counter.wrapping_mul(GOLDEN)))
    }

    /// Uniform on `(0, 1]`, 53 bits.
    #[inline]
    pub fn open_unit(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Standard exponential variate.
    #[inline]
    pub fn exp1(&mut self) -> f64 {
        -self.open_unit().ln()
    }

    /// Uniform integer in `[0, bound)` by Lemire's widening multiply with rejection.
    #[inline]
    pub fn below(&mut self, bound: u64) -> u64 {
        debug_assert!(bound > 0);
        let threshold = bound.wrapping_neg() % bound;
        loop {
            let m = (self.next_u64() as u128) * (bound as u128);
            if (m as u64) >= threshold {
                return (m >> 64) as u64;
            }
        }
    }
}

impl RngCore for StreamRng {
    #[inline]
    fn next_u32(&mut self) -> u32 {
        (self.next_u64() >> 32) as u32
    }

    #[inline]
    fn next_u64(&mut self) -> u64 {
        let out = self.at(self.counter);
        self.counter = self.counter.wrapping_add(1);
        out
    }

    fn fill_bytes(&mut self, dest: &mut [u8]) {
        impls::fill_bytes_via_next(self, dest)
    }

    fn try_fill_bytes(&mut self, dest: &mut [u8]) -> Result<(), RandError> {
        self.fill_bytes(dest);
        Ok(())
    }
}
