//! Reproducible random streams.
//!
//! A [`RandomStream`] is a `(seed, stream_id)` pair backed by ChaCha8, whose
//! 64-bit stream selector gives independent keystreams for the same key.
//! Parallel work derives child streams with [`RandomStream::substream`], so
//! results never depend on how many workers ran or in which order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomStream {
    pub seed: u64,
    pub stream_id: u64,
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl RandomStream {
    pub const fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Child stream `k`. Children of distinct parents or distinct `k` map to
    /// distinct stream ids up to 64-bit hash collisions.
    pub fn substream(&self, k: u64) -> Self {
        let id = mix64(
            self.stream_id
                .rotate_left(23)
                .wrapping_add(mix64(k.wrapping_add(0x9e37_79b9_7f4a_7c15))),
        );
        Self {
            seed: self.seed,
            stream_id: id,
        }
    }

    pub fn rng(&self) -> StreamRng {
        let mut inner = ChaCha8Rng::seed_from_u64(self.seed);
        inner.set_stream(self.stream_id);
        StreamRng { inner }
    }
}

/// Generator handed out by a [`RandomStream`].
#[derive(Debug, Clone)]
pub struct StreamRng {
    inner: ChaCha8Rng,
}

impl StreamRng {
    #[inline]
    pub fn normal(&mut self) -> f64 {
        self.inner.sample(StandardNormal)
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    pub fn fill_normal(&mut self, out: &mut [f64]) {
        for v in out {
            *v = self.normal();
        }
    }
}
