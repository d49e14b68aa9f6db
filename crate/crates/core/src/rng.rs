//! Deterministic RNG substreams.
//!
//! Every random draw in the crate comes from a `ChaCha8Rng` whose seed is
//! derived from `(global seed, volume, slice, epoch, stream)`. Streams are
//! disjoint so that, for example, changing a transform weight never moves
//! the mask draws of the same slice.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// SplitMix64 finalizer.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Order-sensitive hash of a sequence of words.
pub fn hash_words(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &w| mix64(acc ^ mix64(w)))
}

/// Named substreams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    /// Which transforms fire.
    TransformSampling,
    /// Parameter values of the fired transforms.
    TransformParams,
    /// Per-slice training masks.
    Mask,
    /// Per-volume fixed validation masks.
    ValidationMask,
    /// Measurement noise in the simulator.
    Noise,
    /// Phantom jitter in the simulator.
    Phantom,
    /// Sensitivity map geometry in the simulator.
    Sensitivities,
}

impl Stream {
    fn tag(self) -> u64 {
        match self {
            Stream::TransformSampling => 1,
            Stream::TransformParams => 2,
            Stream::Mask => 3,
            Stream::ValidationMask => 4,
            Stream::Noise => 5,
            Stream::Phantom => 6,
            Stream::Sensitivities => 7,
        }
    }
}

/// Identifies one slice of one volume in one epoch under a global seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SliceKey {
    pub seed: u64,
    pub volume: u64,
    pub slice: u64,
    pub epoch: u64,
}

impl SliceKey {
    pub fn new(seed: u64, volume: u64, slice: u64, epoch: u64) -> Self {
        Self {
            seed,
            volume,
            slice,
            epoch,
        }
    }

    pub fn stream_seed(&self, stream: Stream) -> u64 {
        hash_words(&[self.seed, self.volume, self.slice, self.epoch, stream.tag()])
    }

    pub fn rng(&self, stream: Stream) -> StreamRng {
        seeded(self.stream_seed(stream))
    }
}

/// Seed of the fixed validation mask shared by every slice of `volume`.
pub fn volume_mask_seed(seed: u64, volume: u64) -> u64 {
    hash_words(&[seed, volume, Stream::ValidationMask.tag()])
}

/// Seed of a per-volume stream such as sensitivity geometry.
pub fn volume_stream_seed(seed: u64, volume: u64, stream: Stream) -> u64 {
    hash_words(&[seed, volume, u64::MAX, stream.tag()])
}
