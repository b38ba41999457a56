//! Counter-based shared randomness.
//!
//! A [`SharedRandomSource`] is a pure function from an index `k` to a uniform
//! value in `[0, 1)`. Two parties holding equal sources see identical values
//! at every index without exchanging anything, and either can jump straight to
//! any index.
//!
//! Construction (stable within a major version):
//!
//! * The source key is two 64-bit words. [`SharedRandomSource::new`] seeds
//!   them from `seed` through SplitMix64 and then absorbs the label bytes.
//! * [`SharedRandomSource::derive`] absorbs a separator byte and the sublabel
//!   into the parent key.
//! * `uniform_at(k)` evaluates `fmix64(splitmix(k0 + (k + 1)·γ) ^ k1)` and
//!   keeps the top 53 bits.

use std::fmt;

const GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;
const LABEL_SEPARATOR: u8 = 0x1F;

#[inline]
fn splitmix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[inline]
fn fmix64(mut z: u64) -> u64 {
    z ^= z >> 33;
    z = z.wrapping_mul(0xFF51_AFD7_ED55_8CCD);
    z ^= z >> 33;
    z = z.wrapping_mul(0xC4CE_B9FE_1A85_EC53);
    z ^ (z >> 33)
}

fn absorb(mut key: [u64; 2], bytes: &[u8]) -> [u64; 2] {
    for chunk in bytes.chunks(8) {
        let mut word = [0u8; 8];
        word[..chunk.len()].copy_from_slice(chunk);
        let w = u64::from_le_bytes(word) ^ ((chunk.len() as u64) << 56);
        key[0] = splitmix(key[0] ^ w).wrapping_add(key[1]);
        key[1] = fmix64(key[1].wrapping_add(w).wrapping_add(GAMMA)) ^ key[0];
    }
    key[0] = splitmix(key[0] ^ (bytes.len() as u64));
    key[1] = fmix64(key[1] ^ key[0]);
    key
}

/// Anything that can hand out uniforms by index. Per-party protocol code is
/// generic over this so tests can pin a stream.
pub trait UniformSource {
    /// Uniform value in `[0, 1)` at stream position `k`.
    fn uniform_at(&self, k: u64) -> f64;
}

/// Seeded, labelled, random-access stream of uniforms.
#[derive(Clone, PartialEq, Eq)]
pub struct SharedRandomSource {
    seed: u64,
    label: String,
    key: [u64; 2],
}

impl fmt::Debug for SharedRandomSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SharedRandomSource")
            .field("seed", &self.seed)
            .field("label", &self.label)
            .finish()
    }
}

impl SharedRandomSource {
    pub fn new(seed: u64, label: &str) -> Self {
        let base = [
            splitmix(seed ^ 0x6A09_E667_F3BC_C908),
            splitmix(seed.wrapping_add(GAMMA)),
        ];
        Self {
            seed,
            label: label.to_string(),
            key: absorb(base, label.as_bytes()),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Full label path, `parent/child/...`.
    pub fn label(&self) -> &str {
        &self.label
    }

    /// Independent child stream, deterministic in `(self, sublabel)`.
    pub fn derive(&self, sublabel: &str) -> Self {
        let mut bytes = Vec::with_capacity(sublabel.len() + 1);
        bytes.push(LABEL_SEPARATOR);
        bytes.extend_from_slice(sublabel.as_bytes());
        let mut label = String::with_capacity(self.label.len() + 1 + sublabel.len());
        label.push_str(&self.label);
        label.push('/');
        label.push_str(sublabel);
        Self {
            seed: self.seed,
            label,
            key: absorb(self.key, &bytes),
        }
    }

    /// Raw 64-bit output at index `k`.
    #[inline]
    pub fn u64_at(&self, k: u64) -> u64 {
        let x = splitmix(self.key[0].wrapping_add(k.wrapping_add(1).wrapping_mul(GAMMA)));
        fmix64(x ^ self.key[1])
    }

    /// Uniform value in `[0, 1)` at index `k`.
    #[inline]
    pub fn uniform_at(&self, k: u64) -> f64 {
        (self.u64_at(k) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl UniformSource for SharedRandomSource {
    #[inline]
    fn uniform_at(&self, k: u64) -> f64 {
        SharedRandomSource::uniform_at(self, k)
    }
}

/// A pinned stream: returns `values[k]`. Panics past the end.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcedStream(pub Vec<f64>);

impl UniformSource for ForcedStream {
    fn uniform_at(&self, k: u64) -> f64 {
        self.0[k as usize]
    }
}
