//! Reproducible random substreams.
//!
//! Every engine draws from ChaCha8 streams keyed by `(seed, label)` and
//! indexed by a 64-bit stream number (path index, chunk index, ...). Work
//! units own their stream, so results do not depend on how units are
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Number of work chunks used by the chunked Monte Carlo reductions.
///
/// Fixed, independent of the thread count, so floating-point reductions are
/// summed in the same order on every machine.
pub const CHUNKS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Substreams {
    seed: u64,
    key: [u8; 32],
}

impl Substreams {
    pub fn new(seed: u64) -> Self {
        Self::keyed(seed, 0)
    }

    fn keyed(seed: u64, salt: u64) -> Self {
        let mut key = [0u8; 32];
        let mut state = seed ^ salt.rotate_left(17);
        for chunk in key.chunks_exact_mut(8) {
            chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
        }
        Self { seed, key }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Independent family for a named sub-task; `fork("a")` and `fork("b")`
    /// never share streams.
    pub fn fork(&self, label: &str) -> Self {
        let mut salt = fnv1a64(label.as_bytes());
        for chunk in self.key.chunks_exact(8) {
            let mut state = salt ^ u64::from_le_bytes(chunk.try_into().unwrap());
            salt = splitmix64(&mut state);
        }
        Self::keyed(self.seed, salt)
    }

    /// The `index`-th stream of this family.
    pub fn stream(&self, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(index);
        rng
    }
}

/// Split `n` work items into [`CHUNKS`] contiguous ranges (some may be empty).
pub fn chunk_ranges(n: usize) -> Vec<std::ops::Range<usize>> {
    let base = n / CHUNKS;
    let extra = n % CHUNKS;
    let mut start = 0;
    (0..CHUNKS)
        .map(|c| {
            let len = base + usize::from(c < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    hash
}
