use alloc::format;
use alloc::string::String;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// A labelled, seeded random stream.
///
/// The pair `(root_seed, label)` fully determines the sequence of values.
/// Child streams obtained with [`RngStream::derive`] depend only on the
/// parent's seed and label, never on how many values the parent has drawn,
/// so independent components can be reordered or run in parallel without
/// changing results.
#[derive(Debug, Clone)]
pub struct RngStream {
    root_seed: u64,
    label: String,
    rng: ChaCha12Rng,
}

/// Derive the stream for `label` from an experiment's root seed.
///
/// # Panics
/// If `label` is empty.
pub fn derive_rng_stream(root_seed: u64, label: &str) -> RngStream {
    assert!(!label.is_empty(), "rng stream label must be non-empty");
    let mut hasher = Sha256::new();
    hasher.update(root_seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label.as_bytes());
    let seed: [u8; 32] = hasher.finalize().into();
    RngStream { root_seed, label: String::from(label), rng: ChaCha12Rng::from_seed(seed) }
}

impl RngStream {
    pub fn root_seed(&self) -> u64 {
        self.root_seed
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Child stream labelled `"{label}/{sub}"`.
    pub fn derive(&self, sub: &str) -> RngStream {
        derive_rng_stream(self.root_seed, &format!("{}/{}", self.label, sub))
    }
}

impl RngCore for RngStream {
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
