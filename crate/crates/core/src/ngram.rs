//! Hashed character n-gram embedder used as the offline embedding model.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::similarity::EmbeddingVector;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, b| {
        (h ^ u64::from(*b)).wrapping_mul(FNV_PRIME)
    })
}

/// Character n-gram frequency vectors folded into a fixed dimension by
/// feature hashing, then L2-normalized.
///
/// Text is lowercased, whitespace runs collapse to one space and the result is
/// padded with a space on each side. Each n-gram's UTF-8 bytes are hashed with
/// 64-bit FNV-1a and counted in bucket `hash % dimension`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NgramEmbedder {
    n: usize,
    dimension: usize,
}

impl Default for NgramEmbedder {
    fn default() -> Self {
        Self {
            n: 3,
            dimension: 256,
        }
    }
}

impl NgramEmbedder {
    pub fn new(n: usize, dimension: usize) -> Result<Self> {
        if n == 0 || dimension == 0 {
            return Err(Error::InvalidArgument(
                "n-gram size and dimension must be positive".into(),
            ));
        }
        Ok(Self { n, dimension })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn embed(&self, text: &str) -> Result<EmbeddingVector> {
        let canonical = canonicalize(text);
        if canonical.is_empty() {
            return Err(Error::Empty("text to embed"));
        }
        let chars: Vec<char> = core::iter::once(' ')
            .chain(canonical.chars())
            .chain(core::iter::once(' '))
            .collect();
        let mut counts = vec![0.0f64; self.dimension];
        let mut buf = String::new();
        for window in chars.windows(self.n.min(chars.len())) {
            buf.clear();
            buf.extend(window);
            let bucket = (fnv1a64(buf.as_bytes()) % self.dimension as u64) as usize;
            counts[bucket] += 1.0;
        }
        let norm = libm::sqrt(counts.iter().map(|c| c * c).sum());
        counts.iter_mut().for_each(|c| *c /= norm);
        EmbeddingVector::new(counts)
    }
}

fn canonicalize(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for word in text.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.extend(word.chars().flat_map(char::to_lowercase));
    }
    out
}
