//! Signed feature hashing of word and character n-grams.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

/// Sparse feature vector: strictly increasing indices, no zero values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVec {
    pub entries: Vec<(u32, f64)>,
}

impl SparseVec {
    /// Sorts by index and sums duplicate entries.
    pub fn from_unsorted(mut raw: Vec<(u32, f64)>) -> Self {
        raw.sort_unstable_by_key(|e| e.0);
        let mut entries: Vec<(u32, f64)> = Vec::with_capacity(raw.len());
        for (i, v) in raw {
            match entries.last_mut() {
                Some(last) if last.0 == i => last.1 += v,
                _ => entries.push((i, v)),
            }
        }
        entries.retain(|e| e.1 != 0.0);
        Self { entries }
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.entries.iter().map(|e| e.1 * e.1).sum())
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a followed by a SplitMix64 finalizer. Stable across platforms and
/// releases; persisted models depend on it.
pub fn stable_hash(parts: &[&[u8]]) -> u64 {
    let mut h = FNV_OFFSET;
    for (i, part) in parts.iter().enumerate() {
        if i > 0 {
            h ^= 0x1f;
            h = h.wrapping_mul(FNV_PRIME);
        }
        for &b in *part {
            h ^= u64::from(b);
            h = h.wrapping_mul(FNV_PRIME);
        }
    }
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureHasher {
    pub dims: u32,
    /// Inclusive word n-gram range.
    pub word_ngrams: (usize, usize),
    /// Inclusive character n-gram range, if enabled.
    pub char_ngrams: Option<(usize, usize)>,
}

impl FeatureHasher {
    /// L2-normalized signed n-gram counts.
    pub fn features(&self, text: &str) -> SparseVec {
        let lowered: String = text.to_lowercase();
        let tokens: Vec<&str> = lowered.split_whitespace().collect();
        let mut raw = Vec::new();
        let (lo, hi) = self.word_ngrams;
        for n in lo.max(1)..=hi {
            for window in tokens.windows(n) {
                let mut parts: Vec<&[u8]> = Vec::with_capacity(n + 1);
                parts.push(b"w");
                parts.extend(window.iter().map(|t| t.as_bytes()));
                raw.push(self.bucket(stable_hash(&parts)));
            }
        }
        if let Some((lo, hi)) = self.char_ngrams {
            let joined = tokens.join(" ");
            let chars: Vec<(usize, char)> = joined.char_indices().collect();
            for n in lo.max(1)..=hi {
                for w in 0..chars.len().saturating_sub(n - 1) {
                    let start = chars[w].0;
                    let end = chars.get(w + n).map_or(joined.len(), |c| c.0);
                    raw.push(self.bucket(stable_hash(&[b"c", joined[start..end].as_bytes()])));
                }
            }
        }
        let mut v = SparseVec::from_unsorted(raw);
        let norm = v.norm();
        if norm > 0.0 {
            v.entries.iter_mut().for_each(|e| e.1 /= norm);
        }
        v
    }

    fn bucket(&self, h: u64) -> (u32, f64) {
        let index = (h % u64::from(self.dims)) as u32;
        let sign = if (h >> 63) == 1 { -1.0 } else { 1.0 };
        (index, sign)
    }
}
