//! Hashed n-gram features.
//!
//! Text is lowercased and split on Unicode whitespace. Three families of
//! n-grams are extracted:
//!
//! * word unigrams, hashed as `"w:" + token`
//! * word bigrams, hashed as `"b:" + token + " " + token`
//! * character trigrams over the tokens re-joined with single spaces, hashed
//!   as `"c:" + three chars`
//!
//! Each key is hashed with 64-bit FNV-1a and reduced modulo the dimension.
//! Bucket counts are L2-normalized.

use serde::{Deserialize, Serialize};

pub const HASH_NAME: &str = "fnv1a64";
pub const DEFAULT_DIM: usize = 1 << 18;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct SparseVector {
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn dot_dense(&self, w: &[f64]) -> f64 {
        self.indices
            .iter()
            .zip(&self.values)
            .map(|(&i, &v)| w[i as usize] * v)
            .sum()
    }

    pub fn dot(&self, other: &SparseVector) -> f64 {
        let (mut i, mut j, mut acc) = (0, 0, 0.0);
        while i < self.indices.len() && j < other.indices.len() {
            match self.indices[i].cmp(&other.indices[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    acc += self.values[i] * other.values[j];
                    i += 1;
                    j += 1;
                }
            }
        }
        acc
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// The n-gram keys of `text`, before hashing. Exposed for inspection.
pub fn ngram_keys(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let tokens: Vec<&str> = lowered.split_whitespace().collect();
    let mut keys = Vec::new();
    for t in &tokens {
        keys.push(format!("w:{t}"));
    }
    for pair in tokens.windows(2) {
        keys.push(format!("b:{} {}", pair[0], pair[1]));
    }
    let chars: Vec<char> = tokens.join(" ").chars().collect();
    for tri in chars.windows(3) {
        keys.push(format!("c:{}", tri.iter().collect::<String>()));
    }
    keys
}

/// Hashed, L2-normalized n-gram counts. Blank text gives the zero vector.
pub fn featurize(text: &str, dim: usize) -> SparseVector {
    assert!(dim > 0 && dim <= u32::MAX as usize);
    let mut buckets: Vec<u32> = ngram_keys(text)
        .iter()
        .map(|k| (fnv1a64(k.as_bytes()) % dim as u64) as u32)
        .collect();
    buckets.sort_unstable();
    let mut v = SparseVector::default();
    for b in buckets {
        if v.indices.last() == Some(&b) {
            *v.values.last_mut().unwrap() += 1.0;
        } else {
            v.indices.push(b);
            v.values.push(1.0);
        }
    }
    let norm = v.norm();
    if norm > 0.0 {
        for x in &mut v.values {
            *x /= norm;
        }
    }
    v
}
