use serde::{Deserialize, Serialize};

use crate::seed::fnv1a;
use crate::{Error, Result};

/// Sparse count vector, sorted by index with no repeated indices.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    entries: Vec<(u32, f64)>,
}

impl SparseVector {
    /// Counts of each bucket in `buckets`.
    pub fn from_buckets(buckets: &[u32]) -> Self {
        let mut sorted = buckets.to_vec();
        sorted.sort_unstable();
        let mut entries: Vec<(u32, f64)> = Vec::new();
        for b in sorted {
            match entries.last_mut() {
                Some((i, c)) if *i == b => *c += 1.0,
                _ => entries.push((b, 1.0)),
            }
        }
        SparseVector { entries }
    }

    pub fn entries(&self) -> &[(u32, f64)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, index: u32) -> f64 {
        self.entries
            .binary_search_by_key(&index, |e| e.0)
            .map_or(0.0, |k| self.entries[k].1)
    }

    pub fn max_index(&self) -> Option<u32> {
        self.entries.last().map(|e| e.0)
    }
}

/// Lowercased tokens: maximal runs of alphanumeric characters.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Bucket of each token: 64-bit FNV-1a of its UTF-8 bytes, modulo `dim`.
pub fn hash_tokens(text: &str, dim: usize) -> Result<Vec<u32>> {
    if dim < 2 || dim > u32::MAX as usize {
        return Err(Error::InvalidArgument(format!("feature dimension {dim} is out of range")));
    }
    Ok(tokenize(text)
        .map(|t| (fnv1a(t.as_bytes()) % dim as u64) as u32)
        .collect())
}

pub fn featurize(text: &str, dim: usize) -> Result<SparseVector> {
    Ok(SparseVector::from_buckets(&hash_tokens(text, dim)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_and_repeated() {
        assert!(featurize("", 16).unwrap().is_empty());
        let v = featurize("oa OA", 1 << 16).unwrap();
        assert_eq!(v.entries().len(), 1);
        assert_eq!(v.entries()[0].1, 2.0);
        assert!(featurize("x", 1).is_err());
    }

    #[test]
    fn buckets_are_fixed() {
        // FNV-1a 64 of "a" is 0xaf63dc4c8601ec8c.
        assert_eq!(hash_tokens("A", 1 << 16).unwrap(), vec![0xec8c]);
        assert_eq!(hash_tokens("s/p tka", 1000).unwrap().len(), 3);
        let v = featurize("pain, pain; knee", 1 << 20).unwrap();
        assert_eq!(v.entries().iter().map(|e| e.1).sum::<f64>(), 3.0);
        assert_eq!(v.get(v.entries()[0].0), v.entries()[0].1);
    }
}
