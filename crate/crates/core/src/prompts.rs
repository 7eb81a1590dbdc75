//! Cloze prompts with one mask per code.
//!
//! A prompt reads `d_1 [MASK] d_2 [MASK] ... d_n [MASK] note`, single-space
//! separated. The original prompt uses code descriptions and the original
//! note; the augmented prompt uses sampled synonyms and the expanded note.

use std::collections::{BTreeMap, HashMap, HashSet};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus_io::{CandidateList, CodeSet};
use crate::seed::derive_seed;
use crate::{Error, Result};

pub const DEFAULT_MASK: &str = "[MASK]";
pub const DEFAULT_CHUNK_SIZE: usize = 50;
pub const DEFAULT_SYNONYMS_PER_CODE: usize = 4;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptSpec {
    entries: Vec<(String, String)>,
    note_text: String,
    mask_token: String,
}

impl PromptSpec {
    /// `entries` are `(code id, display text)` in prompt order.
    pub fn new(entries: Vec<(String, String)>, note_text: impl Into<String>, mask_token: impl Into<String>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::InvalidArgument("prompt needs at least one code".into()));
        }
        let mut seen = HashSet::new();
        for (id, _) in &entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::Duplicate {
                    what: "prompt code",
                    id: id.clone(),
                });
            }
        }
        let mask_token = mask_token.into();
        if mask_token.is_empty() {
            return Err(Error::InvalidArgument("mask token is empty".into()));
        }
        Ok(PromptSpec {
            entries,
            note_text: note_text.into(),
            mask_token,
        })
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn note_text(&self) -> &str {
        &self.note_text
    }

    pub fn mask_token(&self) -> &str {
        &self.mask_token
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prompt {
    pub text: String,
    /// Code id of the k-th mask.
    pub code_ids: Vec<String>,
    /// Byte offset of the k-th mask in `text`.
    pub mask_offsets: Vec<usize>,
}

pub fn build_prompt(spec: &PromptSpec) -> Prompt {
    let mut text = String::new();
    let mut mask_offsets = Vec::with_capacity(spec.entries.len());
    for (_, display) in &spec.entries {
        text.push_str(display);
        text.push(' ');
        mask_offsets.push(text.len());
        text.push_str(&spec.mask_token);
        text.push(' ');
    }
    text.push_str(&spec.note_text);
    Prompt {
        text,
        code_ids: spec.entries.iter().map(|(id, _)| id.clone()).collect(),
        mask_offsets,
    }
}

/// Display text per code: up to `k` synonyms drawn without replacement and
/// joined with `"; "`. Codes without synonyms, and every code when `k == 0`,
/// keep their description. Each code draws from its own generator seeded by
/// `(seed, code id)`, so the result does not depend on code order.
pub fn sample_synonyms(codes: &CodeSet, k: usize, seed: u64) -> BTreeMap<String, String> {
    codes
        .iter()
        .map(|code| {
            let display = if k == 0 || code.synonyms.is_empty() {
                code.description.clone()
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &format!("synonyms/{}", code.id)));
                code.synonyms
                    .choose_multiple(&mut rng, k)
                    .map(String::as_str)
                    .collect::<Vec<_>>()
                    .join("; ")
            };
            (code.id.clone(), display)
        })
        .collect()
}

/// `(code id, description)` for every code, in code-set order.
pub fn description_entries(codes: &CodeSet) -> Vec<(String, String)> {
    codes.iter().map(|c| (c.id.clone(), c.description.clone())).collect()
}

/// Consecutive rank-ordered chunks of at most `chunk_size` codes.
pub fn chunk_candidates(candidates: &CandidateList, chunk_size: usize) -> Result<Vec<Vec<String>>> {
    if chunk_size == 0 {
        return Err(Error::InvalidArgument("chunk size must be at least 1".into()));
    }
    let mut seen = HashSet::new();
    for id in &candidates.ranked {
        if !seen.insert(id.as_str()) {
            return Err(Error::Duplicate {
                what: "candidate code",
                id: id.clone(),
            });
        }
    }
    Ok(candidates.ranked.chunks(chunk_size).map(<[String]>::to_vec).collect())
}

/// Merges per-chunk `(code id, score)` lists into one row over `code_ids`.
/// Codes never scored get 0.
pub fn merge_chunk_scores(code_ids: &[String], chunks: &[Vec<(String, f64)>]) -> Result<Vec<f64>> {
    let index: HashMap<&str, usize> = code_ids.iter().enumerate().map(|(i, c)| (c.as_str(), i)).collect();
    let mut row = vec![0.0; code_ids.len()];
    let mut filled = vec![false; code_ids.len()];
    for (code, score) in chunks.iter().flatten() {
        let &i = index.get(code.as_str()).ok_or_else(|| Error::InvalidArgument(format!("unknown code {code:?} in chunk scores")))?;
        if std::mem::replace(&mut filled[i], true) {
            return Err(Error::Duplicate {
                what: "chunk score",
                id: code.clone(),
            });
        }
        row[i] = *score;
    }
    Ok(row)
}
