//! Reference training objective on a linear per-code head.
//!
//! Each code gets an independent logistic output over hashed bag-of-token
//! features, standing in for the "yes/no" distribution at that code's mask.
//! A note is trained on its original prompt P and its augmented prompt P_a:
//!
//! `L = ½(CE(P, y) + CE(P_a, y)) + α·cons(P, P_a)`
//!
//! where `cons` is the per-code symmetric Bernoulli KL. Both cross-entropy and
//! consistency are means over codes. The head reads the note part of each
//! prompt; code display texts are identical for every note and would only
//! shift the biases.

mod checkpoint;
mod features;
mod model;

use std::collections::HashMap;

use log::info;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{config_hash, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint};
pub use features::{featurize, hash_tokens, tokenize, SparseVector};
pub use model::{batch_loss, ce_loss, cons_loss, forward, gradient, total_loss, Example, Gradient, ModelParams};

use crate::corpus_io::{CodeSet, Note, ScoreMatrix};
use crate::seed::derive_seed_indexed;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub feature_dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub prob_clamp: f64,
    /// Augmented prompts list sampled synonyms instead of descriptions.
    pub use_synonym_prompt: bool,
    pub synonyms_per_code: usize,
    /// Per-token drop probability, drawn independently for P and P_a every
    /// epoch. With P_a = P this gives the consistency-only ablation.
    pub token_dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            alpha: 0.05,
            feature_dim: 65536,
            learning_rate: 0.1,
            epochs: 20,
            batch_size: 16,
            seed: 0,
            prob_clamp: 1e-7,
            use_synonym_prompt: true,
            synonyms_per_code: 4,
            token_dropout: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be non-negative, got {}", self.alpha));
        }
        if self.feature_dim < 2 || self.feature_dim > u32::MAX as usize {
            return bad(format!("feature-dim {} is out of range", self.feature_dim));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!("learning-rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            return bad("batch-size must be at least 1".into());
        }
        if !(self.prob_clamp > 0.0 && self.prob_clamp < 0.5) {
            return bad(format!("prob-clamp must be in (0, 0.5), got {}", self.prob_clamp));
        }
        if !(0.0..1.0).contains(&self.token_dropout) {
            return bad(format!("token-dropout must be in [0, 1), got {}", self.token_dropout));
        }
        Ok(())
    }
}

/// Hashed tokens of one note's two prompts, plus its labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainItem {
    pub note_id: String,
    pub tokens_p: Vec<u32>,
    pub tokens_pa: Vec<u32>,
    pub labels: Vec<bool>,
}

fn label_vector(note: &Note, codes: &CodeSet) -> Result<Vec<bool>> {
    let mut y = vec![false; codes.len()];
    for label in &note.labels {
        let c = codes.index_of(label).ok_or_else(|| Error::UnknownCode {
            note_id: note.id.clone(),
            code: label.clone(),
        })?;
        y[c] = true;
    }
    Ok(y)
}

/// Training items. With `expanded` (note id → expanded text) the augmented
/// prompt reads the expanded note; without it P_a = P, which is the
/// no-augmentation baseline.
pub fn build_items(
    notes: &[Note],
    expanded: Option<&HashMap<String, String>>,
    codes: &CodeSet,
    config: &TrainConfig,
) -> Result<Vec<TrainItem>> {
    notes
        .iter()
        .map(|note| {
            let tokens_p = hash_tokens(&note.text, config.feature_dim)?;
            let tokens_pa = match expanded {
                None => tokens_p.clone(),
                Some(map) => {
                    let text = map.get(&note.id).ok_or_else(|| {
                        Error::InvalidArgument(format!("note {} has no expanded text", note.id))
                    })?;
                    hash_tokens(text, config.feature_dim)?
                }
            };
            Ok(TrainItem {
                note_id: note.id.clone(),
                tokens_p,
                tokens_pa,
                labels: label_vector(note, codes)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean over batches of the batch loss before each update.
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub params: ModelParams,
    pub loss_trace: Vec<EpochLoss>,
}

fn dropped(tokens: &[u32], rate: f64, rng: &mut ChaCha8Rng) -> Vec<u32> {
    tokens.iter().copied().filter(|_| !rng.random_bool(rate)).collect()
}

/// Mini-batch gradient descent from zero parameters. Epoch `e` visits notes
/// in an order shuffled by a generator derived from `(seed, e)`.
pub fn train(items: &[TrainItem], n_codes: usize, config: &TrainConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if items.is_empty() {
        return Err(Error::InvalidArgument("no training notes".into()));
    }
    if let Some(item) = items.iter().find(|i| i.labels.len() != n_codes) {
        return Err(Error::Shape(format!("note {} has {} labels for {n_codes} codes", item.note_id, item.labels.len())));
    }
    let fixed: Vec<Example> = items
        .iter()
        .map(|i| Example {
            x_p: SparseVector::from_buckets(&i.tokens_p),
            x_pa: SparseVector::from_buckets(&i.tokens_pa),
            labels: i.labels.clone(),
        })
        .collect();

    let mut params = ModelParams::zeros(n_codes, config.feature_dim);
    let mut loss_trace = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = (0..items.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed_indexed(config.seed, "shuffle", epoch as u64));
        order.shuffle(&mut rng);
        let mut sum = 0.0;
        let mut batches = 0;
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<Example> = if config.token_dropout > 0.0 {
                chunk
                    .iter()
                    .map(|&k| Example {
                        x_p: SparseVector::from_buckets(&dropped(&items[k].tokens_p, config.token_dropout, &mut rng)),
                        x_pa: SparseVector::from_buckets(&dropped(&items[k].tokens_pa, config.token_dropout, &mut rng)),
                        labels: items[k].labels.clone(),
                    })
                    .collect()
            } else {
                chunk.iter().map(|&k| fixed[k].clone()).collect()
            };
            let loss = batch_loss(&params, &batch, config)?;
            if !loss.is_finite() {
                return Err(Error::NonFinite {
                    what: format!("loss at epoch {epoch}, batch {b}"),
                });
            }
            let grad = gradient(&params, &batch, config)?;
            params.apply(&grad, config.learning_rate);
            sum += loss;
            batches += 1;
        }
        let loss = sum / batches as f64;
        info!("epoch {epoch}: loss {loss:.6}");
        loss_trace.push(EpochLoss { epoch, loss });
    }
    Ok(TrainOutcome { params, loss_trace })
}

/// Probabilities for each note's original text.
pub fn score_notes(params: &ModelParams, notes: &[Note], codes: &CodeSet, config: &TrainConfig) -> Result<ScoreMatrix> {
    if params.n_codes() != codes.len() || params.dim() != config.feature_dim {
        return Err(Error::Shape(format!(
            "model has {} codes × {} features; expected {} × {}",
            params.n_codes(),
            params.dim(),
            codes.len(),
            config.feature_dim
        )));
    }
    let mut scores = Vec::with_capacity(notes.len() * codes.len());
    for note in notes {
        scores.extend(forward(params, &featurize(&note.text, config.feature_dim)?, config.prob_clamp)?);
    }
    ScoreMatrix::new(notes.iter().map(|n| n.id.clone()).collect(), codes.ids(), scores)
}
