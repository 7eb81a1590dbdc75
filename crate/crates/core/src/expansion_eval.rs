//! Scoring extracted expansion pairs against gold annotations.
//!
//! A prediction detects a gold record when note id, canonical abbreviation
//! and occurrence index agree. Accuracies are over all gold records, so an
//! undetected abbreviation counts as wrong.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::aligner::{levenshtein, ExpansionPair};
use crate::corpus_io::GoldExpansion;
use crate::{Error, Result};

pub const DEFAULT_LENIENT_THRESHOLD: f64 = 70.0;

/// Lowercase with outer whitespace trimmed; inner punctuation is kept.
pub fn canonicalize(s: &str) -> String {
    s.trim().to_lowercase()
}

/// `(1 - lev(expansion, reference) / charlen(reference)) * 100` on canonical
/// forms. Negative when the expansion is far longer than the reference.
pub fn similarity(expansion: &str, reference: &str) -> Result<f64> {
    let expansion = canonicalize(expansion);
    let reference = canonicalize(reference);
    let len = reference.chars().count();
    if len == 0 {
        return Err(Error::InvalidArgument("similarity reference is empty".into()));
    }
    Ok((1.0 - levenshtein(&expansion, &reference) as f64 / len as f64) * 100.0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteExpansions {
    pub note_id: String,
    pub pairs: Vec<ExpansionPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    StrictCorrect,
    LenientCorrect,
    Incorrect,
    Undetected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairOutcome {
    pub note_id: String,
    pub abbreviation: String,
    pub occurrence: usize,
    pub predicted: Option<String>,
    pub full_form: String,
    pub similarity: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub threshold: f64,
    pub n_predictions: usize,
    pub n_gold: usize,
    pub detection_precision: f64,
    pub detection_recall: f64,
    pub strict_accuracy: f64,
    pub lenient_accuracy: f64,
    pub per_pair: Vec<PairOutcome>,
}

type Key = (String, String, usize);

/// Scores predictions against gold. With no predictions, detection precision
/// is reported as 0.
pub fn evaluate(predictions: &[NoteExpansions], gold: &[GoldExpansion], threshold: f64) -> Result<ExpansionReport> {
    if threshold.is_nan() || threshold > 100.0 {
        return Err(Error::InvalidArgument(format!("lenient threshold must be at most 100, got {threshold}")));
    }
    if gold.is_empty() {
        return Err(Error::Undefined {
            metric: "expansion accuracy",
            reason: "gold standard is empty".into(),
        });
    }

    let mut gold_keys: HashSet<Key> = HashSet::with_capacity(gold.len());
    for g in gold {
        let key = (g.note_id.clone(), canonicalize(&g.abbreviation), g.occurrence);
        if !gold_keys.insert(key) {
            return Err(Error::Duplicate {
                what: "gold expansion",
                id: format!("{}/{}#{}", g.note_id, g.abbreviation, g.occurrence),
            });
        }
    }

    // First prediction per key wins.
    let mut predicted: HashMap<Key, &str> = HashMap::new();
    let mut n_predictions = 0;
    let mut matched_predictions = 0;
    for note in predictions {
        for p in &note.pairs {
            n_predictions += 1;
            let key = (note.note_id.clone(), canonicalize(&p.abbreviation), p.occurrence);
            if gold_keys.contains(&key) {
                matched_predictions += 1;
            }
            predicted.entry(key).or_insert(&p.expansion);
        }
    }

    let mut per_pair = Vec::with_capacity(gold.len());
    let (mut detected, mut strict, mut lenient) = (0usize, 0usize, 0usize);
    for g in gold {
        let key = (g.note_id.clone(), canonicalize(&g.abbreviation), g.occurrence);
        let (similarity_value, verdict) = match predicted.get(&key) {
            None => (None, Verdict::Undetected),
            Some(expansion) => {
                detected += 1;
                let sim = similarity(expansion, &g.full_form)?;
                let verdict = if canonicalize(expansion) == canonicalize(&g.full_form) {
                    Verdict::StrictCorrect
                } else if sim >= threshold {
                    Verdict::LenientCorrect
                } else {
                    Verdict::Incorrect
                };
                (Some(sim), verdict)
            }
        };
        match verdict {
            Verdict::StrictCorrect => {
                strict += 1;
                // Exact match has similarity 100, which clears any valid threshold.
                lenient += 1;
            }
            Verdict::LenientCorrect => lenient += 1,
            Verdict::Incorrect | Verdict::Undetected => {}
        }
        per_pair.push(PairOutcome {
            note_id: g.note_id.clone(),
            abbreviation: g.abbreviation.clone(),
            occurrence: g.occurrence,
            predicted: predicted.get(&key).map(|s| (*s).to_owned()),
            full_form: g.full_form.clone(),
            similarity: similarity_value,
            verdict,
        });
    }

    let n_gold = gold.len() as f64;
    Ok(ExpansionReport {
        threshold,
        n_predictions,
        n_gold: gold.len(),
        detection_precision: if n_predictions == 0 {
            0.0
        } else {
            matched_predictions as f64 / n_predictions as f64
        },
        detection_recall: detected as f64 / n_gold,
        strict_accuracy: strict as f64 / n_gold,
        lenient_accuracy: lenient as f64 / n_gold,
        per_pair,
    })
}

impl fmt::Display for ExpansionReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<12} {:>8}", "metric", "value")?;
        writeln!(f, "{:<12} {:>8.4}", "det-P", self.detection_precision)?;
        writeln!(f, "{:<12} {:>8.4}", "det-R", self.detection_recall)?;
        writeln!(f, "{:<12} {:>8.4}", "strict", self.strict_accuracy)?;
        writeln!(f, "{:<12} {:>8.4}", format!("lenient@{}", self.threshold), self.lenient_accuracy)?;
        writeln!(f, "predictions {}, gold {}", self.n_predictions, self.n_gold)
    }
}
