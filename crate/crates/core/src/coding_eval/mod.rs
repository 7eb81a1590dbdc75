//! Multi-label coding evaluation.
//!
//! Scores are note × code probability matrices; gold labels and binarized
//! predictions are [`LabelMatrix`] values over the same note and code ids.

mod metrics;
mod permutation;
mod threshold;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use metrics::{
    auc_scores, compute_report, f1_scores, mean_reports, precision_at_k, AucScores, F1Scores, MeanMetrics,
    MetricsReport,
};
pub use permutation::{permutation_test, Metric, PermTestResult, DEFAULT_ROUNDS};
pub use threshold::{tune_threshold, ThresholdMode};

use crate::corpus_io::{LabelMatrix, ScoreMatrix};
use crate::{Error, Result};

/// Decision thresholds. A cell is positive iff its score is at least the
/// threshold for its code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ThresholdPolicy {
    Global {
        value: f64,
    },
    PerCode {
        values: BTreeMap<String, f64>,
        /// Used for codes absent from `values`.
        fallback: f64,
    },
}

fn check_unit(what: &str, t: f64) -> Result<()> {
    if (0.0..=1.0).contains(&t) {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{what} threshold {t} is outside [0, 1]")))
    }
}

impl ThresholdPolicy {
    pub fn global(value: f64) -> Result<Self> {
        check_unit("global", value)?;
        Ok(ThresholdPolicy::Global { value })
    }

    pub fn per_code(values: BTreeMap<String, f64>, fallback: f64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("per-code policy needs at least one code".into()));
        }
        check_unit("fallback", fallback)?;
        for (code, &t) in &values {
            check_unit(code, t)?;
        }
        Ok(ThresholdPolicy::PerCode { values, fallback })
    }

    /// Re-checks invariants, e.g. after deserializing.
    pub fn validate(&self) -> Result<()> {
        match self {
            ThresholdPolicy::Global { value } => check_unit("global", *value),
            ThresholdPolicy::PerCode { values, fallback } => {
                ThresholdPolicy::per_code(values.clone(), *fallback).map(|_| ())
            }
        }
    }

    pub fn threshold_for(&self, code_id: &str) -> f64 {
        match self {
            ThresholdPolicy::Global { value } => *value,
            ThresholdPolicy::PerCode { values, fallback } => values.get(code_id).copied().unwrap_or(*fallback),
        }
    }
}

pub(crate) fn check_same_shape(scores: &ScoreMatrix, gold: &LabelMatrix) -> Result<()> {
    if scores.note_ids() != gold.note_ids() {
        return Err(Error::Shape("score and gold matrices have different note ids".into()));
    }
    if scores.code_ids() != gold.code_ids() {
        return Err(Error::Shape("score and gold matrices have different code ids".into()));
    }
    Ok(())
}

pub fn binarize(scores: &ScoreMatrix, policy: &ThresholdPolicy) -> LabelMatrix {
    let thresholds: Vec<f64> = scores.code_ids().iter().map(|c| policy.threshold_for(c)).collect();
    let n = thresholds.len();
    let cells = scores
        .values()
        .iter()
        .enumerate()
        .map(|(k, &s)| s >= thresholds[k % n])
        .collect();
    LabelMatrix::new(scores.note_ids().to_vec(), scores.code_ids().to_vec(), cells)
        .expect("ids were validated by the score matrix")
}


#[cfg(test)]
mod tests {
    use super::*;

    fn ids(prefix: &str, n: usize) -> Vec<String> {
        (0..n).map(|i| format!("{prefix}{i}")).collect()
    }

    #[test]
    fn boundary_is_positive() {
        let s = ScoreMatrix::new(ids("n", 1), ids("c", 3), vec![0.9, 0.5, 0.4999]).unwrap();
        let b = binarize(&s, &ThresholdPolicy::global(0.5).unwrap());
        assert_eq!(b.cells(), &[true, true, false]);
        let all = ScoreMatrix::new(ids("n", 2), ids("c", 2), vec![0.9; 4]).unwrap();
        assert!(binarize(&all, &ThresholdPolicy::global(0.5).unwrap()).cells().iter().all(|&c| c));
    }

    #[test]
    fn per_code_matches_scalar_loop() {
        let (s, _) = testing::random_instance(3, 10, 6);
        let mut values = BTreeMap::new();
        values.insert("c0".to_owned(), 0.2);
        let policy = ThresholdPolicy::per_code(values, 0.8).unwrap();
        let b = binarize(&s, &policy);
        for r in 0..s.n_notes() {
            for c in 0..s.n_codes() {
                let t = if c == 0 { 0.2 } else { 0.8 };
                assert_eq!(b.get(r, c), s.get(r, c) >= t);
            }
        }
    }

    #[test]
    fn policy_validation() {
        assert!(ThresholdPolicy::global(1.5).is_err());
        assert!(ThresholdPolicy::per_code(BTreeMap::new(), 0.5).is_err());
        let mut v = BTreeMap::new();
        v.insert("a".to_owned(), -0.1);
        assert!(ThresholdPolicy::per_code(v, 0.5).is_err());
        let json = serde_json::to_string(&ThresholdPolicy::global(0.25).unwrap()).unwrap();
        assert_eq!(json, r#"{"kind":"global","value":0.25}"#);
    }
}
