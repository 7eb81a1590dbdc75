use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{check_same_shape, ThresholdPolicy};
use crate::corpus_io::{LabelMatrix, ScoreMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdMode {
    Global,
    PerCode,
}

impl std::str::FromStr for ThresholdMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(ThresholdMode::Global),
            "per-code" => Ok(ThresholdMode::PerCode),
            other => Err(Error::InvalidArgument(format!("unknown threshold mode {other:?}"))),
        }
    }
}

/// Threshold maximizing F1 over `cells`, among the distinct scores plus 0 and
/// 1, ties going to the larger threshold.
fn best_threshold(cells: &mut [(f64, bool)]) -> f64 {
    cells.sort_by(|a, b| b.0.total_cmp(&a.0));
    let positives = cells.iter().filter(|c| c.1).count() as u128;

    let mut candidates: Vec<f64> = Vec::with_capacity(cells.len() + 2);
    candidates.push(1.0);
    candidates.extend(cells.iter().map(|c| c.0));
    candidates.push(0.0);
    candidates.dedup();

    // F1 = 2tp / (tp + fp + positives), compared as exact fractions.
    let (mut best_t, mut best_num, mut best_den) = (1.0, 0u128, 1u128);
    let (mut tp, mut fp, mut i) = (0u128, 0u128, 0usize);
    for t in candidates {
        while i < cells.len() && cells[i].0 >= t {
            if cells[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let (num, den) = match tp + fp + positives {
            0 => (0, 1),
            d => (2 * tp, d),
        };
        if num * best_den > best_num * den {
            (best_t, best_num, best_den) = (t, num, den);
        }
    }
    best_t
}

/// Tunes decision thresholds on development data. Global mode maximizes
/// micro-F1. Per-code mode maximizes each code's F1 separately; codes without
/// dev positives use the global optimum, and if no code has any the global
/// policy is returned.
pub fn tune_threshold(scores: &ScoreMatrix, gold: &LabelMatrix, mode: ThresholdMode) -> Result<ThresholdPolicy> {
    check_same_shape(scores, gold)?;
    if scores.n_notes() == 0 || scores.n_codes() == 0 {
        return Err(Error::InvalidArgument("development set is empty".into()));
    }
    let mut all: Vec<(f64, bool)> = scores.values().iter().copied().zip(gold.cells().iter().copied()).collect();
    let global = best_threshold(&mut all);
    if mode == ThresholdMode::Global {
        return ThresholdPolicy::global(global);
    }
    let mut values = BTreeMap::new();
    for (c, code) in scores.code_ids().iter().enumerate() {
        let mut column: Vec<(f64, bool)> = (0..scores.n_notes()).map(|r| (scores.get(r, c), gold.get(r, c))).collect();
        if column.iter().any(|x| x.1) {
            values.insert(code.clone(), best_threshold(&mut column));
        }
    }
    if values.is_empty() {
        return ThresholdPolicy::global(global);
    }
    ThresholdPolicy::per_code(values, global)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding_eval::testing::random_instance;
    use crate::coding_eval::{binarize, f1_scores};

    #[test]
    fn separable_instance() {
        let notes: Vec<String> = vec!["a".into(), "b".into()];
        let codes: Vec<String> = vec!["x".into(), "y".into()];
        let s = ScoreMatrix::new(notes.clone(), codes.clone(), vec![0.8, 0.2, 0.2, 0.8]).unwrap();
        let g = LabelMatrix::new(notes, codes, vec![true, false, false, true]).unwrap();
        let policy = tune_threshold(&s, &g, ThresholdMode::Global).unwrap();
        let t = policy.threshold_for("x");
        assert!(t > 0.2 && t <= 0.8);
        // Ties toward the larger threshold: 0.8 is the largest optimum.
        assert_eq!(t, 0.8);
        assert_eq!(f1_scores(&binarize(&s, &policy), &g).unwrap().micro_f1, 1.0);
    }

    #[test]
    fn no_positives_falls_back_to_global() {
        let s = ScoreMatrix::new(vec!["a".into()], vec!["x".into()], vec![0.3]).unwrap();
        let g = LabelMatrix::new(vec!["a".into()], vec!["x".into()], vec![false]).unwrap();
        let policy = tune_threshold(&s, &g, ThresholdMode::PerCode).unwrap();
        assert_eq!(policy, ThresholdPolicy::global(1.0).unwrap());
    }

    #[test]
    fn optimal_against_grid_and_distinct_scores() {
        for seed in 0..300 {
            let (s, g) = random_instance(seed, 20, 8);
            let global = tune_threshold(&s, &g, ThresholdMode::Global).unwrap();
            let best = f1_scores(&binarize(&s, &global), &g).unwrap().micro_f1;
            let mut candidates: Vec<f64> = (1..100).map(|i| i as f64 / 100.0).collect();
            candidates.extend(s.values());
            for t in candidates {
                let f = f1_scores(&binarize(&s, &ThresholdPolicy::global(t).unwrap()), &g).unwrap().micro_f1;
                assert!(best >= f, "seed {seed}: {best} < {f} at {t}");
            }
            let per_code = tune_threshold(&s, &g, ThresholdMode::PerCode).unwrap();
            let macro_per_code = f1_scores(&binarize(&s, &per_code), &g).unwrap().macro_f1;
            let macro_global = f1_scores(&binarize(&s, &global), &g).unwrap().macro_f1;
            assert!(macro_per_code >= macro_global, "seed {seed}");
        }
    }
}
