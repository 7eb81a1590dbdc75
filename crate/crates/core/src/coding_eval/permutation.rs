use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{auc_scores, f1_scores, precision_at_k};
use super::{binarize, check_same_shape, ThresholdPolicy};
use crate::corpus_io::{LabelMatrix, ScoreMatrix};
use crate::seed::derive_seed_indexed;
use crate::{Error, Result};

pub const DEFAULT_ROUNDS: usize = 1000;

/// Permuted differences within this distance of the observed one count as
/// "at least as extreme", absorbing summation-order noise.
const EXTREME_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "kebab-case")]
pub enum Metric {
    MicroF1 { threshold: ThresholdPolicy },
    MacroF1 { threshold: ThresholdPolicy },
    MicroAuc,
    MacroAuc,
    PrecisionAt { k: usize },
}

impl Metric {
    pub fn name(&self) -> String {
        match self {
            Metric::MicroF1 { .. } => "micro-f1".into(),
            Metric::MacroF1 { .. } => "macro-f1".into(),
            Metric::MicroAuc => "micro-auc".into(),
            Metric::MacroAuc => "macro-auc".into(),
            Metric::PrecisionAt { k } => format!("p@{k}"),
        }
    }

    /// Parses `micro-f1`, `macro-f1`, `micro-auc`, `macro-auc` or `p@K`; the
    /// F1 metrics binarize with `threshold`.
    pub fn parse(name: &str, threshold: ThresholdPolicy) -> Result<Self> {
        Ok(match name {
            "micro-f1" => Metric::MicroF1 { threshold },
            "macro-f1" => Metric::MacroF1 { threshold },
            "micro-auc" => Metric::MicroAuc,
            "macro-auc" => Metric::MacroAuc,
            other => {
                let k = other
                    .strip_prefix("p@")
                    .and_then(|k| k.parse().ok())
                    .ok_or_else(|| Error::InvalidArgument(format!("unknown metric {other:?}")))?;
                Metric::PrecisionAt { k }
            }
        })
    }

    pub fn evaluate(&self, scores: &ScoreMatrix, gold: &LabelMatrix) -> Result<f64> {
        match self {
            Metric::MicroF1 { threshold } => Ok(f1_scores(&binarize(scores, threshold), gold)?.micro_f1),
            Metric::MacroF1 { threshold } => Ok(f1_scores(&binarize(scores, threshold), gold)?.macro_f1),
            Metric::MicroAuc => Ok(auc_scores(scores, gold)?.micro_auc),
            Metric::MacroAuc => Ok(auc_scores(scores, gold)?.macro_auc),
            Metric::PrecisionAt { k } => precision_at_k(scores, gold, *k),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermTestResult {
    pub statistic: String,
    pub observed_diff: f64,
    pub p_value: f64,
    pub rounds: usize,
    pub seed: u64,
}

/// Paired two-sided permutation test of `metric(a) - metric(b)`. Each round
/// swaps the two systems' rows for every note independently with
/// probability one half. Round `i` draws from its own generator derived from
/// `(seed, i)`, so the result does not depend on scheduling.
pub fn permutation_test(
    a: &ScoreMatrix,
    b: &ScoreMatrix,
    gold: &LabelMatrix,
    metric: &Metric,
    rounds: usize,
    seed: u64,
) -> Result<PermTestResult> {
    check_same_shape(a, gold)?;
    check_same_shape(b, gold)?;
    if rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be at least 1".into()));
    }
    let observed = metric.evaluate(a, gold)? - metric.evaluate(b, gold)?;
    let n = a.n_codes();
    let extreme: Vec<bool> = (0..rounds)
        .into_par_iter()
        .map(|round| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed_indexed(seed, "perm", round as u64));
            let mut pa = a.values().to_vec();
            let mut pb = b.values().to_vec();
            for r in 0..a.n_notes() {
                if rng.random_bool(0.5) {
                    pa[r * n..(r + 1) * n].swap_with_slice(&mut pb[r * n..(r + 1) * n]);
                }
            }
            let diff = metric.evaluate(&a.with_values(pa), gold)? - metric.evaluate(&b.with_values(pb), gold)?;
            Ok(diff.abs() >= observed.abs() - EXTREME_TOLERANCE)
        })
        .collect::<Result<_>>()?;
    let count = extreme.iter().filter(|&&e| e).count();
    Ok(PermTestResult {
        statistic: metric.name(),
        observed_diff: observed,
        p_value: (1 + count) as f64 / (rounds + 1) as f64,
        rounds,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coding_eval::testing::random_instance;

    fn half() -> ThresholdPolicy {
        ThresholdPolicy::global(0.5).unwrap()
    }

    #[test]
    fn identical_systems() {
        let (s, g) = random_instance(11, 15, 6);
        for metric in [Metric::MicroF1 { threshold: half() }, Metric::PrecisionAt { k: 1 }] {
            let r = permutation_test(&s, &s, &g, &metric, 200, 5).unwrap();
            assert_eq!(r.observed_diff, 0.0);
            assert_eq!(r.p_value, 1.0);
        }
    }

    #[test]
    fn dominant_system_is_significant() {
        let notes: Vec<String> = (0..20).map(|i| format!("n{i}")).collect();
        let codes: Vec<String> = (0..3).map(|i| format!("c{i}")).collect();
        let gold: Vec<bool> = (0..60).map(|k| (k / 3 + k % 3) % 2 == 0).collect();
        let perfect: Vec<f64> = gold.iter().map(|&g| if g { 0.9 } else { 0.1 }).collect();
        let anti: Vec<f64> = perfect.iter().map(|p| 1.0 - p).collect();
        let g = LabelMatrix::new(notes.clone(), codes.clone(), gold).unwrap();
        let a = ScoreMatrix::new(notes.clone(), codes.clone(), perfect).unwrap();
        let b = ScoreMatrix::new(notes, codes, anti).unwrap();
        let r = permutation_test(&a, &b, &g, &Metric::MicroF1 { threshold: half() }, 1000, 42).unwrap();
        assert_eq!(r.observed_diff, 1.0);
        assert!(r.p_value <= 0.05, "p = {}", r.p_value);
        assert!(r.p_value >= 1.0 / 1001.0);
    }

    #[test]
    fn deterministic_and_bounded() {
        let (a, g) = random_instance(1, 12, 4);
        let (b, _) = random_instance(2, 12, 4);
        let b = ScoreMatrix::new(a.note_ids().to_vec(), a.code_ids().to_vec(), {
            let mut v = b.values().to_vec();
            v.resize(a.values().len(), 0.5);
            v
        })
        .unwrap();
        let m = Metric::MacroF1 { threshold: half() };
        let r1 = permutation_test(&a, &b, &g, &m, 300, 9).unwrap();
        let r2 = permutation_test(&a, &b, &g, &m, 300, 9).unwrap();
        assert_eq!(r1, r2);
        assert!(r1.p_value > 0.0 && r1.p_value <= 1.0);
    }

    #[test]
    fn rejects_mismatched_ids() {
        let (a, g) = random_instance(1, 5, 3);
        let other = ScoreMatrix::new(vec!["zz".into()], a.code_ids().to_vec(), vec![0.5; a.n_codes()]).unwrap();
        assert!(permutation_test(&a, &other, &g, &Metric::MicroAuc, 10, 0).is_err());
        assert!(permutation_test(&a, &a, &g, &Metric::MicroAuc, 0, 0).is_err());
    }

    #[test]
    fn metric_names_roundtrip() {
        for name in ["micro-f1", "macro-f1", "micro-auc", "macro-auc", "p@5"] {
            assert_eq!(Metric::parse(name, half()).unwrap().name(), name);
        }
        assert!(Metric::parse("p@x", half()).is_err());
    }
}
