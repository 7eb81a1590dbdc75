use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::{binarize, check_same_shape, ThresholdPolicy};
use crate::corpus_io::{LabelMatrix, ScoreMatrix};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct F1Scores {
    pub macro_f1: f64,
    pub micro_f1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucScores {
    pub macro_auc: f64,
    pub micro_auc: f64,
}

/// `2tp / (2tp + fp + fn)`, 0 when nothing is predicted or gold.
pub(crate) fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> f64 {
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

fn check_labels(pred: &LabelMatrix, gold: &LabelMatrix) -> Result<()> {
    if pred.note_ids() != gold.note_ids() || pred.code_ids() != gold.code_ids() {
        return Err(Error::Shape("prediction and gold matrices have different ids".into()));
    }
    Ok(())
}

/// Micro F1 pools counts over all cells; macro F1 averages per-code F1 over
/// every code, scoring codes with no predictions and no gold as 0.
pub fn f1_scores(pred: &LabelMatrix, gold: &LabelMatrix) -> Result<F1Scores> {
    check_labels(pred, gold)?;
    let n = gold.n_codes();
    let mut counts = vec![(0u64, 0u64, 0u64); n];
    for (k, (&p, &g)) in pred.cells().iter().zip(gold.cells()).enumerate() {
        let c = &mut counts[k % n];
        match (p, g) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            (false, false) => {}
        }
    }
    let (tp, fp, fn_) = counts
        .iter()
        .fold((0, 0, 0), |acc, c| (acc.0 + c.0, acc.1 + c.1, acc.2 + c.2));
    let macro_f1 = if n == 0 {
        0.0
    } else {
        counts.iter().map(|&(a, b, c)| f1_from_counts(a, b, c)).sum::<f64>() / n as f64
    };
    Ok(F1Scores {
        macro_f1,
        micro_f1: f1_from_counts(tp, fp, fn_),
    })
}

/// Mann–Whitney AUC with ties counted as one half, or `None` without both
/// classes.
fn auc(pairs: &mut [(f64, bool)]) -> Option<f64> {
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = pairs.iter().filter(|p| p.1).count() as u128;
    let negatives = pairs.len() as u128 - positives;
    if positives == 0 || negatives == 0 {
        return None;
    }
    // Twice the Mann–Whitney U, kept integral until the final division.
    let mut twice_u: u128 = 0;
    let mut negatives_below: u128 = 0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u128, 0u128);
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            if pairs[j].1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        twice_u += 2 * pos * negatives_below + pos * neg;
        negatives_below += neg;
        i = j;
    }
    Some(twice_u as f64 / (2 * positives * negatives) as f64)
}

/// Micro AUC ranks all cells together; macro AUC averages codes that have
/// both classes in gold. Either being undefined is an error.
pub fn auc_scores(scores: &ScoreMatrix, gold: &LabelMatrix) -> Result<AucScores> {
    check_same_shape(scores, gold)?;
    let mut all: Vec<(f64, bool)> = scores.values().iter().copied().zip(gold.cells().iter().copied()).collect();
    let micro_auc = auc(&mut all).ok_or_else(|| Error::Undefined {
        metric: "micro-AUC",
        reason: "gold labels need both positive and negative cells".into(),
    })?;
    let mut per_code = Vec::new();
    for c in 0..scores.n_codes() {
        let mut column: Vec<(f64, bool)> = (0..scores.n_notes()).map(|r| (scores.get(r, c), gold.get(r, c))).collect();
        if let Some(a) = auc(&mut column) {
            per_code.push(a);
        }
    }
    if per_code.is_empty() {
        return Err(Error::Undefined {
            metric: "macro-AUC",
            reason: "no code has both positive and negative notes".into(),
        });
    }
    Ok(AucScores {
        macro_auc: per_code.iter().sum::<f64>() / per_code.len() as f64,
        micro_auc,
    })
}

/// Mean over notes of the gold fraction among each note's `k` top-scored
/// codes (ties go to the lower code index).
pub fn precision_at_k(scores: &ScoreMatrix, gold: &LabelMatrix, k: usize) -> Result<f64> {
    check_same_shape(scores, gold)?;
    if k == 0 || k > scores.n_codes() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} must be between 1 and the number of codes ({})",
            scores.n_codes()
        )));
    }
    if scores.n_notes() == 0 {
        return Err(Error::Undefined {
            metric: "precision@k",
            reason: "no notes".into(),
        });
    }
    let mut total = 0.0;
    let mut order: Vec<usize> = Vec::with_capacity(scores.n_codes());
    for r in 0..scores.n_notes() {
        let row = scores.row(r);
        order.clear();
        order.extend(0..row.len());
        order.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        let hits = order[..k].iter().filter(|&&c| gold.get(r, c)).count();
        total += hits as f64 / k as f64;
    }
    Ok(total / scores.n_notes() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub macro_auc: f64,
    pub micro_auc: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub precision_at: BTreeMap<usize, f64>,
    pub threshold: ThresholdPolicy,
}

pub fn compute_report(scores: &ScoreMatrix, gold: &LabelMatrix, policy: &ThresholdPolicy, ks: &[usize]) -> Result<MetricsReport> {
    check_same_shape(scores, gold)?;
    let auc = auc_scores(scores, gold)?;
    let f1 = f1_scores(&binarize(scores, policy), gold)?;
    let precision_at = ks
        .iter()
        .map(|&k| Ok((k, precision_at_k(scores, gold, k)?)))
        .collect::<Result<_>>()?;
    Ok(MetricsReport {
        macro_auc: auc.macro_auc,
        micro_auc: auc.micro_auc,
        macro_f1: f1.macro_f1,
        micro_f1: f1.micro_f1,
        precision_at,
        threshold: policy.clone(),
    })
}

/// Arithmetic mean of several runs' reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub runs: usize,
    pub macro_auc: f64,
    pub micro_auc: f64,
    pub macro_f1: f64,
    pub micro_f1: f64,
    pub precision_at: BTreeMap<usize, f64>,
}

pub fn mean_reports(reports: &[MetricsReport]) -> Result<MeanMetrics> {
    let Some(first) = reports.first() else {
        return Err(Error::InvalidArgument("no reports to average".into()));
    };
    if reports.iter().any(|r| r.precision_at.keys().ne(first.precision_at.keys())) {
        return Err(Error::Shape("reports disagree on precision@k cut-offs".into()));
    }
    let n = reports.len() as f64;
    let mean = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
    Ok(MeanMetrics {
        runs: reports.len(),
        macro_auc: mean(|r| r.macro_auc),
        micro_auc: mean(|r| r.micro_auc),
        macro_f1: mean(|r| r.macro_f1),
        micro_f1: mean(|r| r.micro_f1),
        precision_at: first
            .precision_at
            .keys()
            .map(|k| (*k, reports.iter().map(|r| r.precision_at[k]).sum::<f64>() / n))
            .collect(),
    })
}

fn write_row(
    f: &mut fmt::Formatter<'_>,
    values: [f64; 4],
    precision_at: &BTreeMap<usize, f64>,
) -> fmt::Result {
    write!(f, "{:>9} {:>9} {:>9} {:>9}", "macro-AUC", "micro-AUC", "macro-F1", "micro-F1")?;
    for k in precision_at.keys() {
        write!(f, " {:>6}", format!("P@{k}"))?;
    }
    writeln!(f)?;
    for v in values {
        write!(f, "{:>9.1} ", v * 100.0)?;
    }
    for v in precision_at.values() {
        write!(f, "{:>6.1} ", v * 100.0)?;
    }
    writeln!(f)
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_row(f, [self.macro_auc, self.micro_auc, self.macro_f1, self.micro_f1], &self.precision_at)
    }
}

impl fmt::Display for MeanMetrics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "mean of {} run(s)", self.runs)?;
        write_row(f, [self.macro_auc, self.micro_auc, self.macro_f1, self.micro_f1], &self.precision_at)
    }
}
