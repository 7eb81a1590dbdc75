//! Synthetic acronym corpus and the baseline-versus-consistency benchmark.
//!
//! Every code has a two-token full form and a one-token acronym, linked by a
//! mock [`Dictionary`]. A note is random filler with each of its codes'
//! evidence inserted at a random position, written as the acronym with a
//! split-dependent probability and as the full form otherwise. Training and
//! dev notes mostly use full forms; test notes use acronyms about half the
//! time, so a model that only learned full forms misses them.

use std::collections::{BTreeSet, HashMap};

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coding_eval::{binarize, f1_scores, tune_threshold, ThresholdMode};
use crate::corpus_io::{Code, CodeSet, LabelMatrix, Note};
use crate::expander::{mock_expand, Dictionary};
use crate::seed::derive_seed;
use crate::trainer::{build_items, score_notes, train, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SynthConfig {
    pub n_codes: usize,
    pub n_train: usize,
    pub n_dev: usize,
    pub n_test: usize,
    pub filler_tokens: usize,
    pub filler_vocab: usize,
    pub max_labels: usize,
    pub train_acronym_rate: f64,
    pub test_acronym_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_codes: 20,
            n_train: 300,
            n_dev: 100,
            n_test: 100,
            filler_tokens: 30,
            filler_vocab: 3000,
            max_labels: 3,
            train_acronym_rate: 0.15,
            test_acronym_rate: 0.5,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub codes: CodeSet,
    pub dictionary: Dictionary,
    pub train: Vec<Note>,
    pub dev: Vec<Note>,
    pub test: Vec<Note>,
    /// Notes in which at least one code is written as its acronym.
    pub acronym_notes: BTreeSet<String>,
}

fn acronym(c: usize) -> String {
    format!("zq{c}")
}

fn full_form(c: usize) -> String {
    format!("vexal{c} morbid{c}")
}

/// Builds the corpus for `seed`. Note ids are `train-0`, `dev-0`, `test-0`, ...
pub fn generate(config: &SynthConfig, seed: u64) -> Result<SyntheticCorpus> {
    if config.n_codes == 0 || config.max_labels == 0 || config.max_labels > config.n_codes || config.filler_vocab == 0 {
        return Err(Error::InvalidArgument("synthetic corpus needs codes, labels and filler".into()));
    }
    for rate in [config.train_acronym_rate, config.test_acronym_rate] {
        if !(0.0..=1.0).contains(&rate) {
            return Err(Error::InvalidArgument(format!("acronym rate {rate} is outside [0, 1]")));
        }
    }
    let codes = CodeSet::new(
        (0..config.n_codes)
            .map(|c| Code {
                id: format!("S{c:02}"),
                description: full_form(c),
                synonyms: vec![full_form(c), format!("{} disorder", full_form(c)), format!("morbid{c} of vexal{c}")],
            })
            .collect(),
    )?;
    let dictionary = Dictionary::from_pairs((0..config.n_codes).map(|c| (acronym(c), full_form(c))))?;

    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "synthetic"));
    let mut acronym_notes = BTreeSet::new();
    let mut split = |name: &str, n: usize, rate: f64, rng: &mut ChaCha8Rng| -> Vec<Note> {
        (0..n)
            .map(|i| {
                let id = format!("{name}-{i}");
                let mut tokens: Vec<String> = (0..config.filler_tokens)
                    .map(|_| format!("w{}", rng.random_range(0..config.filler_vocab)))
                    .collect();
                let k = rng.random_range(1..=config.max_labels);
                let labels = sample(rng, config.n_codes, k).into_vec();
                for &c in &labels {
                    let at = rng.random_range(0..=tokens.len());
                    let evidence = if rng.random_bool(rate) {
                        acronym_notes.insert(id.clone());
                        acronym(c)
                    } else {
                        full_form(c)
                    };
                    tokens.insert(at, evidence);
                }
                Note {
                    id,
                    text: tokens.join(" "),
                    labels: labels.iter().map(|&c| format!("S{c:02}")).collect(),
                }
            })
            .collect()
    };
    let train = split("train", config.n_train, config.train_acronym_rate, &mut rng);
    let dev = split("dev", config.n_dev, config.train_acronym_rate, &mut rng);
    let test = split("test", config.n_test, config.test_acronym_rate, &mut rng);
    Ok(SyntheticCorpus {
        codes,
        dictionary,
        train,
        dev,
        test,
        acronym_notes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub baseline_micro_f1: f64,
    pub ace_micro_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkResult {
    pub per_seed: Vec<SeedResult>,
    pub mean_baseline: f64,
    pub mean_ace: f64,
    /// `mean_ace - mean_baseline`, in micro-F1 points (×100).
    pub gain_points: f64,
}

/// Micro-F1 on the acronym-bearing test notes after tuning a global
/// threshold on dev.
fn acronym_slice_f1(corpus: &SyntheticCorpus, expanded: Option<&HashMap<String, String>>, config: &TrainConfig) -> Result<f64> {
    let items = build_items(&corpus.train, expanded, &corpus.codes, config)?;
    let outcome = train(&items, corpus.codes.len(), config)?;
    let dev_scores = score_notes(&outcome.params, &corpus.dev, &corpus.codes, config)?;
    let dev_gold = LabelMatrix::from_notes(&corpus.dev, &corpus.codes)?;
    let policy = tune_threshold(&dev_scores, &dev_gold, ThresholdMode::Global)?;
    let slice: Vec<Note> = corpus
        .test
        .iter()
        .filter(|n| corpus.acronym_notes.contains(&n.id))
        .cloned()
        .collect();
    let scores = score_notes(&outcome.params, &slice, &corpus.codes, config)?;
    let gold = LabelMatrix::from_notes(&slice, &corpus.codes)?;
    Ok(f1_scores(&binarize(&scores, &policy), &gold)?.micro_f1)
}

/// Trains the baseline (α = 0, P_a = P) and the augmented model (P_a from the
/// mock-expanded note, α from `ace`) for every seed.
pub fn run_benchmark(synth: &SynthConfig, ace: &TrainConfig, seeds: &[u64]) -> Result<BenchmarkResult> {
    if seeds.is_empty() {
        return Err(Error::InvalidArgument("benchmark needs at least one seed".into()));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let corpus = generate(synth, seed)?;
        let expanded: HashMap<String, String> = corpus
            .train
            .iter()
            .map(|n| (n.id.clone(), mock_expand(&n.text, &corpus.dictionary)))
            .collect();
        let ace_config = TrainConfig {
            seed: derive_seed(seed, "train"),
            ..ace.clone()
        };
        let baseline_config = TrainConfig {
            alpha: 0.0,
            ..ace_config.clone()
        };
        per_seed.push(SeedResult {
            seed,
            baseline_micro_f1: acronym_slice_f1(&corpus, None, &baseline_config)?,
            ace_micro_f1: acronym_slice_f1(&corpus, Some(&expanded), &ace_config)?,
        });
    }
    let n = per_seed.len() as f64;
    let mean_baseline = per_seed.iter().map(|r| r.baseline_micro_f1).sum::<f64>() / n;
    let mean_ace = per_seed.iter().map(|r| r.ace_micro_f1).sum::<f64>() / n;
    Ok(BenchmarkResult {
        per_seed,
        mean_baseline,
        mean_ace,
        gain_points: (mean_ace - mean_baseline) * 100.0,
    })
}
