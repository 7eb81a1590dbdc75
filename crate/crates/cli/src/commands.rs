use std::collections::HashMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use ace_icd::aligner::extract_note_pairs;
use ace_icd::coding_eval::{self, compute_report, mean_reports, permutation_test, Metric, MetricsReport, ThresholdMode, ThresholdPolicy};
use ace_icd::corpus_io::{
    self, load_codes, load_corpus, load_gold_expansions, load_notes, load_scores, read_jsonl, save_codes, save_notes, save_scores,
    write_jsonl, CandidateList, CodeSet, LabelMatrix, Note, ScoreMatrix,
};
use ace_icd::expander::{ChatEndpoint, Dictionary, ExpandedNote, Expander, ExpansionMode, HttpEndpoint};
use ace_icd::expansion_eval::{evaluate, NoteExpansions};
use ace_icd::prompts::{build_prompt, chunk_candidates, description_entries, sample_synonyms, Prompt, PromptSpec};
use ace_icd::seed::derive_seed;
use ace_icd::segmenter::{reduce_to_budget, segment as split_sections, strip_pattern, Section};
use ace_icd::synthetic::{generate, run_benchmark};
use ace_icd::trainer::{self, build_items, load_checkpoint, save_checkpoint, score_notes, TrainConfig};
use anyhow::{anyhow, bail, Context as _, Result};
use clap::Args;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::config::PipelineConfig;

pub const API_KEY_VAR: &str = "ACE_ICD_API_KEY";

pub const SECTIONS: &str = "sections.jsonl";
pub const EXPANDED: &str = "expanded.jsonl";
pub const PAIRS: &str = "pairs.jsonl";
pub const EXPANSION_REPORT: &str = "expansion_report.json";
pub const PROMPTS: &str = "prompts.jsonl";
pub const MODEL: &str = "model.ckpt";
pub const LOSS_TRACE: &str = "loss_trace.jsonl";
pub const TRAIN_CONFIG: &str = "train_config.json";
pub const SCORES: &str = "scores.tsv";
pub const THRESHOLD: &str = "threshold.json";
pub const METRICS: &str = "metrics.json";
pub const PERM_TEST: &str = "perm_test.json";
pub const REPORT: &str = "report.json";
pub const BENCHMARK: &str = "benchmark.json";

/// An input file that a previous command should have written.
#[derive(Debug)]
pub struct MissingArtifact {
    pub path: PathBuf,
    pub producer: &'static str,
}

impl fmt::Display for MissingArtifact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} not found; run `ace-icd {}` first", self.path.display(), self.producer)
    }
}

impl std::error::Error for MissingArtifact {}

/// Machine-readable error class for the stderr record.
pub fn error_kind(err: &anyhow::Error) -> &'static str {
    if err.downcast_ref::<MissingArtifact>().is_some() {
        return "missing-artifact";
    }
    if let Some(e) = err.chain().find_map(|e| e.downcast_ref::<ace_icd::Error>()) {
        return match e {
            ace_icd::Error::Io { .. } => "io",
            ace_icd::Error::Parse { .. } => "parse",
            ace_icd::Error::UnknownCode { .. } => "unknown-code",
            ace_icd::Error::Duplicate { .. } => "duplicate",
            ace_icd::Error::ScoreOutOfRange { .. } => "score-out-of-range",
            ace_icd::Error::Shape(_) => "shape",
            ace_icd::Error::InvalidArgument(_) => "invalid-argument",
            ace_icd::Error::Undefined { .. } => "undefined",
            ace_icd::Error::Expansion { .. } => "expansion",
            ace_icd::Error::CacheMiss(_) => "cache-miss",
            ace_icd::Error::NonFinite { .. } => "non-finite",
            ace_icd::Error::Checkpoint(_) => "checkpoint",
        };
    }
    if err.chain().any(|e| e.downcast_ref::<toml::de::Error>().is_some()) {
        return "config";
    }
    "error"
}

pub struct Context {
    pub config: PipelineConfig,
    out: PathBuf,
}

impl Context {
    pub fn new(config: PipelineConfig) -> Self {
        let out = config.output_dir();
        Context { config, out }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create_out(&self) -> Result<()> {
        std::fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))
    }

    /// An artifact from a previous command: the flag value, else the default
    /// name under the output directory. It must exist.
    fn artifact(&self, flag: &Option<PathBuf>, name: &str, producer: &'static str) -> Result<PathBuf> {
        let path = flag.clone().unwrap_or_else(|| self.out(name));
        require(path, producer)
    }

    /// A user-supplied input: the flag value, else the configured path.
    fn input(&self, flag: &Option<PathBuf>, configured: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
        let path = flag
            .clone()
            .or_else(|| configured.clone())
            .ok_or_else(|| anyhow!("no {what} given; pass --{what} or set paths.{what} in the config"))?;
        if !path.exists() {
            bail!("{what} file {} does not exist", path.display());
        }
        Ok(path)
    }

    fn notes(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        self.input(flag, &self.config.paths.notes, "notes")
    }

    fn codes(&self, flag: &Option<PathBuf>) -> Result<PathBuf> {
        self.input(flag, &self.config.paths.codes, "codes")
    }
}

fn require(path: PathBuf, producer: &'static str) -> Result<PathBuf> {
    if path.exists() {
        Ok(path)
    } else {
        Err(MissingArtifact { path, producer }.into())
    }
}

/// Pretty JSON with a trailing newline.
fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    std::fs::write(path, body).with_context(|| format!("writing {}", path.display()))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let body = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&body).with_context(|| format!("parsing {}", path.display()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectionedNote {
    pub note_id: String,
    pub sections: Vec<Section>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub notes: Option<PathBuf>,
    /// Whitespace-token budget; overrides `segment.token-budget`.
    #[arg(long)]
    pub token_budget: Option<usize>,
}

pub fn segment(ctx: &Context, args: SegmentArgs) -> Result<()> {
    let notes = load_notes(ctx.notes(&args.notes)?)?;
    let cfg = &ctx.config.segment;
    let budget = args.token_budget.unwrap_or(cfg.token_budget);
    let strip = cfg
        .strip_pattern
        .as_deref()
        .map(Regex::new)
        .transpose()
        .context("segment.strip-pattern")?;
    let mut records = Vec::with_capacity(notes.len());
    let mut reduced = 0;
    for note in &notes {
        let text = match &strip {
            Some(re) => strip_pattern(&note.text, re),
            None => note.text.clone(),
        };
        let kept = reduce_to_budget(&split_sections(&text), budget, &cfg.droppable);
        if kept != text {
            reduced += 1;
        }
        records.push(SectionedNote {
            note_id: note.id.clone(),
            sections: split_sections(&kept),
        });
    }
    ctx.create_out()?;
    write_jsonl(ctx.out(SECTIONS), &records)?;
    let n_sections: usize = records.iter().map(|r| r.sections.len()).sum();
    println!("segment: {} notes, {n_sections} sections, {reduced} reduced to budget", records.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct ExpandArgs {
    /// Segmented notes; defaults to the output of `segment`.
    #[arg(long)]
    pub sections: Option<PathBuf>,
    /// live, mock or cache-only.
    #[arg(long)]
    pub mode: Option<ExpansionMode>,
    /// abbreviation<TAB>full-form table for mock mode.
    #[arg(long)]
    pub dictionary: Option<PathBuf>,
    /// Chat-completions URL for live mode. The bearer token is read from ACE_ICD_API_KEY.
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub max_inflight: Option<usize>,
    #[arg(long)]
    pub cache_dir: Option<PathBuf>,
}

pub fn expand(ctx: &Context, args: ExpandArgs) -> Result<()> {
    let sections: Vec<SectionedNote> = read_jsonl(ctx.artifact(&args.sections, SECTIONS, "segment")?)?;
    let mut cfg = ctx.config.expander.clone();
    if let Some(m) = args.mode {
        cfg.mode = m;
    }
    if let Some(e) = args.endpoint {
        cfg.endpoint_url = e;
    }
    if let Some(m) = args.model {
        cfg.model = m;
    }
    if let Some(n) = args.max_inflight {
        cfg.max_inflight = n;
    }
    if let Some(d) = args.cache_dir {
        cfg.cache_dir = d;
    }
    let dictionary = match cfg.mode {
        ExpansionMode::Mock => Some(Dictionary::load(ctx.input(&args.dictionary, &ctx.config.paths.dictionary, "dictionary")?)?),
        _ => None,
    };
    let endpoint: Option<Arc<dyn ChatEndpoint>> = match cfg.mode {
        ExpansionMode::Live => Some(Arc::new(HttpEndpoint::new(
            cfg.endpoint_url.clone(),
            std::env::var(API_KEY_VAR).ok(),
            Duration::from_secs(cfg.timeout_secs),
        )?)),
        _ => None,
    };
    let expander = Expander::new(cfg, endpoint, dictionary)?;
    let jobs: Vec<(String, Vec<Section>)> = sections.into_iter().map(|s| (s.note_id, s.sections)).collect();
    let expanded = expander.expand_notes(&jobs)?;
    ctx.create_out()?;
    write_jsonl(ctx.out(EXPANDED), &expanded)?;
    let changed = expanded.iter().filter(|n| n.expanded_text != n.original_text()).count();
    println!("expand: {} notes, {changed} changed", expanded.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    /// Expanded notes; defaults to the output of `expand`.
    #[arg(long)]
    pub expanded: Option<PathBuf>,
}

pub fn align(ctx: &Context, args: AlignArgs) -> Result<()> {
    let expanded: Vec<ExpandedNote> = read_jsonl(ctx.artifact(&args.expanded, EXPANDED, "expand")?)?;
    let records: Vec<NoteExpansions> = expanded
        .iter()
        .map(|n| {
            let sections: Vec<(&str, &str)> = n.sections.iter().map(|s| (s.original.as_str(), s.expanded.as_str())).collect();
            NoteExpansions {
                note_id: n.note_id.clone(),
                pairs: extract_note_pairs(&sections),
            }
        })
        .collect();
    ctx.create_out()?;
    write_jsonl(ctx.out(PAIRS), &records)?;
    let n_pairs: usize = records.iter().map(|r| r.pairs.len()).sum();
    println!("align: {} notes, {n_pairs} pairs", records.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalExpansionArgs {
    /// Extracted pairs; defaults to the output of `align`.
    #[arg(long)]
    pub pairs: Option<PathBuf>,
    /// note-id<TAB>abbreviation<TAB>full-form<TAB>occurrence.
    #[arg(long)]
    pub gold: Option<PathBuf>,
    /// Similarity at or above which an expansion counts as leniently correct.
    #[arg(long)]
    pub lenient_threshold: Option<f64>,
}

pub fn eval_expansion(ctx: &Context, args: EvalExpansionArgs) -> Result<()> {
    let pairs: Vec<NoteExpansions> = read_jsonl(ctx.artifact(&args.pairs, PAIRS, "align")?)?;
    let gold = load_gold_expansions(ctx.input(&args.gold, &ctx.config.paths.gold_expansions, "gold")?)?;
    let threshold = args.lenient_threshold.unwrap_or(ctx.config.eval.lenient_threshold);
    let report = evaluate(&pairs, &gold, threshold)?;
    ctx.create_out()?;
    write_json(&ctx.out(EXPANSION_REPORT), &report)?;
    println!("{:<12} {:<36} {:<24} {:>8}  verdict", "acronym", "expanded", "full form", "sim");
    for p in &report.per_pair {
        let sim = p.similarity.map_or("-".to_string(), |s| format!("{s:.2}"));
        let verdict = serde_json::to_value(p.verdict)?;
        println!(
            "{:<12} {:<36} {:<24} {:>8}  {}",
            p.abbreviation,
            p.predicted.as_deref().unwrap_or("-"),
            p.full_form,
            sim,
            verdict.as_str().unwrap_or_default()
        );
    }
    print!("{report}");
    println!(
        "eval-expansion: {} gold, strict {:.2}, lenient {:.2}",
        report.n_gold,
        report.strict_accuracy * 100.0,
        report.lenient_accuracy * 100.0
    );
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptVariant {
    Original,
    Augmented,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PromptRecord {
    pub note_id: String,
    pub variant: PromptVariant,
    pub chunk: usize,
    #[serde(flatten)]
    pub prompt: Prompt,
}

#[derive(Debug, Args)]
pub struct BuildPromptsArgs {
    /// Expanded notes; defaults to the output of `expand`.
    #[arg(long)]
    pub expanded: Option<PathBuf>,
    #[arg(long)]
    pub codes: Option<PathBuf>,
    /// Ranked candidates per note (note-id<TAB>code,code,...). Without it every code is a candidate.
    #[arg(long)]
    pub candidates: Option<PathBuf>,
    #[arg(long)]
    pub chunk_size: Option<usize>,
}

pub fn build_prompts(ctx: &Context, args: BuildPromptsArgs) -> Result<()> {
    let expanded: Vec<ExpandedNote> = read_jsonl(ctx.artifact(&args.expanded, EXPANDED, "expand")?)?;
    let codes = load_codes(ctx.codes(&args.codes)?)?;
    let candidates: HashMap<String, CandidateList> = match args.candidates.as_ref().or(ctx.config.paths.candidates.as_ref()) {
        Some(path) => corpus_io::load_candidates(require(path.clone(), "an upstream retriever")?, &codes)?
            .into_iter()
            .map(|c| (c.note_id.clone(), c))
            .collect(),
        None => HashMap::new(),
    };
    let chunk_size = args.chunk_size.unwrap_or(ctx.config.prompts.chunk_size);
    let mask = &ctx.config.prompts.mask_token;
    let descriptions: std::collections::BTreeMap<String, String> = description_entries(&codes).into_iter().collect();
    let synonyms = sample_synonyms(&codes, ctx.config.train.synonyms_per_code, derive_seed(ctx.config.seed, "prompts"));
    let all = CandidateList {
        note_id: String::new(),
        ranked: codes.ids(),
    };

    let mut records = Vec::new();
    for note in &expanded {
        let list = match candidates.get(&note.note_id) {
            Some(list) => list,
            None if candidates.is_empty() => &all,
            None => bail!("note {} has no candidate list", note.note_id),
        };
        for (chunk, ids) in chunk_candidates(list, chunk_size)?.into_iter().enumerate() {
            for (variant, text, display) in [
                (PromptVariant::Original, note.original_text(), &descriptions),
                (PromptVariant::Augmented, note.expanded_text.clone(), &synonyms),
            ] {
                let entries = ids.iter().map(|id| (id.clone(), display[id].clone())).collect();
                records.push(PromptRecord {
                    note_id: note.note_id.clone(),
                    variant,
                    chunk,
                    prompt: build_prompt(&PromptSpec::new(entries, text, mask.as_str())?),
                });
            }
        }
    }
    ctx.create_out()?;
    write_jsonl(ctx.out(PROMPTS), &records)?;
    println!("build-prompts: {} prompts for {} notes", records.len(), expanded.len());
    Ok(())
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub notes: Option<PathBuf>,
    #[arg(long)]
    pub codes: Option<PathBuf>,
    /// Expanded notes for the augmented prompt; defaults to the output of `expand`.
    #[arg(long)]
    pub expanded: Option<PathBuf>,
    /// Train on the original notes only (the augmented prompt repeats the original).
    #[arg(long)]
    pub no_augment: bool,
    /// Consistency weight; overrides `train.alpha`.
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Per-token dropout probability applied to both prompts.
    #[arg(long)]
    pub token_dropout: Option<f64>,
}

fn saved_train_config(ctx: &Context) -> Result<TrainConfig> {
    read_json(&ctx.artifact(&None, TRAIN_CONFIG, "train")?)
}

pub fn train(ctx: &Context, args: TrainArgs) -> Result<()> {
    let (notes, codes) = load_corpus(ctx.notes(&args.notes)?, ctx.codes(&args.codes)?)?;
    let mut cfg = TrainConfig {
        seed: derive_seed(ctx.config.seed, "train"),
        ..ctx.config.train.clone()
    };
    if let Some(a) = args.alpha {
        cfg.alpha = a;
    }
    if let Some(e) = args.epochs {
        cfg.epochs = e;
    }
    if let Some(lr) = args.learning_rate {
        cfg.learning_rate = lr;
    }
    if let Some(d) = args.token_dropout {
        cfg.token_dropout = d;
    }
    cfg.validate()?;
    let expanded = if args.no_augment {
        None
    } else {
        let records: Vec<ExpandedNote> = read_jsonl(ctx.artifact(&args.expanded, EXPANDED, "expand")?)?;
        Some(records.into_iter().map(|n| (n.note_id, n.expanded_text)).collect::<HashMap<_, _>>())
    };
    let items = build_items(&notes, expanded.as_ref(), &codes, &cfg)?;
    let outcome = trainer::train(&items, codes.len(), &cfg)?;
    ctx.create_out()?;
    save_checkpoint(&outcome.params, &cfg, ctx.out(MODEL))?;
    write_jsonl(ctx.out(LOSS_TRACE), &outcome.loss_trace)?;
    write_json(&ctx.out(TRAIN_CONFIG), &cfg)?;
    let last = outcome.loss_trace.last().map_or(f64::NAN, |e| e.loss);
    println!(
        "train: {} notes, {} codes, {} epochs, final loss {last:.6}{}",
        notes.len(),
        codes.len(),
        cfg.epochs,
        if args.no_augment { " (no augmentation)" } else { "" }
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub notes: Option<PathBuf>,
    #[arg(long)]
    pub codes: Option<PathBuf>,
    /// Checkpoint; defaults to the output of `train`.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// File name under the output directory.
    #[arg(long, default_value = SCORES)]
    pub out: String,
}

pub fn score(ctx: &Context, args: ScoreArgs) -> Result<()> {
    let (notes, codes) = load_corpus(ctx.notes(&args.notes)?, ctx.codes(&args.codes)?)?;
    let cfg = saved_train_config(ctx)?;
    let (params, hash) = load_checkpoint(ctx.artifact(&args.model, MODEL, "train")?)?;
    if hash != trainer::config_hash(&cfg) {
        bail!("checkpoint was trained with a different configuration than {TRAIN_CONFIG}");
    }
    let scores = score_notes(&params, &notes, &codes, &cfg)?;
    ctx.create_out()?;
    save_scores(&scores, ctx.out(&args.out))?;
    println!("score: {} notes × {} codes -> {}", scores.n_notes(), scores.n_codes(), args.out);
    Ok(())
}

/// Gold labels aligned to the rows and columns of `scores`.
fn gold_for(scores: &ScoreMatrix, notes: &[Note], codes: &CodeSet) -> Result<LabelMatrix> {
    if scores.code_ids() != codes.ids().as_slice() {
        bail!("score columns do not match the code set");
    }
    Ok(LabelMatrix::from_notes(notes, codes)?.reorder_rows(scores.note_ids())?)
}

fn scores_and_gold(ctx: &Context, scores: &Option<PathBuf>, notes: &Option<PathBuf>, codes: &Option<PathBuf>) -> Result<(ScoreMatrix, LabelMatrix)> {
    let scores = load_scores(ctx.artifact(scores, SCORES, "score")?)?;
    let (notes, codes) = load_corpus(ctx.notes(notes)?, ctx.codes(codes)?)?;
    let gold = gold_for(&scores, &notes, &codes)?;
    Ok((scores, gold))
}

#[derive(Debug, Args)]
pub struct TuneThresholdArgs {
    /// Development scores; defaults to the output of `score`.
    #[arg(long)]
    pub scores: Option<PathBuf>,
    /// Notes carrying the gold labels for the scored rows.
    #[arg(long)]
    pub notes: Option<PathBuf>,
    #[arg(long)]
    pub codes: Option<PathBuf>,
    /// global or per-code.
    #[arg(long)]
    pub mode: Option<ThresholdMode>,
}

pub fn tune_threshold(ctx: &Context, args: TuneThresholdArgs) -> Result<()> {
    let (scores, gold) = scores_and_gold(ctx, &args.scores, &args.notes, &args.codes)?;
    let mode = args.mode.unwrap_or(ctx.config.eval.threshold_mode);
    let policy = coding_eval::tune_threshold(&scores, &gold, mode)?;
    ctx.create_out()?;
    write_json(&ctx.out(THRESHOLD), &policy)?;
    match &policy {
        ThresholdPolicy::Global { value } => println!("tune-threshold: global {value}"),
        ThresholdPolicy::PerCode { values, fallback } => {
            println!("tune-threshold: {} per-code thresholds, fallback {fallback}", values.len())
        }
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct PolicyArgs {
    /// Threshold policy file; defaults to the output of `tune-threshold`.
    #[arg(long)]
    pub threshold: Option<PathBuf>,
    /// Fixed global threshold instead of a policy file.
    #[arg(long, conflicts_with = "threshold")]
    pub threshold_value: Option<f64>,
}

impl PolicyArgs {
    fn resolve(&self, ctx: &Context) -> Result<ThresholdPolicy> {
        let policy = match self.threshold_value {
            Some(v) => ThresholdPolicy::global(v)?,
            None => read_json(&ctx.artifact(&self.threshold, THRESHOLD, "tune-threshold")?)?,
        };
        policy.validate()?;
        Ok(policy)
    }
}

#[derive(Debug, Args)]
pub struct EvalCodingArgs {
    #[arg(long)]
    pub scores: Option<PathBuf>,
    #[arg(long)]
    pub notes: Option<PathBuf>,
    #[arg(long)]
    pub codes: Option<PathBuf>,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Precision@k cut-offs; overrides `eval.k`.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    /// File name under the output directory.
    #[arg(long, default_value = METRICS)]
    pub out: String,
}

pub fn eval_coding(ctx: &Context, args: EvalCodingArgs) -> Result<()> {
    let (scores, gold) = scores_and_gold(ctx, &args.scores, &args.notes, &args.codes)?;
    let policy = args.policy.resolve(ctx)?;
    let ks = args.k.unwrap_or_else(|| ctx.config.eval.k.clone());
    let report = compute_report(&scores, &gold, &policy, &ks)?;
    ctx.create_out()?;
    write_json(&ctx.out(&args.out), &report)?;
    print!("{report}");
    println!(
        "eval-coding: {} notes, micro-F1 {:.2}, macro-F1 {:.2}",
        scores.n_notes(),
        report.micro_f1 * 100.0,
        report.macro_f1 * 100.0
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct PermTestArgs {
    #[arg(long)]
    pub scores_a: PathBuf,
    #[arg(long)]
    pub scores_b: PathBuf,
    #[arg(long)]
    pub notes: Option<PathBuf>,
    #[arg(long)]
    pub codes: Option<PathBuf>,
    /// micro-f1, macro-f1, micro-auc, macro-auc or p@K.
    #[arg(long, default_value = "micro-f1")]
    pub metric: String,
    #[command(flatten)]
    pub policy: PolicyArgs,
    /// Overrides `eval.perm-rounds`.
    #[arg(long)]
    pub rounds: Option<usize>,
}

pub fn perm_test(ctx: &Context, args: PermTestArgs) -> Result<()> {
    let a = load_scores(require(args.scores_a.clone(), "score")?)?;
    let b = load_scores(require(args.scores_b.clone(), "score")?)?;
    let (notes, codes) = load_corpus(ctx.notes(&args.notes)?, ctx.codes(&args.codes)?)?;
    let gold = gold_for(&a, &notes, &codes)?;
    let needs_threshold = args.metric.ends_with("-f1");
    let policy = if needs_threshold {
        args.policy.resolve(ctx)?
    } else {
        ThresholdPolicy::global(0.5)?
    };
    let metric = Metric::parse(&args.metric, policy)?;
    let rounds = args.rounds.unwrap_or(ctx.config.eval.perm_rounds);
    let result = permutation_test(&a, &b, &gold, &metric, rounds, derive_seed(ctx.config.seed, "perm-test"))?;
    ctx.create_out()?;
    write_json(&ctx.out(PERM_TEST), &result)?;
    println!("perm-test: {} diff {:+.6}, p = {}", metric.name(), result.observed_diff, result.p_value);
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Metrics files written by `eval-coding`, one per seed.
    #[arg(required = true)]
    pub metrics: Vec<PathBuf>,
}

pub fn report(ctx: &Context, args: ReportArgs) -> Result<()> {
    let reports = args
        .metrics
        .iter()
        .map(|p| read_json::<MetricsReport>(&require(p.clone(), "eval-coding")?))
        .collect::<Result<Vec<_>>>()?;
    let mean = mean_reports(&reports)?;
    ctx.create_out()?;
    write_json(&ctx.out(REPORT), &mean)?;
    print!("{mean}");
    println!("report: mean of {} runs, micro-F1 {:.2}", mean.runs, mean.micro_f1 * 100.0);
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {}

pub fn synth(ctx: &Context, _args: SynthArgs) -> Result<()> {
    let corpus = generate(&ctx.config.synth, derive_seed(ctx.config.seed, "synth"))?;
    ctx.create_out()?;
    save_notes(&corpus.train, ctx.out("train.jsonl"))?;
    save_notes(&corpus.dev, ctx.out("dev.jsonl"))?;
    save_notes(&corpus.test, ctx.out("test.jsonl"))?;
    let acronym_test: Vec<Note> = corpus
        .test
        .iter()
        .filter(|n| corpus.acronym_notes.contains(&n.id))
        .cloned()
        .collect();
    save_notes(&acronym_test, ctx.out("test_acronym.jsonl"))?;
    save_codes(&corpus.codes, ctx.out("codes.tsv"))?;
    let mut dict = String::new();
    for (abbr, full) in corpus.dictionary.iter() {
        dict.push_str(&format!("{abbr}\t{full}\n"));
    }
    std::fs::write(ctx.out("dictionary.tsv"), dict)?;
    println!(
        "synth: {} train, {} dev, {} test ({} with acronyms), {} codes",
        corpus.train.len(),
        corpus.dev.len(),
        corpus.test.len(),
        acronym_test.len(),
        corpus.codes.len()
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    /// Overrides `eval.seeds`.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
}

pub fn benchmark(ctx: &Context, args: BenchmarkArgs) -> Result<()> {
    let seeds = args.seeds.unwrap_or_else(|| ctx.config.eval.seeds.clone());
    let result = run_benchmark(&ctx.config.synth, &ctx.config.train, &seeds)?;
    ctx.create_out()?;
    write_json(&ctx.out(BENCHMARK), &result)?;
    println!(
        "benchmark: {} seeds, baseline {:.2}, augmented {:.2}, gain {:+.2} points",
        seeds.len(),
        result.mean_baseline * 100.0,
        result.mean_ace * 100.0,
        result.gain_points
    );
    Ok(())
}
