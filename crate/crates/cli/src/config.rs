use std::path::{Path, PathBuf};

use ace_icd::coding_eval::{ThresholdMode, DEFAULT_ROUNDS};
use ace_icd::expander::ExpanderConfig;
use ace_icd::expansion_eval::DEFAULT_LENIENT_THRESHOLD;
use ace_icd::prompts::{DEFAULT_CHUNK_SIZE, DEFAULT_MASK};
use ace_icd::segmenter::{DEFAULT_DROPPABLE, DEFAULT_TOKEN_BUDGET};
use ace_icd::synthetic::SynthConfig;
use ace_icd::trainer::TrainConfig;
use anyhow::{bail, Context, Result};
use serde::Deserialize;

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct Paths {
    pub notes: Option<PathBuf>,
    pub codes: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    pub gold_expansions: Option<PathBuf>,
    pub dictionary: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct SegmentConfig {
    pub token_budget: usize,
    pub droppable: Vec<String>,
    /// Regex removed from note text before segmenting.
    pub strip_pattern: Option<String>,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            token_budget: DEFAULT_TOKEN_BUDGET,
            droppable: DEFAULT_DROPPABLE.iter().map(|s| s.to_string()).collect(),
            strip_pattern: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct PromptConfig {
    pub mask_token: String,
    pub chunk_size: usize,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            mask_token: DEFAULT_MASK.into(),
            chunk_size: DEFAULT_CHUNK_SIZE,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct EvalConfig {
    pub threshold_mode: ThresholdMode,
    pub k: Vec<usize>,
    pub perm_rounds: usize,
    pub seeds: Vec<u64>,
    pub lenient_threshold: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            threshold_mode: ThresholdMode::Global,
            k: vec![5],
            perm_rounds: DEFAULT_ROUNDS,
            seeds: vec![0, 1, 2, 3, 4],
            lenient_threshold: DEFAULT_LENIENT_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub segment: SegmentConfig,
    pub expander: ExpanderConfig,
    pub prompts: PromptConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub synth: SynthConfig,
}

fn rebase(base: &Path, path: &mut Option<PathBuf>) {
    if let Some(p) = path {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}

impl PipelineConfig {
    /// Reads a TOML config. Relative paths in it resolve against the file's
    /// directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut config: PipelineConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        let p = &mut config.paths;
        for field in [
            &mut p.notes,
            &mut p.codes,
            &mut p.candidates,
            &mut p.gold_expansions,
            &mut p.dictionary,
            &mut p.cache_dir,
            &mut p.output_dir,
        ] {
            rebase(base, field);
        }
        if config.paths.cache_dir.is_none() && config.expander.cache_dir.is_relative() {
            config.expander.cache_dir = base.join(&config.expander.cache_dir);
        }
        Ok(config)
    }

    pub fn finish(mut self) -> Result<Self> {
        if let Some(dir) = &self.paths.cache_dir {
            self.expander.cache_dir = dir.clone();
        }
        if self.eval.seeds.is_empty() {
            bail!("eval.seeds must not be empty");
        }
        self.expander.validate()?;
        self.train.validate()?;
        Ok(self)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.paths.output_dir.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}
