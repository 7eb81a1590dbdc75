//! Section-wise acronym expansion.
//!
//! Every section of a note is sent through a fixed three-turn chat prompt and
//! the replies are concatenated, in order, into the expanded note. Three modes
//! are supported:
//!
//! * `live` asks a chat-completions endpoint, consulting and filling the
//!   on-disk [`ResponseCache`] first;
//! * `cache-only` answers strictly from the cache and fails on a miss;
//! * `mock` rewrites text offline with a [`Dictionary`].
//!
//! Leading and trailing whitespace of each request piece is kept out of the
//! prompt and re-attached to the reply, so section boundaries and line breaks
//! survive expansion.

mod cache;
mod client;
mod mock;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cache::{cache_key, ResponseCache};
pub use client::{
    clean_response, parse_response, user_message, ChatEndpoint, ChatMessage, ChatRequest, HttpEndpoint,
    ASSISTANT_PREFIX, INSTRUCTION, SYSTEM_MESSAGE,
};
pub use mock::{mock_expand, Dictionary};

use crate::segmenter::{token_count, Section};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpansionMode {
    Live,
    Mock,
    CacheOnly,
}

impl std::str::FromStr for ExpansionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "live" => Ok(ExpansionMode::Live),
            "mock" => Ok(ExpansionMode::Mock),
            "cache-only" => Ok(ExpansionMode::CacheOnly),
            other => Err(Error::InvalidArgument(format!("unknown expansion mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, rename_all = "kebab-case", deny_unknown_fields)]
pub struct ExpanderConfig {
    pub endpoint_url: String,
    pub model: String,
    pub max_inflight: usize,
    pub temperature: f64,
    pub cache_dir: PathBuf,
    pub mode: ExpansionMode,
    /// Extra attempts after a failed request.
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
    pub timeout_secs: u64,
    /// Sections longer than this many whitespace tokens are sent in
    /// sentence-aligned pieces.
    pub request_budget_tokens: usize,
    pub max_response_tokens: Option<u32>,
}

impl Default for ExpanderConfig {
    fn default() -> Self {
        ExpanderConfig {
            endpoint_url: "http://localhost:8000/v1/chat/completions".into(),
            model: "meta-llama/Llama-3.1-70B-Instruct".into(),
            max_inflight: 4,
            temperature: 0.0,
            cache_dir: PathBuf::from("cache"),
            mode: ExpansionMode::Mock,
            max_retries: 3,
            retry_backoff_ms: 500,
            timeout_secs: 120,
            request_budget_tokens: 1024,
            max_response_tokens: None,
        }
    }
}

impl ExpanderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_inflight == 0 {
            return Err(Error::InvalidArgument("max-inflight must be at least 1".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "temperature must be non-negative, got {}",
                self.temperature
            )));
        }
        if self.request_budget_tokens == 0 {
            return Err(Error::InvalidArgument("request-budget-tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Llm,
    Mock,
    Cache,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedSection {
    pub original: String,
    pub expanded: String,
    pub source: Source,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedNote {
    pub note_id: String,
    pub expanded_text: String,
    pub sections: Vec<ExpandedSection>,
}

impl ExpandedNote {
    /// The original note text, reassembled from the sections.
    pub fn original_text(&self) -> String {
        self.sections.iter().map(|s| s.original.as_str()).collect()
    }
}

/// Splits after sentence-final punctuation (`.`, `?`, `!`) followed by
/// whitespace; the whitespace stays with the preceding sentence. The pieces
/// tile `text`.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((_, c)) = chars.next() {
        if !matches!(c, '.' | '?' | '!') || !chars.peek().is_some_and(|(_, n)| n.is_whitespace()) {
            continue;
        }
        let mut end = text.len();
        while let Some(&(i, n)) = chars.peek() {
            if !n.is_whitespace() {
                end = i;
                break;
            }
            chars.next();
        }
        out.push(&text[start..end]);
        start = end;
    }
    if start < text.len() {
        out.push(&text[start..]);
    }
    out
}

/// Groups sentences into request pieces of at most `budget` tokens. A single
/// sentence over budget becomes its own piece.
pub fn split_for_request(text: &str, budget: usize) -> Vec<&str> {
    if token_count(text) <= budget {
        return vec![text];
    }
    let mut pieces = Vec::new();
    let (mut start, mut end, mut tokens) = (0usize, 0usize, 0usize);
    for sentence in split_sentences(text) {
        let n = token_count(sentence);
        if tokens > 0 && tokens + n > budget {
            pieces.push(&text[start..end]);
            start = end;
            tokens = 0;
        }
        end += sentence.len();
        tokens += n;
    }
    if start < text.len() {
        pieces.push(&text[start..]);
    }
    pieces
}

fn split_whitespace_edges(s: &str) -> (&str, &str, &str) {
    let core_start = s.len() - s.trim_start().len();
    let core_end = s.trim_end().len().max(core_start);
    (&s[..core_start], &s[core_start..core_end], &s[core_end..])
}

struct Job<'a> {
    note: usize,
    section: usize,
    piece: &'a str,
}

pub struct Expander {
    config: ExpanderConfig,
    endpoint: Option<Arc<dyn ChatEndpoint>>,
    dictionary: Option<Dictionary>,
    cache: ResponseCache,
    pool: rayon::ThreadPool,
}

impl Expander {
    /// Live mode needs an endpoint and mock mode a dictionary; cache-only needs
    /// neither.
    pub fn new(
        config: ExpanderConfig,
        endpoint: Option<Arc<dyn ChatEndpoint>>,
        dictionary: Option<Dictionary>,
    ) -> Result<Self> {
        config.validate()?;
        match config.mode {
            ExpansionMode::Live if endpoint.is_none() => {
                return Err(Error::InvalidArgument("live mode requires an endpoint".into()))
            }
            ExpansionMode::Mock if dictionary.is_none() => {
                return Err(Error::InvalidArgument("mock mode requires a dictionary".into()))
            }
            _ => {}
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(config.max_inflight)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
        let cache = ResponseCache::new(&config.cache_dir);
        Ok(Expander {
            config,
            endpoint,
            dictionary,
            cache,
            pool,
        })
    }

    pub fn config(&self) -> &ExpanderConfig {
        &self.config
    }

    pub fn expand_note(&self, note_id: &str, sections: &[Section]) -> Result<ExpandedNote> {
        let mut out = self.expand_notes(&[(note_id.to_owned(), sections.to_vec())])?;
        Ok(out.remove(0))
    }

    /// Expands several notes, sharing the `max-inflight` request limit across
    /// all of them. Output order follows input order.
    pub fn expand_notes(&self, notes: &[(String, Vec<Section>)]) -> Result<Vec<ExpandedNote>> {
        let budget = self.config.request_budget_tokens;
        let jobs: Vec<Job<'_>> = notes
            .iter()
            .enumerate()
            .flat_map(|(n, (_, sections))| {
                sections.iter().enumerate().flat_map(move |(s, section)| {
                    split_for_request(&section.text, budget)
                        .into_iter()
                        .map(move |piece| Job {
                            note: n,
                            section: s,
                            piece,
                        })
                })
            })
            .collect();

        let results: Vec<(String, Option<Source>)> = self.pool.install(|| {
            jobs.par_iter()
                .map(|job| {
                    self.expand_piece(job.piece).map_err(|message| Error::Expansion {
                        note_id: notes[job.note].0.clone(),
                        section: job.section,
                        message,
                    })
                })
                .collect::<Result<_>>()
        })?;

        let mut expanded: Vec<ExpandedNote> = notes
            .iter()
            .map(|(id, sections)| ExpandedNote {
                note_id: id.clone(),
                expanded_text: String::new(),
                sections: sections
                    .iter()
                    .map(|s| ExpandedSection {
                        original: s.text.clone(),
                        expanded: String::new(),
                        source: self.idle_source(),
                    })
                    .collect(),
            })
            .collect();
        let mut seen_source = vec![Vec::new(); notes.len()];
        for (n, sections) in notes.iter().enumerate() {
            seen_source[n] = vec![None; sections.1.len()];
        }
        for (job, (text, source)) in jobs.iter().zip(results) {
            let section = &mut expanded[job.note].sections[job.section];
            section.expanded.push_str(&text);
            let slot: &mut Option<Source> = &mut seen_source[job.note][job.section];
            *slot = strongest(*slot, source);
        }
        for (note, sources) in expanded.iter_mut().zip(seen_source) {
            for (section, source) in note.sections.iter_mut().zip(sources) {
                if let Some(source) = source {
                    section.source = source;
                }
            }
            note.expanded_text = note.sections.iter().map(|s| s.expanded.as_str()).collect();
        }
        Ok(expanded)
    }

    /// Source recorded for a section that needed no request (whitespace only).
    fn idle_source(&self) -> Source {
        match self.config.mode {
            ExpansionMode::Live => Source::Llm,
            ExpansionMode::Mock => Source::Mock,
            ExpansionMode::CacheOnly => Source::Cache,
        }
    }

    fn expand_piece(&self, piece: &str) -> std::result::Result<(String, Option<Source>), String> {
        let (lead, core, trail) = split_whitespace_edges(piece);
        if core.is_empty() {
            return Ok((piece.to_owned(), None));
        }
        let (reply, source) = match self.config.mode {
            ExpansionMode::Mock => {
                let dictionary = self.dictionary.as_ref().expect("checked in Expander::new");
                (mock_expand(core, dictionary), Source::Mock)
            }
            ExpansionMode::Live | ExpansionMode::CacheOnly => {
                let request = ChatRequest::expansion(
                    &self.config.model,
                    core,
                    self.config.temperature,
                    self.config.max_response_tokens,
                );
                let key = cache_key(&self.config.model, &request.prompt_bytes());
                match self.cache.get(&key).map_err(|e| e.to_string())? {
                    Some(raw) => (clean_response(&raw).to_owned(), Source::Cache),
                    None if self.config.mode == ExpansionMode::CacheOnly => {
                        return Err(Error::CacheMiss(key).to_string());
                    }
                    None => {
                        let raw = self.request_with_retries(&request)?;
                        self.cache.put(&key, &raw).map_err(|e| e.to_string())?;
                        (clean_response(&raw).to_owned(), Source::Llm)
                    }
                }
            }
        };
        Ok((format!("{lead}{reply}{trail}"), Some(source)))
    }

    fn request_with_retries(&self, request: &ChatRequest) -> std::result::Result<String, String> {
        let endpoint = self.endpoint.as_ref().expect("checked in Expander::new");
        let mut attempt = 0;
        loop {
            match endpoint.complete(request) {
                Ok(reply) => {
                    debug!("endpoint replied after {} attempt(s)", attempt + 1);
                    return Ok(reply);
                }
                Err(e) if attempt < self.config.max_retries => {
                    let wait = self.config.retry_backoff_ms.saturating_mul(1 << attempt.min(16));
                    warn!("request failed ({e}); retrying in {wait} ms");
                    std::thread::sleep(Duration::from_millis(wait));
                    attempt += 1;
                }
                Err(e) => return Err(format!("giving up after {} attempt(s): {e}", attempt + 1)),
            }
        }
    }
}

fn strongest(current: Option<Source>, next: Option<Source>) -> Option<Source> {
    let rank = |s: Option<Source>| match s {
        None => 0,
        Some(Source::Mock) => 1,
        Some(Source::Cache) => 2,
        Some(Source::Llm) => 3,
    };
    if rank(next) > rank(current) {
        next
    } else {
        current
    }
}
