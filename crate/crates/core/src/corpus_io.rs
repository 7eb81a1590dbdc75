//! File formats for notes, codes, candidates, gold expansions and score matrices.
//!
//! | file              | layout                                                  |
//! |-------------------|---------------------------------------------------------|
//! | notes             | one JSON object per line: `id`, `text`, `labels`        |
//! | codes             | `code<TAB>description[<TAB>syn1\|syn2\|...]`            |
//! | candidates        | `note-id<TAB>code1,code2,...` (best first)              |
//! | gold expansions   | `note-id<TAB>abbreviation<TAB>full-form<TAB>occurrence` |
//! | scores            | header row of code ids, then one row of floats per note |
//!
//! Blank lines are ignored everywhere. Parse errors carry the 1-based line number.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Upper bound on the length of a reranking candidate list.
pub const MAX_CANDIDATES: usize = 300;

const SCORES_HEADER: &str = "#note";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Note {
    pub id: String,
    pub text: String,
    #[serde(default)]
    pub labels: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Code {
    pub id: String,
    pub description: String,
    pub synonyms: Vec<String>,
}

/// Ordered code inventory. The position of a code in the file is its column
/// index in every matrix built against this set.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CodeSet {
    codes: Vec<Code>,
    index: HashMap<String, usize>,
}

impl CodeSet {
    pub fn new(codes: Vec<Code>) -> Result<Self> {
        let mut index = HashMap::with_capacity(codes.len());
        for (i, code) in codes.iter().enumerate() {
            if code.id.is_empty() {
                return Err(Error::InvalidArgument(format!("code at position {i} has an empty id")));
            }
            if index.insert(code.id.clone(), i).is_some() {
                return Err(Error::Duplicate {
                    what: "code",
                    id: code.id.clone(),
                });
            }
        }
        Ok(CodeSet { codes, index })
    }

    pub fn len(&self) -> usize {
        self.codes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codes.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn get(&self, id: &str) -> Option<&Code> {
        self.index_of(id).map(|i| &self.codes[i])
    }

    pub fn codes(&self) -> &[Code] {
        &self.codes
    }

    pub fn ids(&self) -> Vec<String> {
        self.codes.iter().map(|c| c.id.clone()).collect()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Code> {
        self.codes.iter()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateList {
    pub note_id: String,
    pub ranked: Vec<String>,
}

impl CandidateList {
    pub fn validate(&self, codes: &CodeSet) -> Result<()> {
        if self.ranked.len() > MAX_CANDIDATES {
            return Err(Error::InvalidArgument(format!(
                "note {} has {} candidates, at most {MAX_CANDIDATES} allowed",
                self.note_id,
                self.ranked.len()
            )));
        }
        let mut seen = HashSet::new();
        for code in &self.ranked {
            if !seen.insert(code.as_str()) {
                return Err(Error::Duplicate {
                    what: "candidate code",
                    id: format!("{} in note {}", code, self.note_id),
                });
            }
            if !codes.contains(code) {
                return Err(Error::UnknownCode {
                    note_id: self.note_id.clone(),
                    code: code.clone(),
                });
            }
        }
        Ok(())
    }
}

/// One gold `(abbreviation, full form)` annotation. `occurrence` counts which
/// appearance of the abbreviation in the note is meant, starting from 0.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldExpansion {
    pub note_id: String,
    pub abbreviation: String,
    pub full_form: String,
    pub occurrence: usize,
}

/// Dense note × code probability matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    note_ids: Vec<String>,
    code_ids: Vec<String>,
    scores: Vec<f64>,
}

impl ScoreMatrix {
    pub fn new(note_ids: Vec<String>, code_ids: Vec<String>, scores: Vec<f64>) -> Result<Self> {
        check_ids("note id", &note_ids)?;
        check_ids("code id", &code_ids)?;
        if scores.len() != note_ids.len() * code_ids.len() {
            return Err(Error::Shape(format!(
                "{} scores for {} notes × {} codes",
                scores.len(),
                note_ids.len(),
                code_ids.len()
            )));
        }
        for (k, &value) in scores.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                let (r, c) = (k / code_ids.len(), k % code_ids.len());
                return Err(Error::ScoreOutOfRange {
                    note_id: note_ids[r].clone(),
                    code_id: code_ids[c].clone(),
                    value,
                });
            }
        }
        Ok(ScoreMatrix {
            note_ids,
            code_ids,
            scores,
        })
    }

    pub fn n_notes(&self) -> usize {
        self.note_ids.len()
    }

    pub fn n_codes(&self) -> usize {
        self.code_ids.len()
    }

    pub fn note_ids(&self) -> &[String] {
        &self.note_ids
    }

    pub fn code_ids(&self) -> &[String] {
        &self.code_ids
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.scores[row * self.code_ids.len() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let n = self.code_ids.len();
        &self.scores[row * n..(row + 1) * n]
    }

    pub fn values(&self) -> &[f64] {
        &self.scores
    }

    pub(crate) fn with_values(&self, scores: Vec<f64>) -> ScoreMatrix {
        debug_assert_eq!(scores.len(), self.scores.len());
        ScoreMatrix {
            note_ids: self.note_ids.clone(),
            code_ids: self.code_ids.clone(),
            scores,
        }
    }
}

/// Dense note × code binary matrix, row-major. Used both for gold labels and
/// for binarized predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMatrix {
    note_ids: Vec<String>,
    code_ids: Vec<String>,
    cells: Vec<bool>,
}

impl LabelMatrix {
    pub fn new(note_ids: Vec<String>, code_ids: Vec<String>, cells: Vec<bool>) -> Result<Self> {
        check_ids("note id", &note_ids)?;
        check_ids("code id", &code_ids)?;
        if cells.len() != note_ids.len() * code_ids.len() {
            return Err(Error::Shape(format!(
                "{} cells for {} notes × {} codes",
                cells.len(),
                note_ids.len(),
                code_ids.len()
            )));
        }
        Ok(LabelMatrix {
            note_ids,
            code_ids,
            cells,
        })
    }

    /// Gold matrix for `notes` over the full code set.
    pub fn from_notes(notes: &[Note], codes: &CodeSet) -> Result<Self> {
        let mut cells = vec![false; notes.len() * codes.len()];
        for (r, note) in notes.iter().enumerate() {
            for label in &note.labels {
                let c = codes.index_of(label).ok_or_else(|| Error::UnknownCode {
                    note_id: note.id.clone(),
                    code: label.clone(),
                })?;
                cells[r * codes.len() + c] = true;
            }
        }
        LabelMatrix::new(notes.iter().map(|n| n.id.clone()).collect(), codes.ids(), cells)
    }

    pub fn n_notes(&self) -> usize {
        self.note_ids.len()
    }

    pub fn n_codes(&self) -> usize {
        self.code_ids.len()
    }

    pub fn note_ids(&self) -> &[String] {
        &self.note_ids
    }

    pub fn code_ids(&self) -> &[String] {
        &self.code_ids
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.cells[row * self.code_ids.len() + col]
    }

    pub fn row(&self, row: usize) -> &[bool] {
        let n = self.code_ids.len();
        &self.cells[row * n..(row + 1) * n]
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    /// Rows reordered to follow `note_ids`, which must be a permutation of
    /// this matrix's rows.
    pub fn reorder_rows(&self, note_ids: &[String]) -> Result<LabelMatrix> {
        let position: HashMap<&str, usize> = self
            .note_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.as_str(), i))
            .collect();
        if note_ids.len() != self.note_ids.len() {
            return Err(Error::Shape(format!(
                "expected {} notes, got {}",
                self.note_ids.len(),
                note_ids.len()
            )));
        }
        let mut cells = Vec::with_capacity(self.cells.len());
        for id in note_ids {
            let r = *position
                .get(id.as_str())
                .ok_or_else(|| Error::Shape(format!("note {id} has no gold labels")))?;
            cells.extend_from_slice(self.row(r));
        }
        LabelMatrix::new(note_ids.to_vec(), self.code_ids.clone(), cells)
    }
}

fn check_ids(what: &'static str, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for id in ids {
        if id.is_empty() || id.contains(['\t', '\n', '\r']) {
            return Err(Error::InvalidArgument(format!("{what} {id:?} is empty or contains tabs/newlines")));
        }
        if !seen.insert(id.as_str()) {
            return Err(Error::Duplicate { what, id: id.clone() });
        }
    }
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Non-blank lines with their 1-based line numbers.
fn lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line = line.strip_suffix('\r').map(str::to_owned).unwrap_or(line);
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

/// Reads a file of one JSON value per line.
pub fn read_jsonl<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    lines(path)?
        .into_iter()
        .map(|(n, line)| serde_json::from_str(&line).map_err(|e| Error::parse(path, n, e.to_string())))
        .collect()
}

pub fn write_jsonl<'a, T: Serialize + 'a>(
    path: impl AsRef<Path>,
    records: impl IntoIterator<Item = &'a T>,
) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for record in records {
        let line = serde_json::to_string(record).map_err(|e| Error::parse(path, 0, e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_notes(path: impl AsRef<Path>) -> Result<Vec<Note>> {
    let path = path.as_ref();
    let notes: Vec<Note> = read_jsonl(path)?;
    let mut seen = HashSet::new();
    for note in &notes {
        if note.id.is_empty() {
            return Err(Error::InvalidArgument(format!("{}: note with empty id", path.display())));
        }
        if !seen.insert(note.id.as_str()) {
            return Err(Error::Duplicate {
                what: "note id",
                id: note.id.clone(),
            });
        }
    }
    Ok(notes)
}

pub fn save_notes(notes: &[Note], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(path, notes)
}

pub fn load_codes(path: impl AsRef<Path>) -> Result<CodeSet> {
    let path = path.as_ref();
    let mut codes = Vec::new();
    for (n, line) in lines(path)? {
        let mut fields = line.split('\t');
        let id = fields.next().unwrap_or_default().trim();
        let description = fields
            .next()
            .ok_or_else(|| Error::parse(path, n, "expected code<TAB>description"))?
            .trim();
        if id.is_empty() {
            return Err(Error::parse(path, n, "empty code id"));
        }
        let synonyms = fields
            .next()
            .map(|s| {
                s.split('|')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(str::to_owned)
                    .collect()
            })
            .unwrap_or_default();
        if fields.next().is_some() {
            return Err(Error::parse(path, n, "too many fields"));
        }
        codes.push(Code {
            id: id.to_owned(),
            description: description.to_owned(),
            synonyms,
        });
    }
    CodeSet::new(codes)
}

pub fn save_codes(codes: &CodeSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for code in codes.iter() {
        let res = if code.synonyms.is_empty() {
            writeln!(w, "{}\t{}", code.id, code.description)
        } else {
            writeln!(w, "{}\t{}\t{}", code.id, code.description, code.synonyms.join("|"))
        };
        res.map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads notes and codes, checking every label against the code set.
pub fn load_corpus(notes_path: impl AsRef<Path>, codes_path: impl AsRef<Path>) -> Result<(Vec<Note>, CodeSet)> {
    let codes = load_codes(codes_path)?;
    let notes = load_notes(notes_path)?;
    for note in &notes {
        if let Some(code) = note.labels.iter().find(|l| !codes.contains(l)) {
            return Err(Error::UnknownCode {
                note_id: note.id.clone(),
                code: code.clone(),
            });
        }
    }
    Ok((notes, codes))
}

pub fn load_candidates(path: impl AsRef<Path>, codes: &CodeSet) -> Result<Vec<CandidateList>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (n, line) in lines(path)? {
        let (note_id, ranked) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(path, n, "expected note-id<TAB>codes"))?;
        let list = CandidateList {
            note_id: note_id.trim().to_owned(),
            ranked: ranked
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(str::to_owned)
                .collect(),
        };
        list.validate(codes).map_err(|e| Error::parse(path, n, e.to_string()))?;
        out.push(list);
    }
    Ok(out)
}

pub fn save_candidates(lists: &[CandidateList], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for list in lists {
        writeln!(w, "{}\t{}", list.note_id, list.ranked.join(",")).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_gold_expansions(path: impl AsRef<Path>) -> Result<Vec<GoldExpansion>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (n, line) in lines(path)? {
        let fields: Vec<&str> = line.split('\t').collect();
        let [note_id, abbreviation, full_form, occurrence] = fields[..] else {
            return Err(Error::parse(
                path,
                n,
                format!("expected 4 tab-separated fields, found {}", fields.len()),
            ));
        };
        let occurrence = occurrence
            .trim()
            .parse()
            .map_err(|_| Error::parse(path, n, format!("bad occurrence index {occurrence:?}")))?;
        if abbreviation.trim().is_empty() || full_form.trim().is_empty() {
            return Err(Error::parse(path, n, "empty abbreviation or full form"));
        }
        out.push(GoldExpansion {
            note_id: note_id.trim().to_owned(),
            abbreviation: abbreviation.trim().to_owned(),
            full_form: full_form.trim().to_owned(),
            occurrence,
        });
    }
    Ok(out)
}

pub fn save_gold_expansions(gold: &[GoldExpansion], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for g in gold {
        writeln!(w, "{}\t{}\t{}\t{}", g.note_id, g.abbreviation, g.full_form, g.occurrence)
            .map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes scores as tab-separated text. Floats use the shortest representation
/// that parses back to the same `f64`, so a save/load cycle is exact.
pub fn save_scores(matrix: &ScoreMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    let io = |e| Error::io(path, e);
    write!(w, "{SCORES_HEADER}").map_err(io)?;
    for code in matrix.code_ids() {
        write!(w, "\t{code}").map_err(io)?;
    }
    writeln!(w).map_err(io)?;
    for (r, note) in matrix.note_ids().iter().enumerate() {
        write!(w, "{note}").map_err(io)?;
        for v in matrix.row(r) {
            write!(w, "\t{v}").map_err(io)?;
        }
        writeln!(w).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn load_scores(path: impl AsRef<Path>) -> Result<ScoreMatrix> {
    let path = path.as_ref();
    let mut rows = lines(path)?.into_iter();
    let (n, header) = rows
        .next()
        .ok_or_else(|| Error::parse(path, 1, "missing header row"))?;
    let mut header = header.split('\t');
    if header.next() != Some(SCORES_HEADER) {
        return Err(Error::parse(path, n, format!("header must start with {SCORES_HEADER:?}")));
    }
    let code_ids: Vec<String> = header.map(str::to_owned).collect();
    let mut note_ids = Vec::new();
    let mut scores = Vec::new();
    for (n, line) in rows {
        let mut fields = line.split('\t');
        let note = fields.next().unwrap_or_default().to_owned();
        let before = scores.len();
        for field in fields {
            let v: f64 = field
                .parse()
                .map_err(|_| Error::parse(path, n, format!("bad score {field:?}")))?;
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::parse(path, n, format!("score {v} is outside [0, 1]")));
            }
            scores.push(v);
        }
        if scores.len() - before != code_ids.len() {
            return Err(Error::parse(
                path,
                n,
                format!("expected {} scores, found {}", code_ids.len(), scores.len() - before),
            ));
        }
        note_ids.push(note);
    }
    ScoreMatrix::new(note_ids, code_ids, scores).map_err(|e| Error::parse(path, 0, e.to_string()))
}
