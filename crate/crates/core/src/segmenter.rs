//! Header-based section splitting and the token-budget policy.
//!
//! A line opens a new section when, after optional indentation, it starts with
//! at most six words made of ASCII letters and slashes followed by a colon,
//! e.g. `Past Medical History:` or `hpi:`. Text before the first header forms a
//! preamble section with an empty header. Section slices always tile the note
//! exactly.
//!
//! Offsets are byte offsets into the note.

use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Default whitespace-token budget for model input.
pub const DEFAULT_TOKEN_BUDGET: usize = 8192;

pub const DEFAULT_DROPPABLE: [&str; 4] = [
    "social history",
    "family history",
    "medication on admission",
    "discharge instructions",
];

const MAX_HEADER_WORDS: usize = 6;

static HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^[ \t]*([A-Za-z][A-Za-z/ \t]*?)[ \t]*:").unwrap());

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    /// Normalized header (lowercase, single-spaced); empty for the preamble.
    pub header: String,
    /// The exact slice `note[start..end]`, header line included.
    pub text: String,
    pub start: usize,
    pub end: usize,
    /// Byte length of the header prefix within `text` (through the colon).
    pub header_len: usize,
}

impl Section {
    /// Section content after the header prefix.
    pub fn body(&self) -> &str {
        &self.text[self.header_len..]
    }

    pub fn token_count(&self) -> usize {
        token_count(&self.text)
    }
}

pub fn normalize_header(header: &str) -> String {
    header
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Proxy tokenizer: maximal runs of non-whitespace.
pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// `(header, prefix_len)` if `line` opens a section.
fn match_header(line: &str) -> Option<(String, usize)> {
    let caps = HEADER.captures(line)?;
    let name = caps.get(1)?.as_str();
    if name.split_whitespace().count() > MAX_HEADER_WORDS {
        return None;
    }
    Some((normalize_header(name), caps.get(0)?.end()))
}

pub fn segment(text: &str) -> Vec<Section> {
    // (start offset, header, header_len) for every section opening.
    let mut starts: Vec<(usize, String, usize)> = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if let Some((header, len)) = match_header(line) {
            starts.push((offset, header, len));
        }
        offset += line.len();
    }
    if !text.is_empty() && starts.first().is_none_or(|s| s.0 != 0) {
        starts.insert(0, (0, String::new(), 0));
    }

    let mut sections = Vec::with_capacity(starts.len());
    for (i, (start, header, header_len)) in starts.iter().enumerate() {
        let end = starts.get(i + 1).map_or(text.len(), |s| s.0);
        sections.push(Section {
            header: header.clone(),
            text: text[*start..end].to_owned(),
            start: *start,
            end,
            header_len: *header_len,
        });
    }
    sections
}

/// Byte offset just past the `n`-th whitespace token, or `None` if the text has
/// at most `n` tokens.
fn cut_after_tokens(text: &str, n: usize) -> Option<usize> {
    let mut count = 0;
    let mut in_token = false;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            if in_token {
                in_token = false;
                if count == n {
                    return Some(i);
                }
            }
        } else if !in_token {
            if count == n {
                return Some(i);
            }
            in_token = true;
            count += 1;
        }
    }
    None
}

/// Joins `sections`, dropping droppable sections (in priority order, one at a
/// time) while the total exceeds `budget`, then cutting the result after
/// `budget` tokens. A zero budget yields an empty string.
pub fn reduce_to_budget<S: AsRef<str>>(sections: &[Section], budget: usize, droppable: &[S]) -> String {
    let mut keep = vec![true; sections.len()];
    let mut total: usize = sections.iter().map(Section::token_count).sum();
    'outer: for name in droppable {
        let name = normalize_header(name.as_ref());
        for (i, section) in sections.iter().enumerate() {
            if total <= budget {
                break 'outer;
            }
            if keep[i] && section.header == name {
                keep[i] = false;
                total -= section.token_count();
            }
        }
    }

    let mut joined: String = sections
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(s, _)| s.text.as_str())
        .collect();
    if total > budget {
        if budget == 0 {
            return String::new();
        }
        // Ends exactly at the last kept token; trailing whitespace goes too.
        let tokens_end = cut_after_tokens(&joined, budget).unwrap_or(joined.len());
        let keep_to = joined[..tokens_end].trim_end().len();
        joined.truncate(keep_to);
    }
    joined
}

/// Removes every match of `pattern` (e.g. de-identification placeholders).
pub fn strip_pattern(text: &str, pattern: &Regex) -> String {
    pattern.replace_all(text, "").into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn words(n: usize, w: &str) -> String {
        vec![w; n].join(" ")
    }

    #[test]
    fn single_header_section() {
        let s = segment("past medical history: osteoporosis anemia");
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].header, "past medical history");
        assert_eq!(s[0].body(), " osteoporosis anemia");
    }

    #[test]
    fn empty_text_has_no_sections() {
        assert!(segment("").is_empty());
    }

    #[test]
    fn preamble_and_three_headers() {
        let text = "Admission Date: 2101\nSome preamble\nHPI: s/p tka\nPast Medical History:\n oa, htn\nSocial History: lives alone\n";
        let text = format!("note start\n{text}");
        let s = segment(&text);
        assert_eq!(s.len(), 5);
        assert_eq!(s[0].header, "");
        assert_eq!(s[1].header, "admission date");
        assert_eq!(s[2].header, "hpi");
        assert_eq!(s[3].header, "past medical history");
        assert_eq!(s[4].header, "social history");
        assert_eq!(s.iter().map(|x| x.text.as_str()).collect::<String>(), text);
    }

    #[test]
    fn long_prefix_is_not_a_header() {
        let s = segment("one two three four five six seven: x\n");
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].header, "");
        assert_eq!(segment("b/l knee: pain")[0].header, "b/l knee");
        assert_eq!(segment("bp 120/80: fine")[0].header, "");
    }

    #[test]
    fn under_budget_is_unchanged() {
        let text = "HPI: chest pain\nPlan: discharge home\n";
        let s = segment(text);
        assert_eq!(reduce_to_budget(&s, DEFAULT_TOKEN_BUDGET, &DEFAULT_DROPPABLE), text);
    }

    #[test]
    fn droppable_section_removed_first() {
        let text = format!(
            "Social History: {}\nHospital Course: {}\n",
            words(5998, "etoh"),
            words(4998, "stable")
        );
        let s = segment(&text);
        assert_eq!(s[0].token_count(), 6000);
        assert_eq!(s[1].token_count(), 5000);
        let out = reduce_to_budget(&s, 8192, &DEFAULT_DROPPABLE);
        assert_eq!(token_count(&out), 5000);
        assert!(out.starts_with("Hospital Course:"));
    }

    #[test]
    fn essential_section_truncated() {
        let text = format!("Hospital Course: {}\n", words(8998, "w"));
        let s = segment(&text);
        let out = reduce_to_budget(&s, 8192, &DEFAULT_DROPPABLE);
        assert_eq!(token_count(&out), 8192);
        assert!(text.starts_with(&out));
    }

    #[test]
    fn drops_only_what_is_needed() {
        let text = format!(
            "Social History: {}\nFamily History: {}\nPlan: {}\n",
            words(9, "a"),
            words(9, "b"),
            words(9, "c")
        );
        let s = segment(&text);
        let out = reduce_to_budget(&s, 25, &["family history", "social history"]);
        assert!(out.contains("Social History"));
        assert!(!out.contains("Family History"));
        assert_eq!(token_count(&out), 21);
    }

    #[test]
    fn strips_deid_placeholders() {
        let re = Regex::new(r"\[\*\*[^\]]*\*\*\]").unwrap();
        assert_eq!(strip_pattern("seen by [**Dr. X**] today", &re), "seen by  today");
    }

    fn note_text() -> impl Strategy<Value = String> {
        let line = prop_oneof![
            "[A-Za-z ]{0,20}",
            "[A-Za-z/]{1,8}( [A-Za-z]{1,6}){0,6}:[ a-z0-9]{0,15}",
            "[ \t]*[a-z#0-9./]{1,10}",
            "\\PC{0,12}",
        ];
        (prop::collection::vec(line, 0..10), prop::collection::vec(prop_oneof!["\n", "\r\n", "\n\n"], 10))
            .prop_map(|(lines, seps)| {
                lines
                    .iter()
                    .zip(seps.iter().cycle())
                    .map(|(l, s)| format!("{l}{s}"))
                    .collect()
            })
    }

    proptest! {
        #[test]
        fn sections_tile_the_note(text in note_text()) {
            let sections = segment(&text);
            let mut pos = 0;
            for s in &sections {
                prop_assert_eq!(s.start, pos);
                prop_assert!(s.start < s.end);
                prop_assert_eq!(&text[s.start..s.end], s.text.as_str());
                pos = s.end;
            }
            prop_assert_eq!(pos, text.len());
        }

        #[test]
        fn reduced_output_fits_budget(text in note_text(), budget in 1usize..40) {
            let sections = segment(&text);
            let out = reduce_to_budget(&sections, budget, &DEFAULT_DROPPABLE);
            prop_assert!(token_count(&out) <= budget);
            if token_count(&text) <= budget {
                prop_assert_eq!(out, text);
            }
        }
    }
}
