use std::collections::HashMap;
use std::path::Path;

use crate::{Error, Result};

/// Abbreviation → full form table for offline expansion.
///
/// Keys match case-insensitively and only at token boundaries: the characters
/// immediately before and after a match must not be alphanumeric. At each
/// position the longest matching key wins.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    // (lowercased key, full form), longest key first, ties by key.
    entries: Vec<(String, String)>,
}

impl Dictionary {
    pub fn from_pairs<K, V>(pairs: impl IntoIterator<Item = (K, V)>) -> Result<Self>
    where
        K: AsRef<str>,
        V: Into<String>,
    {
        let mut by_key: HashMap<String, String> = HashMap::new();
        for (key, full) in pairs {
            let key = key.as_ref().trim().to_lowercase();
            let full = full.into();
            if key.is_empty() {
                return Err(Error::InvalidArgument("dictionary key is empty".into()));
            }
            if let Some(prev) = by_key.get(&key) {
                if *prev != full {
                    return Err(Error::Duplicate {
                        what: "dictionary key",
                        id: key,
                    });
                }
            }
            by_key.insert(key, full);
        }
        let mut entries: Vec<(String, String)> = by_key.into_iter().collect();
        entries.sort_by(|a, b| b.0.len().cmp(&a.0.len()).then_with(|| a.0.cmp(&b.0)));
        Ok(Dictionary { entries })
    }

    /// Reads `abbr<TAB>full-form` lines.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let body = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut pairs = Vec::new();
        for (i, line) in body.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (abbr, full) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(path, i + 1, "expected abbr<TAB>full-form"))?;
            if abbr.trim().is_empty() {
                return Err(Error::parse(path, i + 1, "empty abbreviation"));
            }
            pairs.push((abbr.trim().to_owned(), full.trim().to_owned()));
        }
        Dictionary::from_pairs(pairs)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, abbreviation: &str) -> Option<&str> {
        let key = abbreviation.trim().to_lowercase();
        self.entries
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, v)| v.as_str())
    }

    /// Entries in match-priority order (longest key first).
    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    /// Longest key matching at byte offset `at`, with the match length in `text`.
    fn match_at(&self, text: &str, at: usize) -> Option<(usize, &str)> {
        let rest = &text[at..];
        for (key, full) in &self.entries {
            let Some(candidate) = rest.get(..key.len()) else {
                continue;
            };
            if candidate.to_lowercase() != *key {
                continue;
            }
            let next = rest[key.len()..].chars().next();
            if next.is_none_or(|c| !c.is_alphanumeric()) {
                return Some((key.len(), full));
            }
        }
        None
    }
}

/// Replaces every token-bounded dictionary key in `text` with its full form.
pub fn mock_expand(text: &str, dictionary: &Dictionary) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    let mut prev: Option<char> = None;
    while pos < text.len() {
        if prev.is_none_or(|c| !c.is_alphanumeric()) {
            if let Some((len, full)) = dictionary.match_at(text, pos) {
                out.push_str(full);
                prev = text[..pos + len].chars().next_back();
                pos += len;
                continue;
            }
        }
        let ch = text[pos..].chars().next().expect("pos is a char boundary");
        out.push(ch);
        prev = Some(ch);
        pos += ch.len_utf8();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dict(pairs: &[(&str, &str)]) -> Dictionary {
        Dictionary::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn expands_clinical_shorthand() {
        let d = dict(&[("oa", "osteoarthritis"), ("b/l", "bilateral")]);
        assert_eq!(mock_expand("severe b/l oa", &d), "severe bilateral osteoarthritis");
        let d = dict(&[("tka", "total knee arthroplasty")]);
        assert_eq!(mock_expand("tka", &d), "total knee arthroplasty");
        assert_eq!(mock_expand("s/p TKA.", &d), "s/p total knee arthroplasty.");
    }

    #[test]
    fn leaves_plain_text_alone() {
        let d = dict(&[("oa", "osteoarthritis")]);
        assert_eq!(mock_expand("", &d), "");
        assert_eq!(mock_expand("no acronyms here; boa, oat", &d), "no acronyms here; boa, oat");
    }

    #[test]
    fn keys_with_punctuation() {
        let d = dict(&[("p.a.", "physician assistant"), ("pod#15", "post-operative day #15"), ("x3", "three times")]);
        assert_eq!(
            mock_expand("seen by p.a. on pod#15, vomited x3", &d),
            "seen by physician assistant on post-operative day #15, vomited three times"
        );
    }

    /// Applies `order` greedily: at each token start, the first key in
    /// `order` that matches is used.
    fn expand_with_order(text: &str, order: &[(&str, &str)]) -> String {
        let chars: Vec<char> = text.chars().collect();
        let mut out = String::new();
        let mut i = 0;
        'scan: while i < chars.len() {
            if i == 0 || !chars[i - 1].is_alphanumeric() {
                for (k, v) in order {
                    let kc: Vec<char> = k.chars().collect();
                    let end = i + kc.len();
                    if end <= chars.len()
                        && chars[i..end].iter().collect::<String>().to_lowercase() == *k
                        && (end == chars.len() || !chars[end].is_alphanumeric())
                    {
                        out.push_str(v);
                        i = end;
                        continue 'scan;
                    }
                }
            }
            out.push(chars[i]);
            i += 1;
        }
        out
    }

    #[test]
    fn longest_key_wins_regardless_of_order() {
        let pairs = [("uti", "urinary tract infection"), ("ut", "UNUSED")];
        let d = dict(&pairs);
        let got = mock_expand("uti", &d);
        assert_eq!(got, "urinary tract infection");
        assert_eq!(got, expand_with_order("uti", &pairs));
        let reversed = [pairs[1], pairs[0]];
        assert_eq!(got, expand_with_order("uti", &reversed));

        // Keys that are prefixes of one another across a token boundary.
        let pairs = [("s/p", "status post"), ("s", "UNUSED")];
        assert_eq!(mock_expand("s/p tka", &dict(&pairs)), "status post tka");
        assert_eq!(expand_with_order("s/p tka", &[pairs[1], pairs[0]]), "UNUSED/p tka");
    }

    #[test]
    fn dictionary_file_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.tsv");
        std::fs::write(&p, "OA\tosteoarthritis\n\ndvt\tdeep vein thrombosis\n").unwrap();
        let d = Dictionary::load(&p).unwrap();
        assert_eq!(d.get("oa"), Some("osteoarthritis"));
        assert_eq!(d.len(), 2);
        assert!(Dictionary::from_pairs([("", "x")]).is_err());
        assert!(Dictionary::from_pairs([("a", "x"), ("A", "y")]).is_err());
    }

    proptest! {
        #[test]
        fn expansion_is_idempotent_without_nested_keys(
            words in prop::collection::vec("[a-z]{1,4}", 0..20),
            keys in prop::collection::btree_set("[a-z]{1,4}", 1..6),
        ) {
            // Full forms contain no letters, so they never contain a key.
            let pairs: Vec<(String, String)> = keys
                .iter()
                .enumerate()
                .map(|(i, k)| (k.clone(), format!("<{i} {}>", i * 7)))
                .collect();
            let d = Dictionary::from_pairs(pairs.iter().map(|(a, b)| (a.as_str(), b.clone()))).unwrap();
            let text = words.join(" ");
            let once = mock_expand(&text, &d);
            prop_assert_eq!(mock_expand(&once, &d), once.clone());
            let reference: Vec<(&str, &str)> = d.iter().collect();
            prop_assert_eq!(once, expand_with_order(&text, &reference));
        }
    }
}
