//! Pair extraction by aligning an original text with its expanded rewrite.
//!
//! Both texts are split into whitespace tokens and aligned with recursive
//! longest-common-run matching (Ratcliff–Obershelp, no junk heuristic). Every
//! gap between matched runs that is non-empty on both sides becomes one
//! `(abbreviation, expansion)` pair. Offsets are byte offsets.

use std::collections::HashMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};

/// A run of `tokens` identical tokens. Extents are separate per side because
/// the whitespace between tokens may differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignmentBlock {
    pub a_start: usize,
    pub a_end: usize,
    pub b_start: usize,
    pub b_end: usize,
    pub tokens: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpansionPair {
    pub abbreviation: String,
    pub expansion: String,
    pub a_span: Range<usize>,
    pub b_span: Range<usize>,
    /// Earlier token-bounded, case-insensitive occurrences of the
    /// abbreviation in the original.
    pub occurrence: usize,
}

fn tokens(text: &str) -> Vec<(&str, Range<usize>)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                out.push((&text[s..i], s..i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((&text[s..], s..text.len()));
    }
    out
}

/// Longest common run of `a[alo..ahi]` and `b[blo..bhi]`: earliest in `a`,
/// then earliest in `b`. Returns `(i, j, len)`.
fn longest_match(a: &[u32], b: &[u32], b_index: &HashMap<u32, Vec<usize>>, (alo, ahi): (usize, usize), (blo, bhi): (usize, usize)) -> (usize, usize, usize) {
    let (mut best_i, mut best_j, mut best) = (alo, blo, 0);
    // prev[j] = length of the common run ending at a[i - 1], b[j].
    let mut prev: HashMap<usize, usize> = HashMap::new();
    for i in alo..ahi {
        let mut cur = HashMap::new();
        for &j in b_index.get(&a[i]).map(Vec::as_slice).unwrap_or(&[]) {
            if j < blo {
                continue;
            }
            if j >= bhi {
                break;
            }
            let k = if j > blo { prev.get(&(j - 1)).copied().unwrap_or(0) } else { 0 } + 1;
            cur.insert(j, k);
            if k > best {
                best_i = i + 1 - k;
                best_j = j + 1 - k;
                best = k;
            }
        }
        prev = cur;
    }
    debug_assert!(b[best_j..best_j + best] == a[best_i..best_i + best]);
    (best_i, best_j, best)
}

/// Matching token runs `(i, j, len)` in increasing order, adjacent runs merged.
fn matching_runs(a: &[u32], b: &[u32]) -> Vec<(usize, usize, usize)> {
    let mut b_index: HashMap<u32, Vec<usize>> = HashMap::new();
    for (j, t) in b.iter().enumerate() {
        b_index.entry(*t).or_default().push(j);
    }
    let mut runs = Vec::new();
    let mut stack = vec![(0, a.len(), 0, b.len())];
    while let Some((alo, ahi, blo, bhi)) = stack.pop() {
        let (i, j, k) = longest_match(a, b, &b_index, (alo, ahi), (blo, bhi));
        if k == 0 {
            continue;
        }
        runs.push((i, j, k));
        if alo < i && blo < j {
            stack.push((alo, i, blo, j));
        }
        if i + k < ahi && j + k < bhi {
            stack.push((i + k, ahi, j + k, bhi));
        }
    }
    runs.sort_unstable();
    let mut merged: Vec<(usize, usize, usize)> = Vec::with_capacity(runs.len());
    for (i, j, k) in runs {
        match merged.last_mut() {
            Some(last) if last.0 + last.2 == i && last.1 + last.2 == j => last.2 += k,
            _ => merged.push((i, j, k)),
        }
    }
    merged
}

pub fn match_blocks(a: &str, b: &str) -> Vec<AlignmentBlock> {
    let ta = tokens(a);
    let tb = tokens(b);
    let mut ids: HashMap<&str, u32> = HashMap::new();
    let mut ia = Vec::with_capacity(ta.len());
    let mut ib = Vec::with_capacity(tb.len());
    for (toks, out) in [(&ta, &mut ia), (&tb, &mut ib)] {
        for (s, _) in toks.iter() {
            let next = ids.len() as u32;
            out.push(*ids.entry(s).or_insert(next));
        }
    }
    matching_runs(&ia, &ib)
        .into_iter()
        .map(|(i, j, k)| AlignmentBlock {
            a_start: ta[i].1.start,
            a_end: ta[i + k - 1].1.end,
            b_start: tb[j].1.start,
            b_end: tb[j + k - 1].1.end,
            tokens: k,
        })
        .collect()
}

fn trimmed(text: &str, range: Range<usize>) -> Range<usize> {
    let slice = &text[range.clone()];
    let start = range.start + (slice.len() - slice.trim_start().len());
    let end = range.start + slice.trim_end().len();
    start..end.max(start)
}

fn is_boundary(text: &str, at: usize, forward: bool) -> bool {
    let c = if forward { text[at..].chars().next() } else { text[..at].chars().next_back() };
    c.is_none_or(|c| !c.is_alphanumeric())
}

/// Token-bounded, case-insensitive occurrences of `needle` starting before `end`.
fn prior_occurrences(text: &str, needle: &str, end: usize) -> usize {
    let needle = needle.to_lowercase();
    text.char_indices()
        .take_while(|&(i, _)| i < end)
        .filter(|&(i, _)| {
            text[i..].get(..needle.len()).is_some_and(|c| c.to_lowercase() == needle)
                && is_boundary(text, i, false)
                && is_boundary(text, i + needle.len(), true)
        })
        .count()
}

pub fn extract_pairs(original: &str, expanded: &str) -> Vec<ExpansionPair> {
    let blocks = match_blocks(original, expanded);
    let mut gaps = Vec::with_capacity(blocks.len() + 1);
    let (mut a_pos, mut b_pos) = (0, 0);
    for block in &blocks {
        gaps.push((a_pos..block.a_start, b_pos..block.b_start));
        a_pos = block.a_end;
        b_pos = block.b_end;
    }
    gaps.push((a_pos..original.len(), b_pos..expanded.len()));

    let mut pairs = Vec::new();
    for (a_gap, b_gap) in gaps {
        let a_span = trimmed(original, a_gap);
        let b_span = trimmed(expanded, b_gap);
        if a_span.is_empty() || b_span.is_empty() {
            continue;
        }
        let abbreviation = original[a_span.clone()].to_owned();
        let occurrence = prior_occurrences(original, &abbreviation, a_span.start);
        pairs.push(ExpansionPair {
            expansion: expanded[b_span.clone()].to_owned(),
            abbreviation,
            a_span,
            b_span,
            occurrence,
        });
    }
    pairs
}

/// Aligns a note section by section. `sections` holds `(original, expanded)`
/// text per section; spans are shifted to offsets in the concatenated
/// original and expanded notes, and occurrence indices count over the whole
/// original note.
pub fn extract_note_pairs<S: AsRef<str>>(sections: &[(S, S)]) -> Vec<ExpansionPair> {
    let original: String = sections.iter().map(|(o, _)| o.as_ref()).collect();
    let mut pairs = Vec::new();
    let (mut a_off, mut b_off) = (0, 0);
    for (o, e) in sections {
        let (o, e) = (o.as_ref(), e.as_ref());
        for mut p in extract_pairs(o, e) {
            p.a_span = p.a_span.start + a_off..p.a_span.end + a_off;
            p.b_span = p.b_span.start + b_off..p.b_span.end + b_off;
            p.occurrence = prior_occurrences(&original, &p.abbreviation, p.a_span.start);
            pairs.push(p);
        }
        a_off += o.len();
        b_off += e.len();
    }
    pairs
}

/// Replaces each pair's `a_span` in `original` by its expansion.
pub fn apply_pairs(original: &str, pairs: &[ExpansionPair]) -> String {
    let mut sorted: Vec<&ExpansionPair> = pairs.iter().collect();
    sorted.sort_by_key(|p| std::cmp::Reverse(p.a_span.start));
    let mut out = original.to_owned();
    for p in sorted {
        out.replace_range(p.a_span.clone(), &p.expansion);
    }
    out
}

/// Unit-cost edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let next = (diag + usize::from(ca != cb)).min(row[j] + 1).min(row[j + 1] + 1);
            diag = row[j + 1];
            row[j + 1] = next;
        }
    }
    row[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Longest common token run by exhaustive search (earliest in a, then b).
    fn brute_longest(a: &[&str], b: &[&str]) -> (usize, usize, usize) {
        let mut best = (0, 0, 0);
        for i in 0..a.len() {
            for j in 0..b.len() {
                let mut k = 0;
                while i + k < a.len() && j + k < b.len() && a[i + k] == b[j + k] {
                    k += 1;
                }
                if k > best.2 {
                    best = (i, j, k);
                }
            }
        }
        best
    }

    fn brute_blocks(a: &[&str], b: &[&str], off: (usize, usize), out: &mut Vec<(usize, usize, usize)>) {
        let (i, j, k) = brute_longest(a, b);
        if k == 0 {
            return;
        }
        brute_blocks(&a[..i], &b[..j], off, out);
        out.push((off.0 + i, off.1 + j, k));
        brute_blocks(&a[i + k..], &b[j + k..], (off.0 + i + k, off.1 + j + k), out);
    }

    fn token_blocks(a: &str, b: &str) -> Vec<(usize, usize, usize)> {
        let ta = tokens(a);
        let tb = tokens(b);
        match_blocks(a, b)
            .iter()
            .map(|bl| {
                let i = ta.iter().position(|t| t.1.start == bl.a_start).unwrap();
                let j = tb.iter().position(|t| t.1.start == bl.b_start).unwrap();
                (i, j, bl.tokens)
            })
            .collect()
    }

    fn merge(v: Vec<(usize, usize, usize)>) -> Vec<(usize, usize, usize)> {
        let mut out: Vec<(usize, usize, usize)> = Vec::new();
        for (i, j, k) in v {
            match out.last_mut() {
                Some(l) if l.0 + l.2 == i && l.1 + l.2 == j => l.2 += k,
                _ => out.push((i, j, k)),
            }
        }
        out
    }

    #[test]
    fn identity_and_disjoint() {
        let b = match_blocks("a b c", "a b c");
        assert_eq!(b, vec![AlignmentBlock { a_start: 0, a_end: 5, b_start: 0, b_end: 5, tokens: 3 }]);
        assert!(match_blocks("x y", "p q").is_empty());
        assert!(match_blocks("", "").is_empty());
    }

    #[test]
    fn shorthand_against_full_form() {
        let a = "s/p tka today";
        let b = "status post total knee arthroplasty today";
        let blocks = match_blocks(a, b);
        assert_eq!(blocks.len(), 1);
        assert_eq!(&a[blocks[0].a_start..blocks[0].a_end], "today");
        assert_eq!(&b[blocks[0].b_start..blocks[0].b_end], "today");
        let ta: Vec<&str> = a.split_whitespace().collect();
        let tb: Vec<&str> = b.split_whitespace().collect();
        let mut oracle = Vec::new();
        brute_blocks(&ta, &tb, (0, 0), &mut oracle);
        assert_eq!(token_blocks(a, b), merge(oracle));

        let pairs = extract_pairs(a, b);
        assert_eq!(pairs.len(), 1);
        assert_eq!(pairs[0].abbreviation, "s/p tka");
        assert_eq!(pairs[0].expansion, "status post total knee arthroplasty");
    }

    #[test]
    fn single_pair() {
        let pairs = extract_pairs("severe oa", "severe osteoarthritis");
        assert_eq!(pairs.len(), 1);
        let p = &pairs[0];
        assert_eq!((p.abbreviation.as_str(), p.expansion.as_str()), ("oa", "osteoarthritis"));
        assert_eq!((p.a_span.clone(), p.b_span.clone(), p.occurrence), (7..9, 7..21, 0));
        assert!(extract_pairs("same text", "same text").is_empty());
    }

    #[test]
    fn repeated_abbreviations_are_indexed() {
        let o = "oa left knee, OA right knee";
        let e = "osteoarthritis left knee, osteoarthritis right knee";
        let pairs = extract_pairs(o, e);
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[0].occurrence, 0);
        assert_eq!(pairs[1].occurrence, 1);
        assert_eq!(apply_pairs(o, &pairs), e);
    }

    #[test]
    fn sectioned_alignment_uses_note_offsets() {
        let sections = [("HPI: oa\n", "HPI: osteoarthritis\n"), ("Plan: oa rx\n", "Plan: osteoarthritis rx\n")];
        let pairs = extract_note_pairs(&sections);
        let original: String = sections.iter().map(|s| s.0).collect();
        let expanded: String = sections.iter().map(|s| s.1).collect();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].occurrence, 1);
        assert_eq!(&original[pairs[1].a_span.clone()], "oa");
        assert_eq!(&expanded[pairs[1].b_span.clone()], "osteoarthritis");
        assert_eq!(apply_pairs(&original, &pairs), expanded);
    }

    #[test]
    fn one_sided_gaps_are_skipped() {
        assert!(extract_pairs("pain today", "pain since yesterday today").is_empty());
        assert!(extract_pairs("pain since yesterday today", "pain today").is_empty());
    }

    #[test]
    fn levenshtein_reference_values() {
        assert_eq!(levenshtein("intrabdominal", "intra-abdominal"), 2);
        assert_eq!(levenshtein("dead", "deceased"), 4);
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("", "abc"), 3);
        assert_eq!(levenshtein("é", "e"), 1);
    }

    proptest! {
        #[test]
        fn levenshtein_is_a_metric(a in "[a-c]{0,8}", b in "[a-c]{0,8}", c in "[a-c]{0,8}") {
            prop_assert_eq!(levenshtein(&a, &a), 0);
            prop_assert_eq!(levenshtein(&a, &b), levenshtein(&b, &a));
            prop_assert!(levenshtein(&a, &c) <= levenshtein(&a, &b) + levenshtein(&b, &c));
            prop_assert_eq!(levenshtein(&a, &b) == 0, a == b);
        }

        #[test]
        fn blocks_match_brute_force(a in prop::collection::vec("[a-d]", 0..12), b in prop::collection::vec("[a-d]", 0..12)) {
            let sa = a.join(" ");
            let sb = b.join(" ");
            let ta: Vec<&str> = a.iter().map(String::as_str).collect();
            let tb: Vec<&str> = b.iter().map(String::as_str).collect();
            let mut oracle = Vec::new();
            brute_blocks(&ta, &tb, (0, 0), &mut oracle);
            prop_assert_eq!(token_blocks(&sa, &sb), merge(oracle));
            let blocks = match_blocks(&sa, &sb);
            for w in blocks.windows(2) {
                prop_assert!(w[0].a_end < w[1].a_start && w[0].b_end < w[1].b_start);
            }
        }

        #[test]
        fn substitute_back_roundtrip(
            base in prop::collection::vec(prop_oneof!["[a-e]{1,2}".prop_map(Some), (0usize..5).prop_map(|_| None)], 0..25),
            picks in prop::collection::vec(0usize..6, 25),
            expansions in prop::collection::vec(prop::collection::vec("[p-t]{1,3}", 1..4), 6),
        ) {
            // `None` slots become abbreviations ABBR0..ABBR5, expanded to
            // words from a vocabulary disjoint from the base text.
            let mut original = Vec::new();
            let mut expanded = Vec::new();
            for (slot, pick) in base.iter().zip(&picks) {
                match slot {
                    Some(w) => {
                        original.push(w.clone());
                        expanded.push(w.clone());
                    }
                    None => {
                        original.push(format!("ABBR{pick}"));
                        expanded.push(expansions[*pick].join(" "));
                    }
                }
            }
            let (o, e) = (original.join(" "), expanded.join(" "));
            let pairs = extract_pairs(&o, &e);
            prop_assert_eq!(apply_pairs(&o, &pairs), e.clone());
            for p in &pairs {
                prop_assert_eq!(&o[p.a_span.clone()], p.abbreviation.as_str());
                prop_assert_eq!(&e[p.b_span.clone()], p.expansion.as_str());
            }
        }

        #[test]
        fn identical_texts_give_no_pairs(x in "[a-z ]{0,30}") {
            prop_assert!(extract_pairs(&x, &x).is_empty());
        }
    }
}
