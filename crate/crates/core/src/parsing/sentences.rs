//! Rule-based, offset-preserving sentence segmentation tuned for clinical
//! notes.
//!
//! A boundary is placed after a run of `.`, `!` or `?` (plus any closing
//! quotes or brackets) when it is followed by whitespace and then an
//! uppercase letter or digit, and at every blank line. A period ending a
//! known abbreviation never ends a sentence. Sentences are trimmed of
//! surrounding whitespace, so together they cover every non-whitespace
//! character exactly once.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Lowercased abbreviations whose final period never ends a sentence.
pub const ABBREVIATIONS: &[&str] = &[
    "dr.", "mr.", "mrs.", "ms.", "vs.", "e.g.", "i.e.", "q.d.", "b.i.d.", "t.i.d.", "p.r.n.", "mg.",
    "a.m.", "p.m.",
];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | ')' | ']' | '\u{201d}' | '\u{2019}')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '(' | '[' | '\u{201c}' | '\u{2018}')
}

/// True when the period at `dot` closes an abbreviation from the list.
fn ends_abbreviation(chars: &[char], dot: usize) -> bool {
    let mut start = dot;
    while start > 0 && !chars[start - 1].is_whitespace() {
        start -= 1;
    }
    while start < dot && is_opener(chars[start]) {
        start += 1;
    }
    let token: String = chars[start..=dot].iter().flat_map(|c| c.to_lowercase()).collect();
    ABBREVIATIONS.contains(&token.as_str())
}

/// Character offsets at which a new segment begins (excluding 0).
fn boundaries(chars: &[char]) -> Vec<usize> {
    let n = chars.len();
    let mut cuts = Vec::new();
    let mut i = 0;
    while i < n {
        let c = chars[i];
        if is_terminal(c) {
            let run_start = i;
            let mut j = i;
            while j < n && is_terminal(chars[j]) {
                j += 1;
            }
            let last_terminal = j - 1;
            while j < n && is_closer(chars[j]) {
                j += 1;
            }
            let mut k = j;
            while k < n && chars[k].is_whitespace() {
                k += 1;
            }
            let suppressed = last_terminal == run_start
                && c == '.'
                && ends_abbreviation(chars, run_start);
            if k > j && k < n && (chars[k].is_uppercase() || chars[k].is_ascii_digit()) && !suppressed {
                cuts.push(j);
            }
            i = j;
        } else if c == '\n' {
            // blank line: newline, optional horizontal whitespace, newline
            let mut k = i + 1;
            while k < n && chars[k].is_whitespace() && chars[k] != '\n' {
                k += 1;
            }
            if k < n && chars[k] == '\n' {
                cuts.push(i);
                while k < n && chars[k].is_whitespace() {
                    k += 1;
                }
                i = k;
            } else {
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    cuts
}

pub fn split_sentences(doc_text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<char> = doc_text.chars().collect();
    let mut edges = vec![0];
    edges.extend(boundaries(&chars));
    edges.push(chars.len());

    let mut out = Vec::new();
    for pair in edges.windows(2) {
        let (mut start, mut end) = (pair[0], pair[1]);
        while start < end && chars[start].is_whitespace() {
            start += 1;
        }
        while end > start && chars[end - 1].is_whitespace() {
            end -= 1;
        }
        if start < end {
            out.push(SentenceSpan {
                text: chars[start..end].iter().collect(),
                start,
                end,
            });
        }
    }
    out
}
