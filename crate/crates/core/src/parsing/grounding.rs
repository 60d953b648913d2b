//! Recovers character spans for entity strings returned by the model.

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grounding {
    pub start: usize,
    pub end: usize,
    pub new_cursor: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("entity text {0:?} not found in document")]
pub struct NotFound(pub String);

fn chars_eq_ignore_case(a: char, b: char) -> bool {
    a == b || a.to_lowercase().eq(b.to_lowercase())
}

fn find_from(hay: &[char], needle: &[char], cursor: usize, eq: impl Fn(char, char) -> bool) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    (cursor..=hay.len() - needle.len())
        .find(|&i| needle.iter().zip(&hay[i..]).all(|(&n, &h)| eq(n, h)))
}

/// Matches the whitespace-collapsed needle at `i`, treating any run of
/// whitespace in the haystack as a single space. Returns the end offset.
fn match_normalized(hay: &[char], needle: &[char], i: usize) -> Option<usize> {
    let mut h = i;
    let mut n = 0;
    while n < needle.len() {
        if needle[n] == ' ' {
            if h >= hay.len() || !hay[h].is_whitespace() {
                return None;
            }
            while h < hay.len() && hay[h].is_whitespace() {
                h += 1;
            }
        } else {
            if h >= hay.len() || !chars_eq_ignore_case(needle[n], hay[h]) {
                return None;
            }
            h += 1;
        }
        n += 1;
    }
    Some(h)
}

/// Finds the earliest occurrence of `entity_text` at or after `cursor`
/// (character offsets). Tiers are tried in order: exact, case-insensitive,
/// then whitespace-normalized (also case-insensitive). The returned cursor is
/// the matched end, so threading it through repeated calls grounds repeated
/// mentions left to right.
pub fn ground_entity(doc_text: &str, entity_text: &str, cursor: usize) -> Result<Grounding, NotFound> {
    let hay: Vec<char> = doc_text.chars().collect();
    ground_in_chars(&hay, entity_text, cursor)
}

pub(crate) fn ground_in_chars(hay: &[char], entity_text: &str, cursor: usize) -> Result<Grounding, NotFound> {
    let not_found = || NotFound(entity_text.to_string());
    let cursor = cursor.min(hay.len());
    let needle: Vec<char> = entity_text.chars().collect();

    let hit = find_from(hay, &needle, cursor, |a, b| a == b)
        .or_else(|| find_from(hay, &needle, cursor, chars_eq_ignore_case));
    if let Some(start) = hit {
        let end = start + needle.len();
        return Ok(Grounding { start, end, new_cursor: end });
    }

    let normalized: Vec<char> = entity_text
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .chars()
        .collect();
    if normalized.is_empty() {
        return Err(not_found());
    }
    (cursor..hay.len())
        .filter(|&i| !hay[i].is_whitespace())
        .find_map(|i| match_normalized(hay, &normalized, i).map(|end| (i, end)))
        .map(|(start, end)| Grounding { start, end, new_cursor: end })
        .ok_or_else(not_found)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Plain substring search over a (possibly lowercased) haystack, converted
    /// to character offsets.
    fn oracle(hay: &str, needle: &str, cursor: usize, fold: bool) -> Option<(usize, usize)> {
        let (hay, needle) = if fold {
            (hay.to_lowercase(), needle.to_lowercase())
        } else {
            (hay.to_string(), needle.to_string())
        };
        let byte_cursor = hay.char_indices().nth(cursor).map(|(b, _)| b).unwrap_or(hay.len());
        let b = hay[byte_cursor..].find(&needle)? + byte_cursor;
        let start = hay[..b].chars().count();
        Some((start, start + needle.chars().count()))
    }

    #[test]
    fn repeated_mentions_advance() {
        let doc = "Aspirin daily. Aspirin prn.";
        let first = ground_entity(doc, "Aspirin", 0).unwrap();
        assert_eq!((first.start, first.end, first.new_cursor), (0, 7, 7));
        assert_eq!(oracle(doc, "Aspirin", 0, false), Some((0, 7)));
        let second = ground_entity(doc, "Aspirin", first.new_cursor).unwrap();
        assert_eq!((second.start, second.end, second.new_cursor), (15, 22, 22));
        assert_eq!(oracle(doc, "Aspirin", 7, false), Some((15, 22)));
        assert!(ground_entity(doc, "Aspirin", 22).is_err());
    }

    #[test]
    fn case_insensitive_tier() {
        let g = ground_entity("Aspirin daily", "ASPIRIN", 0).unwrap();
        assert_eq!((g.start, g.end, g.new_cursor), (0, 7, 7));
        assert_eq!(oracle("Aspirin daily", "ASPIRIN", 0, true), Some((0, 7)));
    }

    #[test]
    fn exact_tier_wins_over_earlier_case_variant() {
        let g = ground_entity("aspirin then Aspirin", "Aspirin", 0).unwrap();
        assert_eq!(g.start, 13);
    }

    #[test]
    fn whitespace_normalized_tier_maps_back() {
        let doc = "took  metoprolol\n  succinate today";
        let g = ground_entity(doc, "metoprolol succinate", 0).unwrap();
        assert_eq!((g.start, g.end), (6, 28));
        assert_eq!(&doc[6..28], "metoprolol\n  succinate");
        let g = ground_entity(doc, " Metoprolol   Succinate ", 0).unwrap();
        assert_eq!((g.start, g.end), (6, 28));
    }

    #[test]
    fn not_found_cases() {
        assert_eq!(
            ground_entity("Aspirin daily", "ibuprofen", 0),
            Err(NotFound("ibuprofen".into()))
        );
        assert!(ground_entity("Aspirin daily", "", 0).is_err());
        assert!(ground_entity("Aspirin daily", "   ", 0).is_err());
        assert!(ground_entity("", "x", 0).is_err());
    }

    #[test]
    fn non_ascii_offsets_are_chars() {
        let g = ground_entity("fièvre et toux", "toux", 0).unwrap();
        assert_eq!((g.start, g.end), (10, 14));
        assert_eq!(oracle("fièvre et toux", "toux", 0, false), Some((10, 14)));
    }
}
