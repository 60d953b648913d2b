//! Recovery of entity records from free-form LLM output.
//!
//! The model is asked for a JSON list of `{"entity_text": ..., "attr": {...}}`
//! objects, but real output arrives fenced, wrapped in prose, truncated, or
//! with individual elements broken. The scanner here isolates the candidate
//! elements of the first list (or, failing that, a run of bare top-level
//! objects) and parses each element on its own, so one bad element never
//! costs the others.

use serde_json::{Map, Value};

use crate::datamodel::Attributes;

pub const ENTITY_TEXT_KEY: &str = "entity_text";
pub const ATTRIBUTES_KEY: &str = "attr";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawEntityRecord {
    pub entity_text: String,
    pub attributes: Attributes,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityParse {
    pub records: Vec<RawEntityRecord>,
    pub discarded: usize,
    pub notes: Vec<String>,
}

impl EntityParse {
    /// Number of candidate elements the scanner found.
    pub fn candidates(&self) -> usize {
        self.records.len() + self.discarded
    }
}

/// Returns the body of the first fenced code block, or the input unchanged
/// if it has none. An unterminated fence runs to the end of the text.
pub fn strip_code_fences(text: &str) -> &str {
    let Some(open) = find_fence(text, 0) else {
        return text;
    };
    let (fence_start, fence_len) = open;
    let after_ticks = fence_start + fence_len;
    // skip the info string (e.g. `json`) up to the end of the line
    let body_start = match text[after_ticks..].find('\n') {
        Some(nl) => after_ticks + nl + 1,
        None => return "",
    };
    let mut search = body_start;
    while let Some((pos, len)) = find_fence(text, search) {
        if len >= fence_len {
            return &text[body_start..pos];
        }
        search = pos + len;
    }
    &text[body_start..]
}

/// Finds a run of three or more backticks at or after `from`.
fn find_fence(text: &str, from: usize) -> Option<(usize, usize)> {
    let start = from + text[from..].find("```")?;
    let len = text[start..].bytes().take_while(|&b| b == b'`').count();
    Some((start, len))
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    start: usize,
    end: usize,
}

/// Locates the first `[` that plausibly opens a list of objects: the next
/// non-whitespace character is `{`, `]` or `"`.
fn find_array_start(text: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut from = 0;
    while let Some(rel) = text[from..].find('[') {
        let pos = from + rel;
        let next = bytes[pos + 1..].iter().find(|b| !b.is_ascii_whitespace());
        if matches!(next, Some(b'{') | Some(b']') | Some(b'"')) {
            return Some(pos);
        }
        from = pos + 1;
    }
    None
}

/// Splits the list opened at `open` into element candidates. Commas at list
/// depth separate elements; a closer that does not match its opener ends the
/// current element, and one that closes the list ends the scan. An
/// unterminated list yields whatever elements were seen up to end of text.
fn scan_array(text: &str, open: usize) -> Vec<Candidate> {
    let mut out = Vec::new();
    let mut stack: Vec<u8> = vec![b'['];
    let mut in_string = false;
    let mut escaped = false;
    let mut elem_start = open + 1;

    let push = |start: usize, end: usize, out: &mut Vec<Candidate>| {
        if !text[start..end].trim().is_empty() {
            out.push(Candidate { start, end });
        }
    };

    for (i, b) in text.bytes().enumerate().skip(open + 1) {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'[' | b'{' => stack.push(b),
            b']' | b'}' => {
                let want = if b == b']' { b'[' } else { b'{' };
                if stack.len() > 1 {
                    if stack.last() == Some(&want) {
                        stack.pop();
                        continue;
                    }
                    // mismatched closer: unwind to the list level
                    stack.truncate(1);
                    if b == b']' {
                        push(elem_start, i, &mut out);
                        return out;
                    }
                    continue;
                }
                if b == b']' {
                    push(elem_start, i, &mut out);
                    return out;
                }
                // stray `}` at list depth stays inside the current element
            }
            b',' if stack.len() == 1 => {
                push(elem_start, i, &mut out);
                elem_start = i + 1;
            }
            _ => {}
        }
    }
    push(elem_start, text.len(), &mut out);
    out
}

/// Fallback for output without a list: consecutive `{...}` objects at top
/// level (e.g. one object per line).
fn scan_objects(text: &str) -> Vec<Candidate> {
    let mut out = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] != b'{' {
            i += 1;
            continue;
        }
        let start = i;
        let mut depth = 0usize;
        let mut in_string = false;
        let mut escaped = false;
        let mut end = bytes.len();
        for (j, &b) in bytes.iter().enumerate().skip(start) {
            if in_string {
                match b {
                    _ if escaped => escaped = false,
                    b'\\' => escaped = true,
                    b'"' => in_string = false,
                    _ => {}
                }
                continue;
            }
            match b {
                b'"' => in_string = true,
                b'{' | b'[' => depth += 1,
                b'}' | b']' => {
                    depth = depth.saturating_sub(1);
                    if depth == 0 {
                        end = j + 1;
                        break;
                    }
                }
                _ => {}
            }
        }
        out.push(Candidate { start, end });
        i = end;
    }
    out
}

/// Removes commas that directly precede `}` or `]` outside of strings.
fn remove_trailing_commas(element: &str) -> String {
    let mut out = String::with_capacity(element.len());
    let mut in_string = false;
    let mut escaped = false;
    let mut pending_comma: Option<String> = None;
    for c in element.chars() {
        if in_string {
            out.push(c);
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        if let Some(buf) = pending_comma.as_mut() {
            if c.is_whitespace() {
                buf.push(c);
                continue;
            }
            let buf = pending_comma.take().unwrap_or_default();
            if c == '}' || c == ']' {
                out.push_str(&buf[1..]);
            } else {
                out.push_str(&buf);
            }
        }
        match c {
            ',' => pending_comma = Some(String::from(",")),
            '"' => {
                in_string = true;
                out.push(c);
            }
            _ => out.push(c),
        }
    }
    if let Some(buf) = pending_comma {
        out.push_str(&buf);
    }
    out
}

fn value_to_text(value: &Value) -> Option<String> {
    match value {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(n.to_string()),
        other => Some(other.to_string()),
    }
}

fn record_from_object(obj: &Map<String, Value>) -> Result<RawEntityRecord, String> {
    let entity_text = match obj.get(ENTITY_TEXT_KEY) {
        None => return Err(format!("missing `{ENTITY_TEXT_KEY}` key")),
        Some(Value::String(s)) => s.clone(),
        Some(other) => return Err(format!("`{ENTITY_TEXT_KEY}` is not a string: {other}")),
    };
    if entity_text.trim().is_empty() {
        return Err(format!("empty `{ENTITY_TEXT_KEY}`"));
    }
    let mut attributes = Attributes::new();
    match obj.get(ATTRIBUTES_KEY) {
        None | Some(Value::Null) => {}
        Some(Value::Object(attrs)) => {
            for (k, v) in attrs {
                if let Some(text) = value_to_text(v) {
                    attributes.insert(k.clone(), text);
                }
            }
        }
        Some(other) => return Err(format!("`{ATTRIBUTES_KEY}` is not an object: {other}")),
    }
    Ok(RawEntityRecord {
        entity_text,
        attributes,
    })
}

/// Parses one element, retrying once with trailing commas removed.
fn parse_element(raw: &str) -> Result<Value, serde_json::Error> {
    serde_json::from_str::<Value>(raw.trim()).or_else(|_| serde_json::from_str::<Value>(remove_trailing_commas(raw).trim()))
}

fn excerpt(s: &str) -> String {
    const MAX: usize = 60;
    let s = s.trim();
    if s.chars().count() <= MAX {
        s.to_string()
    } else {
        let cut: String = s.chars().take(MAX).collect();
        format!("{cut}...")
    }
}

/// Recovers entity records from raw model output. Never fails; problems are
/// reported through `discarded` and `notes`.
pub fn extract_json_entities(llm_output: &str) -> EntityParse {
    let body = strip_code_fences(llm_output);
    let candidates = match find_array_start(body) {
        Some(open) => Some(scan_array(body, open)),
        None => {
            // bare objects only count when at least one of them is real JSON,
            // so prose with stray braces reads as "no JSON" rather than junk
            let objects = scan_objects(body);
            let any_object = objects
                .iter()
                .any(|c| parse_element(&body[c.start..c.end]).is_ok_and(|v| v.is_object()));
            any_object.then_some(objects)
        }
    };

    let mut parse = EntityParse::default();
    let Some(candidates) = candidates else {
        parse.notes.push(format!("no JSON list found in output: {:?}", excerpt(llm_output)));
        return parse;
    };

    for (n, cand) in candidates.iter().enumerate() {
        let raw = &body[cand.start..cand.end];
        let outcome = match parse_element(raw) {
            Err(e) => Err(format!("invalid JSON ({e})")),
            Ok(Value::Object(obj)) => record_from_object(&obj),
            Ok(other) => Err(format!("not an object: {}", excerpt(&other.to_string()))),
        };
        match outcome {
            Ok(record) => parse.records.push(record),
            Err(reason) => {
                parse.discarded += 1;
                parse
                    .notes
                    .push(format!("element {n} discarded: {reason}: {:?}", excerpt(raw)));
            }
        }
    }
    parse
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fenced_output() {
        let out = "```json\n[{\"entity_text\":\"aspirin\",\"attr\":{\"Type\":\"Drug\"}}]\n```";
        let parse = extract_json_entities(out);
        assert_eq!(parse.records.len(), 1);
        assert_eq!(parse.discarded, 0);
        assert_eq!(parse.records[0].attributes["Type"], "Drug");
    }

    #[test]
    fn inconsistent_elements_are_discarded() {
        let out = "[{\"entity_text\":\"aspirin\"}, {\"entity\":\"bad key\"}, {broken]";
        let parse = extract_json_entities(out);
        assert_eq!(parse.records.len(), 1);
        assert_eq!(parse.discarded, 2);
        assert_eq!(parse.notes.len(), 2);
    }

    #[test]
    fn prose_only() {
        let parse = extract_json_entities("I could not find any entities.");
        assert!(parse.records.is_empty());
        assert_eq!(parse.discarded, 0);
        assert_eq!(parse.notes.len(), 1);
    }

    #[test]
    fn empty_list_is_silent() {
        let parse = extract_json_entities("[]");
        assert_eq!(parse, EntityParse::default());
    }

    #[test]
    fn strip_fences_variants() {
        assert_eq!(strip_code_fences("```\n[1]\n```"), "[1]\n");
        assert_eq!(strip_code_fences("pre ```json\n[1]"), "[1]");
        assert_eq!(strip_code_fences("````md\na ```x``` b\n````"), "a ```x``` b\n");
        assert_eq!(strip_code_fences("plain"), "plain");
    }

    #[test]
    fn trailing_comma_repair() {
        assert_eq!(remove_trailing_commas(r#"{"a": "x,}", "b": 1 , }"#), r#"{"a": "x,}", "b": 1  }"#);
        let parse = extract_json_entities(r#"[{"entity_text": "a", "attr": {"k": 1,},},]"#);
        assert_eq!(parse.records.len(), 1);
        assert_eq!(parse.records[0].attributes["k"], "1");
    }

    #[test]
    fn attribute_values_are_stringified() {
        let parse = extract_json_entities(
            r#"[{"entity_text": "a", "attr": {"n": 2.5, "b": true, "z": null, "l": [1,2]}}]"#,
        );
        let attrs = &parse.records[0].attributes;
        assert_eq!(attrs["n"], "2.5");
        assert_eq!(attrs["b"], "true");
        assert_eq!(attrs["l"], "[1,2]");
        assert!(!attrs.contains_key("z"));
    }

    #[test]
    fn truncated_list_keeps_complete_elements() {
        let parse = extract_json_entities(r#"[{"entity_text": "a"}, {"entity_text": "b"}, {"entity_te"#);
        assert_eq!(parse.records.len(), 2);
        assert_eq!(parse.discarded, 1);
    }

    #[test]
    fn bare_objects_fallback() {
        let parse = extract_json_entities("{\"entity_text\": \"a\"}\n{\"entity_text\": \"b\"}\n");
        assert_eq!(parse.records.len(), 2);
    }

    #[test]
    fn brackets_inside_strings_do_not_confuse_scanner() {
        let parse = extract_json_entities(r#"[{"entity_text": "a ] b, [c"}, {"entity_text": "}{"}]"#);
        assert_eq!(parse.records.len(), 2);
        assert_eq!(parse.records[0].entity_text, "a ] b, [c");
    }
}
