//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use std::collections::BTreeMap;

use llmie_core::datamodel::{Frame, IEDocument, Relation};
use proptest::prelude::*;

// ---------- generators ----------

const ALPHABET: &[char] = &[
    'a', 'b', 'c', 'x', 'A', 'B', 'é', 'Ü', '日', ' ', ' ', ' ', '\n', '\t', '.', ',', '<', '>', '&', '"', '\'',
    '1', '{', '}',
];

pub fn text_strategy(max_len: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(ALPHABET), 0..max_len).prop_map(|v| v.into_iter().collect())
}

fn attr_strategy() -> impl Strategy<Value = BTreeMap<String, String>> {
    prop::collection::btree_map(
        prop::sample::select(vec!["Type", "Dosage", "data key", "Ünï"]).prop_map(String::from),
        prop::sample::select(vec!["Drug", "drug ", "Condition", "ADE", "", "a<b&\"c\"", "日本"]).prop_map(String::from),
        0..3,
    )
}

/// A document whose frames have valid spans, unique ids and whose relations
/// connect distinct existing frames.
pub fn document_strategy(max_len: usize, max_frames: usize) -> impl Strategy<Value = IEDocument> {
    (
        text_strategy(max_len),
        "[a-zA-Z0-9_ é-]{0,12}",
        prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>(), attr_strategy()), 0..=max_frames),
        prop::collection::vec(
            (any::<prop::sample::Index>(), any::<prop::sample::Index>(), prop::option::of("[A-Za-z-]{1,8}")),
            0..6,
        ),
    )
        .prop_map(|(text, doc_id, raw_frames, raw_rels)| {
            let chars: Vec<char> = text.chars().collect();
            let mut doc = IEDocument::new(doc_id, text.clone());
            if chars.is_empty() {
                return doc;
            }
            for (i, (a, b, attrs)) in raw_frames.into_iter().enumerate() {
                let start = a.index(chars.len());
                let end = start + 1 + b.index(chars.len() - start);
                let mut f = Frame::new(format!("{:04}", i + 1), chars[start..end].iter().collect::<String>(), start, end);
                f.attributes = attrs;
                doc.frames.push(f);
            }
            let n = doc.frames.len();
            if n >= 2 {
                for (a, b, ty) in raw_rels {
                    let i = a.index(n);
                    let j = (i + 1 + b.index(n - 1)) % n;
                    let (x, y) = (doc.frames[i].frame_id.clone(), doc.frames[j].frame_id.clone());
                    doc.relations.push(match ty {
                        Some(t) => Relation::typed(x, y, t),
                        None => Relation::untyped(x, y),
                    });
                }
            }
            doc
        })
}

/// Frames over a fixed-length text with spans and types drawn from a small
/// space so that matches and near-matches are common.
pub fn frames_strategy(max_frames: usize) -> impl Strategy<Value = Vec<Frame>> {
    prop::collection::vec(
        (0usize..12, 1usize..5, prop::option::of(prop::sample::select(vec!["Drug", "drug", " Drug", "Dosage"]))),
        0..=max_frames,
    )
    .prop_map(|v| {
        v.into_iter()
            .enumerate()
            .map(|(i, (start, len, ty))| {
                let f = Frame::new(format!("{:04}", i + 1), "x".repeat(len), start, start + len);
                match ty {
                    Some(t) => f.with_attr("Type", t),
                    None => f,
                }
            })
            .collect()
    })
}

// ---------- matching oracle ----------

/// Size of a maximum one-to-one matching, by exhaustive search.
pub fn max_matching(n_pred: usize, n_gold: usize, compatible: &dyn Fn(usize, usize) -> bool) -> usize {
    fn go(g: usize, n_gold: usize, used: &mut Vec<bool>, compatible: &dyn Fn(usize, usize) -> bool) -> usize {
        if g == n_gold {
            return 0;
        }
        let mut best = go(g + 1, n_gold, used, compatible);
        for p in 0..used.len() {
            if !used[p] && compatible(p, g) {
                used[p] = true;
                best = best.max(1 + go(g + 1, n_gold, used, compatible));
                used[p] = false;
            }
        }
        best
    }
    go(0, n_gold, &mut vec![false; n_pred], compatible)
}

fn folded_type(f: &Frame) -> Option<String> {
    f.attributes.get("Type").map(|t| t.trim().to_lowercase())
}

pub fn overlaps(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0.max(b.0) < a.1.min(b.1)
}

pub fn oracle_frame_tp(pred: &[Frame], gold: &[Frame], relaxed: bool) -> usize {
    max_matching(pred.len(), gold.len(), &|p, g| {
        let (a, b) = ((pred[p].start, pred[p].end), (gold[g].start, gold[g].end));
        let spans = if relaxed { overlaps(a, b) } else { a == b };
        spans && folded_type(&pred[p]) == folded_type(&gold[g])
    })
}

type Endpoints = ((usize, usize), (usize, usize), Option<String>);

fn endpoints(doc: &IEDocument) -> Vec<Endpoints> {
    doc.relations
        .iter()
        .filter_map(|r| {
            let a = doc.frames.iter().find(|f| f.frame_id == r.frame_1_id)?;
            let b = doc.frames.iter().find(|f| f.frame_id == r.frame_2_id)?;
            Some(((a.start, a.end), (b.start, b.end), r.relation_type.as_ref().map(|t| t.trim().to_lowercase())))
        })
        .collect()
}

pub fn oracle_relation_counts(pred: &IEDocument, gold: &IEDocument) -> (usize, usize, usize) {
    let (p, g) = (endpoints(pred), endpoints(gold));
    let tp = max_matching(p.len(), g.len(), &|i, j| {
        let (pa, pb, pt) = &p[i];
        let (ga, gb, gt) = &g[j];
        pt == gt && ((pa == ga && pb == gb) || (pa == gb && pb == ga))
    });
    (tp, p.len() - tp, g.len() - tp)
}

pub fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
    let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

// ---------- grounding oracle ----------

/// First exact occurrence of `needle` in `hay` at or after `from`.
pub fn naive_find(hay: &[char], needle: &[char], from: usize) -> Option<usize> {
    if needle.is_empty() || needle.len() > hay.len() {
        return None;
    }
    (from..=hay.len() - needle.len()).find(|&i| &hay[i..i + needle.len()] == needle)
}

// ---------- HTML checking ----------

const VOID: &[&str] = &["meta", "br", "img", "input", "link", "hr"];

fn check_entities(text: &str) -> Result<(), String> {
    let mut rest = text;
    while let Some(i) = rest.find('&') {
        let after = &rest[i + 1..];
        let end = after.find(';').ok_or_else(|| format!("bare & near {:?}", &rest[i..rest.len().min(i + 12)]))?;
        let name = &after[..end];
        let ok = (!name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric()) && !name.starts_with('#'))
            || name.strip_prefix('#').is_some_and(|n| !n.is_empty() && n.chars().all(|c| c.is_ascii_digit()));
        if !ok {
            return Err(format!("bad entity &{name};"));
        }
        rest = &after[end + 1..];
    }
    Ok(())
}

/// Strict well-formedness check: balanced, properly nested tags, quoted
/// attributes, no raw `<` or stray `&` in text or attribute values, and
/// script/style bodies that do not contain their closing tag.
pub fn check_html(html: &str) -> Result<(), String> {
    let mut s = html.trim_start();
    if let Some(rest) = s.strip_prefix("<!DOCTYPE html>") {
        s = rest;
    } else {
        return Err("missing doctype".into());
    }
    let mut stack: Vec<String> = Vec::new();
    while !s.is_empty() {
        if let Some(rest) = s.strip_prefix("</") {
            let end = rest.find('>').ok_or("unterminated end tag")?;
            let name = &rest[..end];
            match stack.pop() {
                Some(open) if open == name => {}
                other => return Err(format!("</{name}> closes {other:?}")),
            }
            s = &rest[end + 1..];
        } else if let Some(rest) = s.strip_prefix('<') {
            let name_len = rest.find(|c: char| !c.is_ascii_alphanumeric()).unwrap_or(rest.len());
            let name = &rest[..name_len];
            if name.is_empty() {
                return Err(format!("raw < in text near {:?}", &s[..s.len().min(20)]));
            }
            let mut r = &rest[name_len..];
            let self_closed;
            loop {
                let t = r.trim_start();
                if let Some(t) = t.strip_prefix("/>") {
                    self_closed = true;
                    r = t;
                    break;
                }
                if let Some(t) = t.strip_prefix('>') {
                    self_closed = false;
                    r = t;
                    break;
                }
                if t.len() == r.len() {
                    return Err(format!("missing whitespace before attribute in <{name}>"));
                }
                let an = t.find(|c: char| !(c.is_ascii_alphanumeric() || c == '-' || c == '_' || c == ':')).unwrap_or(t.len());
                if an == 0 {
                    return Err(format!("bad attribute in <{name}> near {:?}", &t[..t.len().min(20)]));
                }
                let t = t[an..].strip_prefix("=\"").ok_or_else(|| format!("unquoted attribute in <{name}>"))?;
                let close = t.find('"').ok_or("unterminated attribute value")?;
                let value = &t[..close];
                if value.contains('<') {
                    return Err(format!("raw < in attribute of <{name}>"));
                }
                check_entities(value)?;
                r = &t[close + 1..];
            }
            if name == "script" || name == "style" {
                let closing = format!("</{name}>");
                let end = r.find(&closing).ok_or_else(|| format!("unterminated <{name}>"))?;
                s = &r[end + closing.len()..];
            } else {
                if !self_closed && !VOID.contains(&name) {
                    stack.push(name.to_string());
                }
                s = r;
            }
        } else {
            let end = s.find('<').unwrap_or(s.len());
            let text = &s[..end];
            if text.contains('>') {
                return Err(format!("raw > in text {text:?}"));
            }
            check_entities(text)?;
            s = &s[end..];
        }
    }
    if stack.is_empty() {
        Ok(())
    } else {
        Err(format!("unclosed {stack:?}"))
    }
}

pub fn decode_entities(text: &str) -> String {
    let mut out = String::new();
    let mut rest = text;
    while let Some(i) = rest.find('&') {
        out.push_str(&rest[..i]);
        let end = rest[i..].find(';').expect("entity end") + i;
        let name = &rest[i + 1..end];
        match name {
            "amp" => out.push('&'),
            "lt" => out.push('<'),
            "gt" => out.push('>'),
            "quot" => out.push('"'),
            n if n.starts_with('#') => out.push(char::from_u32(n[1..].parse().expect("numeric entity")).expect("char")),
            other => panic!("unknown entity {other}"),
        }
        rest = &rest[end + 1..];
    }
    out.push_str(rest);
    out
}

/// The text content of the element with `id="llmie-text"`, tags removed and
/// entities decoded.
pub fn visible_text(html: &str) -> String {
    let open = "<div id=\"llmie-text\">";
    let start = html.find(open).expect("text container") + open.len();
    let mut depth = 0usize;
    let mut out = String::new();
    let mut s = &html[start..];
    loop {
        if s.starts_with("</div>") && depth == 0 {
            break;
        }
        if let Some(rest) = s.strip_prefix('<') {
            let end = rest.find('>').expect("tag end");
            let tag = &rest[..end];
            if tag.starts_with("div") {
                depth += 1;
            } else if tag == "/div" {
                depth -= 1;
            }
            s = &rest[end + 1..];
        } else {
            let end = s.find('<').unwrap_or(s.len());
            out.push_str(&decode_entities(&s[..end]));
            s = &s[end..];
        }
    }
    out
}

/// Number of `<mark` elements whose text is exactly `text`.
pub fn marks_with_text(html: &str, text: &str) -> usize {
    html.match_indices("<mark ")
        .filter(|(i, _)| {
            let rest = &html[*i..];
            let open_end = rest.find('>').unwrap() + 1;
            let close = rest.find("</mark>").unwrap();
            decode_entities(&rest[open_end..close]) == text
        })
        .count()
}

/// The JSON embedded in `<script type="application/json" id="llmie-data">`.
pub fn embedded_data(html: &str) -> serde_json::Value {
    let open = "id=\"llmie-data\">";
    let start = html.find(open).expect("data block") + open.len();
    let end = start + html[start..].find("</script>").expect("script end");
    serde_json::from_str(&html[start..end]).expect("embedded JSON parses")
}

// ---------- segmentation ----------

/// Worked segmentation examples with hand-counted offsets.
pub const SEGMENTATION_EXAMPLES: &[(&str, &[(usize, usize)])] = &[
    ("He takes aspirin. He is well.", &[(0, 17), (18, 29)]),
    ("", &[]),
    ("Seen by Dr. Smith today.", &[(0, 24)]),
];
