//! Self-contained HTML rendering of a document's frames and relations.
//!
//! Text is partitioned at every frame boundary; each covered segment becomes
//! one `<mark>` listing the ids of all frames covering it, so overlapping
//! frames never produce crossing tags. Colors come from a stable hash of the
//! frame's `Type` attribute into a fixed palette. Relations are embedded as
//! JSON and drawn as SVG paths by a small inline script.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde_json::json;

use crate::datamodel::{Frame, IEDocument};

pub const TYPE_ATTRIBUTE: &str = "Type";

pub const PALETTE: [&str; 12] = [
    "#8dd3c7", "#ffffb3", "#bebada", "#fb8072", "#80b1d3", "#fdb462", "#b3de69", "#fccde5", "#d9d9d9",
    "#bc80bd", "#ccebc5", "#ffed6f",
];

/// FNV-1a over the UTF-8 bytes, reduced onto the palette.
pub fn color_index(type_value: &str) -> usize {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in type_value.bytes() {
        hash ^= b as u64;
        hash = hash.wrapping_mul(0x0100_0000_01b3);
    }
    (hash % PALETTE.len() as u64) as usize
}

pub fn escape_html(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&#39;"),
            '\n' => out.push('\n'),
            c => out.push(c),
        }
    }
    out
}

fn attr_name(key: &str) -> String {
    let slug: String = key
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '-' })
        .collect();
    format!("data-attr-{slug}")
}

fn tooltip(frame: &Frame) -> String {
    let mut s = format!("[{}] {}", frame.frame_id, frame.entity_text);
    for (k, v) in &frame.attributes {
        let _ = write!(s, "\n{k}: {v}");
    }
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
    /// Indices into the document's frame list, ordered by frame position.
    pub frames: Vec<usize>,
}

/// Partitions the text at all frame boundaries. Frames with invalid spans
/// are ignored.
pub fn segments(doc: &IEDocument) -> Vec<Segment> {
    let len = doc.char_len();
    let valid: Vec<usize> = (0..doc.frames.len())
        .filter(|&i| doc.frames[i].start < doc.frames[i].end && doc.frames[i].end <= len)
        .collect();
    let mut cuts: BTreeSet<usize> = [0, len].into_iter().collect();
    for &i in &valid {
        cuts.insert(doc.frames[i].start);
        cuts.insert(doc.frames[i].end);
    }
    let cuts: Vec<usize> = cuts.into_iter().collect();
    cuts.windows(2)
        .filter(|w| w[0] < w[1])
        .map(|w| {
            let mut covering: Vec<usize> = valid
                .iter()
                .copied()
                .filter(|&i| doc.frames[i].start <= w[0] && w[1] <= doc.frames[i].end)
                .collect();
            covering.sort_by_key(|&i| (doc.frames[i].start, doc.frames[i].end, i));
            Segment { start: w[0], end: w[1], frames: covering }
        })
        .collect()
}

fn script_safe_json(value: &serde_json::Value) -> String {
    value
        .to_string()
        .replace('<', "\\u003c")
        .replace('>', "\\u003e")
        .replace('&', "\\u0026")
}

const STYLE: &str = r##"
body { font-family: system-ui, sans-serif; margin: 2em; color: #222; }
h1 { font-size: 1.1em; }
#llmie-view { position: relative; }
#llmie-arcs { position: absolute; left: 0; top: 0; pointer-events: none; overflow: visible; }
#llmie-text { white-space: pre-wrap; line-height: 2.6; font-size: 1em; }
mark.llmie-frame { border-radius: 3px; padding: 1px 0; cursor: help; }
mark.llmie-overlap { outline: 1px dashed #555; }
.llmie-legend span { display: inline-block; margin-right: 1em; padding: 0 .4em; border-radius: 3px; }
"##;

const ARC_SCRIPT: &str = r##"
(function () {
  var data = JSON.parse(document.getElementById("llmie-data").textContent);
  var view = document.getElementById("llmie-view");
  var svg = document.getElementById("llmie-arcs");
  function anchor(id) {
    var marks = view.querySelectorAll("mark.llmie-frame");
    for (var i = 0; i < marks.length; i++) {
      if ((" " + marks[i].getAttribute("data-frame-ids") + " ").indexOf(" " + id + " ") >= 0) return marks[i];
    }
    return null;
  }
  function draw() {
    while (svg.firstChild) svg.removeChild(svg.firstChild);
    var box = view.getBoundingClientRect();
    svg.setAttribute("width", box.width);
    svg.setAttribute("height", box.height);
    data.relations.forEach(function (r) {
      var a = anchor(r.frame_1_id), b = anchor(r.frame_2_id);
      if (!a || !b) return;
      var ra = a.getBoundingClientRect(), rb = b.getBoundingClientRect();
      var x1 = ra.left + ra.width / 2 - box.left, y1 = ra.top - box.top;
      var x2 = rb.left + rb.width / 2 - box.left, y2 = rb.top - box.top;
      var lift = Math.min(y1, y2) - 14;
      var path = document.createElementNS("http://www.w3.org/2000/svg", "path");
      path.setAttribute("d", "M" + x1 + "," + y1 + " C" + x1 + "," + lift + " " + x2 + "," + lift + " " + x2 + "," + y2);
      path.setAttribute("fill", "none");
      path.setAttribute("stroke", "#555");
      path.setAttribute("stroke-width", "1.2");
      var title = document.createElementNS("http://www.w3.org/2000/svg", "title");
      title.textContent = r.relation_type || "related";
      path.appendChild(title);
      svg.appendChild(path);
    });
  }
  window.addEventListener("resize", draw);
  draw();
})();
"##;

/// Renders `doc` as a standalone HTML page with no external references.
pub fn viz_render(doc: &IEDocument) -> String {
    let chars: Vec<char> = doc.text.chars().collect();
    let mut body = String::new();
    for seg in segments(doc) {
        let text: String = chars[seg.start..seg.end].iter().collect();
        let text = escape_html(&text);
        if seg.frames.is_empty() {
            body.push_str(&text);
            continue;
        }
        // the innermost (last-starting, shortest) frame styles the segment
        let primary = &doc.frames[*seg
            .frames
            .iter()
            .max_by_key(|&&i| (doc.frames[i].start, std::cmp::Reverse(doc.frames[i].end)))
            .expect("non-empty")];
        let type_value = primary.attr(TYPE_ATTRIBUTE);
        let mut class = String::from("llmie-frame");
        match type_value {
            Some(t) => {
                let _ = write!(class, " llmie-c{}", color_index(t));
            }
            None => class.push_str(" llmie-untyped"),
        }
        if seg.frames.len() > 1 {
            class.push_str(" llmie-overlap");
        }
        let ids: Vec<&str> = seg.frames.iter().map(|&i| doc.frames[i].frame_id.as_str()).collect();
        let title: Vec<String> = seg.frames.iter().map(|&i| tooltip(&doc.frames[i])).collect();
        let _ = write!(
            body,
            "<mark class=\"{class}\" data-frame-id=\"{}\" data-frame-ids=\"{}\"",
            escape_html(&primary.frame_id),
            escape_html(&ids.join(" "))
        );
        for (k, v) in &primary.attributes {
            let _ = write!(body, " {}=\"{}\"", attr_name(k), escape_html(v));
        }
        let _ = write!(body, " title=\"{}\">{text}</mark>", escape_html(&title.join("\n\n")).replace('\n', "&#10;"));
    }

    let mut types: BTreeSet<&str> = BTreeSet::new();
    for f in &doc.frames {
        if let Some(t) = f.attr(TYPE_ATTRIBUTE) {
            types.insert(t);
        }
    }
    let mut css = String::from(STYLE);
    let mut legend = String::new();
    for t in &types {
        let c = color_index(t);
        let _ = write!(legend, "<span class=\"llmie-c{c}\">{}</span>", escape_html(t));
    }
    for (i, color) in PALETTE.iter().enumerate() {
        let _ = writeln!(css, ".llmie-c{i} {{ background: {color}; }}");
    }
    css.push_str(".llmie-untyped { background: #eeeeee; }\n");

    let data = json!({
        "doc_id": doc.doc_id,
        "frames": doc.frames,
        "relations": doc.relations,
    });

    let mut html = String::new();
    html.push_str("<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\"/>\n");
    let _ = writeln!(html, "<title>{}</title>", escape_html(&doc.doc_id));
    let _ = writeln!(html, "<style>{css}</style>");
    html.push_str("</head>\n<body>\n");
    let _ = writeln!(html, "<h1>{}</h1>", escape_html(&doc.doc_id));
    let _ = writeln!(html, "<div class=\"llmie-legend\">{legend}</div>");
    html.push_str("<div id=\"llmie-view\">\n<svg id=\"llmie-arcs\" xmlns=\"http://www.w3.org/2000/svg\"></svg>\n");
    let _ = writeln!(html, "<div id=\"llmie-text\">{body}</div>");
    html.push_str("</div>\n");
    let _ = writeln!(
        html,
        "<script type=\"application/json\" id=\"llmie-data\">{}</script>",
        script_safe_json(&data)
    );
    let _ = writeln!(html, "<script>{ARC_SCRIPT}</script>");
    html.push_str("</body>\n</html>\n");
    html
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datamodel::Relation;

    #[test]
    fn palette_hash_is_stable() {
        assert_eq!(color_index("Drug"), color_index("Drug"));
        assert!(color_index("Condition") < PALETTE.len());
        // FNV-1a of the empty string is the offset basis
        assert_eq!(color_index(""), (0xcbf2_9ce4_8422_2325u64 % 12) as usize);
    }

    #[test]
    fn single_frame_single_highlight() {
        let mut doc = IEDocument::new("d", "Took aspirin today");
        doc.frames.push(Frame::new("0001", "aspirin", 5, 12).with_attr("Type", "Drug"));
        let html = viz_render(&doc);
        assert_eq!(html.matches("<mark ").count(), 1);
        assert!(html.contains("data-attr-type=\"Drug\""));
        assert!(html.contains(&format!("llmie-c{}", color_index("Drug"))));
        assert!(html.contains(">aspirin</mark>"));
        assert!(!html.contains("src=") && !html.contains("href="));
    }

    #[test]
    fn empty_document_is_escaped_text() {
        let doc = IEDocument::new("d", "a < b & c");
        let html = viz_render(&doc);
        assert!(html.contains("<div id=\"llmie-text\">a &lt; b &amp; c</div>"));
        assert_eq!(html.matches("<mark").count(), 0);
    }

    #[test]
    fn overlapping_frames_split_into_segments() {
        let mut doc = IEDocument::new("d", "abcdefgh");
        doc.frames.push(Frame::new("a", "abcde", 0, 5));
        doc.frames.push(Frame::new("b", "defgh", 3, 8));
        let segs: Vec<(usize, usize, usize)> = segments(&doc).iter().map(|s| (s.start, s.end, s.frames.len())).collect();
        assert_eq!(segs, vec![(0, 3, 1), (3, 5, 2), (5, 8, 1)]);
        let html = viz_render(&doc);
        assert!(html.contains("data-frame-ids=\"a b\""));
    }

    #[test]
    fn relations_are_embedded() {
        let mut doc = IEDocument::new("d", "Metformin for diabetes");
        doc.frames.push(Frame::new("0001", "Metformin", 0, 9).with_attr("Type", "Drug"));
        doc.frames.push(Frame::new("0002", "diabetes", 14, 22).with_attr("Type", "Condition"));
        doc.relations.push(Relation::typed("0002", "0001", "Condition-Drug"));
        let html = viz_render(&doc);
        let start = html.find("id=\"llmie-data\">").unwrap() + "id=\"llmie-data\">".len();
        let end = start + html[start..].find("</script>").unwrap();
        let data: serde_json::Value = serde_json::from_str(&html[start..end]).unwrap();
        assert_eq!(data["relations"][0]["relation_type"], "Condition-Drug");
        assert_eq!(data["relations"][0]["frame_1_id"], "0002");
    }

    #[test]
    fn script_json_cannot_close_the_tag() {
        let mut doc = IEDocument::new("</script>", "x");
        doc.frames.push(Frame::new("0001", "x", 0, 1).with_attr("k", "</script><b>"));
        let html = viz_render(&doc);
        assert_eq!(html.matches("</script>").count(), 2);
    }
}
