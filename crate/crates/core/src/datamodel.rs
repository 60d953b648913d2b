//! Document container for frames and relations, with validation and the
//! canonical `.llmie` file format.
//!
//! All offsets are counted in Unicode scalar values (`char`s), not bytes.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Current `.llmie` file format version.
pub const FORMAT_VERSION: u32 = 1;

/// File extension of saved documents.
pub const DOCUMENT_EXTENSION: &str = "llmie";

pub type Attributes = BTreeMap<String, String>;

/// One extracted entity, anchored to a character span of the document text.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Frame {
    pub frame_id: String,
    pub entity_text: String,
    pub start: usize,
    pub end: usize,
    pub attributes: Attributes,
}

impl Frame {
    pub fn new(
        frame_id: impl Into<String>,
        entity_text: impl Into<String>,
        start: usize,
        end: usize,
    ) -> Self {
        Self {
            frame_id: frame_id.into(),
            entity_text: entity_text.into(),
            start,
            end,
            attributes: Attributes::new(),
        }
    }

    pub fn with_attr(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.attributes.insert(key.into(), value.into());
        self
    }

    pub fn attr(&self, key: &str) -> Option<&str> {
        self.attributes.get(key).map(String::as_str)
    }

    /// Same span and attributes; the id and text are ignored.
    pub fn same_content(&self, other: &Frame) -> bool {
        self.start == other.start && self.end == other.end && self.attributes == other.attributes
    }

    pub fn overlaps(&self, other: &Frame) -> bool {
        self.start < other.end && other.start < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Relation {
    pub frame_1_id: String,
    pub frame_2_id: String,
    pub relation_type: Option<String>,
}

impl Relation {
    pub fn untyped(frame_1_id: impl Into<String>, frame_2_id: impl Into<String>) -> Self {
        Self {
            frame_1_id: frame_1_id.into(),
            frame_2_id: frame_2_id.into(),
            relation_type: None,
        }
    }

    pub fn typed(
        frame_1_id: impl Into<String>,
        frame_2_id: impl Into<String>,
        relation_type: impl Into<String>,
    ) -> Self {
        Self {
            frame_1_id: frame_1_id.into(),
            frame_2_id: frame_2_id.into(),
            relation_type: Some(relation_type.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DuplicatePolicy {
    #[default]
    RejectDuplicates,
    Allow,
}

#[derive(Debug, Error)]
pub enum DocumentError {
    #[error("frame {frame_id}: span ({start},{end}) outside document of length {len}")]
    SpanOutOfBounds {
        frame_id: String,
        start: usize,
        end: usize,
        len: usize,
    },
    #[error("frame {frame_id}: text at ({start},{end}) is {actual:?}, not {expected:?}")]
    SpanMismatch {
        frame_id: String,
        start: usize,
        end: usize,
        expected: String,
        actual: String,
    },
    #[error("frame id must not be empty")]
    EmptyFrameId,
    #[error("duplicate frame id {0}")]
    DuplicateId(String),
    #[error("frame {new_id} duplicates frame {existing_id} (same span and attributes)")]
    DuplicateFrame { new_id: String, existing_id: String },
    #[error("relation references unknown frame id {0}")]
    UnknownFrameId(String),
    #[error("relation links frame {0} to itself")]
    SelfRelation(String),
    #[error("document has {0} validation error(s); refusing to save")]
    Invalid(usize),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
}

/// Character-indexed view of a string.
pub(crate) struct CharIndex<'a> {
    text: &'a str,
    // byte offset of each char, plus a trailing entry for text.len()
    offsets: Vec<usize>,
}

impl<'a> CharIndex<'a> {
    pub(crate) fn new(text: &'a str) -> Self {
        let mut offsets: Vec<usize> = text.char_indices().map(|(i, _)| i).collect();
        offsets.push(text.len());
        Self { text, offsets }
    }

    pub(crate) fn len(&self) -> usize {
        self.offsets.len() - 1
    }

    pub(crate) fn slice(&self, start: usize, end: usize) -> Option<&'a str> {
        if start > end || end > self.len() {
            return None;
        }
        Some(&self.text[self.offsets[start]..self.offsets[end]])
    }
}

/// Slice `text` by character offsets `[start, end)`.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut iter = text.char_indices().map(|(i, _)| i).chain(std::iter::once(text.len()));
    let s = iter.nth(start)?;
    let e = if end == start { s } else { iter.nth(end - start - 1)? };
    Some(&text[s..e])
}

fn check_span(index: &CharIndex<'_>, frame: &Frame) -> Result<(), DocumentError> {
    if frame.frame_id.is_empty() {
        return Err(DocumentError::EmptyFrameId);
    }
    if frame.start >= frame.end || frame.end > index.len() {
        return Err(DocumentError::SpanOutOfBounds {
            frame_id: frame.frame_id.clone(),
            start: frame.start,
            end: frame.end,
            len: index.len(),
        });
    }
    let actual = index.slice(frame.start, frame.end).unwrap_or_default();
    if actual != frame.entity_text {
        return Err(DocumentError::SpanMismatch {
            frame_id: frame.frame_id.clone(),
            start: frame.start,
            end: frame.end,
            expected: frame.entity_text.clone(),
            actual: actual.to_string(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: String,
    pub message: String,
    pub subjects: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn errors(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Error)
    }

    pub fn warnings(&self) -> impl Iterator<Item = &Finding> {
        self.findings.iter().filter(|f| f.severity == Severity::Warning)
    }

    pub fn has_errors(&self) -> bool {
        self.errors().next().is_some()
    }

    fn push(&mut self, severity: Severity, code: &str, message: String, subjects: Vec<String>) {
        self.findings.push(Finding {
            severity,
            code: code.to_string(),
            message,
            subjects,
        });
    }
}

/// A self-contained document: text plus the frames and relations extracted
/// from it.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IEDocument {
    pub doc_id: String,
    pub text: String,
    pub frames: Vec<Frame>,
    pub relations: Vec<Relation>,
}

impl IEDocument {
    pub fn new(doc_id: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            doc_id: doc_id.into(),
            text: text.into(),
            frames: Vec::new(),
            relations: Vec::new(),
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    pub fn frame(&self, frame_id: &str) -> Option<&Frame> {
        self.frames.iter().find(|f| f.frame_id == frame_id)
    }

    pub fn add_frame(&mut self, frame: Frame, policy: DuplicatePolicy) -> Result<(), DocumentError> {
        check_span(&CharIndex::new(&self.text), &frame)?;
        if self.frame(&frame.frame_id).is_some() {
            return Err(DocumentError::DuplicateId(frame.frame_id));
        }
        if policy == DuplicatePolicy::RejectDuplicates {
            if let Some(existing) = self.frames.iter().find(|f| f.same_content(&frame)) {
                return Err(DocumentError::DuplicateFrame {
                    new_id: frame.frame_id,
                    existing_id: existing.frame_id.clone(),
                });
            }
        }
        self.frames.push(frame);
        Ok(())
    }

    pub fn add_relation(&mut self, relation: Relation) -> Result<(), DocumentError> {
        for id in [&relation.frame_1_id, &relation.frame_2_id] {
            if self.frame(id).is_none() {
                return Err(DocumentError::UnknownFrameId(id.clone()));
            }
        }
        if relation.frame_1_id == relation.frame_2_id {
            return Err(DocumentError::SelfRelation(relation.frame_1_id));
        }
        self.relations.push(relation);
        Ok(())
    }

    /// Errors: span violations, duplicate ids, dangling or self relations.
    /// Warnings: redundant (same span and attributes) frames and overlapping
    /// frames. A redundant pair is not also reported as overlapping.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        let index = CharIndex::new(&self.text);

        let mut seen_ids: HashSet<&str> = HashSet::new();
        for frame in &self.frames {
            if let Err(e) = check_span(&index, frame) {
                let code = match e {
                    DocumentError::EmptyFrameId => "empty_frame_id",
                    DocumentError::SpanOutOfBounds { .. } => "span_out_of_bounds",
                    _ => "span_mismatch",
                };
                report.push(Severity::Error, code, e.to_string(), vec![frame.frame_id.clone()]);
            }
            if !frame.frame_id.is_empty() && !seen_ids.insert(&frame.frame_id) {
                report.push(
                    Severity::Error,
                    "duplicate_frame_id",
                    format!("frame id {} used more than once", frame.frame_id),
                    vec![frame.frame_id.clone()],
                );
            }
        }

        for (i, a) in self.frames.iter().enumerate() {
            for b in &self.frames[i + 1..] {
                if a.same_content(b) {
                    report.push(
                        Severity::Warning,
                        "redundant_frame",
                        format!("frames {} and {} have the same span and attributes", a.frame_id, b.frame_id),
                        vec![a.frame_id.clone(), b.frame_id.clone()],
                    );
                } else if a.overlaps(b) {
                    report.push(
                        Severity::Warning,
                        "overlapping_frames",
                        format!(
                            "frames {} ({},{}) and {} ({},{}) overlap",
                            a.frame_id, a.start, a.end, b.frame_id, b.start, b.end
                        ),
                        vec![a.frame_id.clone(), b.frame_id.clone()],
                    );
                }
            }
        }

        for relation in &self.relations {
            let subjects = vec![relation.frame_1_id.clone(), relation.frame_2_id.clone()];
            for id in [&relation.frame_1_id, &relation.frame_2_id] {
                if !seen_ids.contains(id.as_str()) {
                    report.push(
                        Severity::Error,
                        "dangling_relation",
                        format!("relation references missing frame {id}"),
                        subjects.clone(),
                    );
                }
            }
            if relation.frame_1_id == relation.frame_2_id {
                report.push(
                    Severity::Error,
                    "self_relation",
                    format!("relation links frame {} to itself", relation.frame_1_id),
                    subjects,
                );
            }
        }
        report
    }

    /// Canonical `.llmie` JSON: two-space indentation and a trailing newline.
    pub fn to_json(&self) -> String {
        let file = DocumentFileRef {
            format_version: FORMAT_VERSION,
            doc_id: &self.doc_id,
            text: &self.text,
            frames: &self.frames,
            relations: &self.relations,
        };
        let mut out = serde_json::to_string_pretty(&file).expect("document serializes");
        out.push('\n');
        out
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::from_str(&self.to_json()).expect("canonical json parses")
    }

    pub fn from_json(json: &str) -> Result<Self, DocumentError> {
        let value: serde_json::Value =
            serde_json::from_str(json).map_err(|e| DocumentError::Schema(e.to_string()))?;
        Self::from_value(value)
    }

    pub fn from_value(value: serde_json::Value) -> Result<Self, DocumentError> {
        let version = value
            .get("format_version")
            .ok_or_else(|| DocumentError::Schema("missing key `format_version`".into()))?;
        if version.as_u64() != Some(FORMAT_VERSION as u64) {
            return Err(DocumentError::Schema(format!(
                "unsupported format_version {version} (expected {FORMAT_VERSION})"
            )));
        }
        let file: DocumentFile =
            serde_json::from_value(value).map_err(|e| DocumentError::Schema(e.to_string()))?;
        Ok(Self {
            doc_id: file.doc_id,
            text: file.text,
            frames: file.frames,
            relations: file.relations,
        })
    }

    /// Writes the canonical file. Documents with error-severity findings are
    /// refused.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DocumentError> {
        let errors = self.validate().errors().count();
        if errors > 0 {
            return Err(DocumentError::Invalid(errors));
        }
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|source| DocumentError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DocumentError> {
        let path = path.as_ref();
        let json = fs::read_to_string(path).map_err(|source| DocumentError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&json)
    }

    /// Map from frame id to frame.
    pub fn frame_map(&self) -> HashMap<&str, &Frame> {
        self.frames.iter().map(|f| (f.frame_id.as_str(), f)).collect()
    }
}

#[derive(Serialize)]
struct DocumentFileRef<'a> {
    format_version: u32,
    doc_id: &'a str,
    text: &'a str,
    frames: &'a [Frame],
    relations: &'a [Relation],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DocumentFile {
    #[allow(dead_code)]
    format_version: u32,
    doc_id: String,
    text: String,
    frames: Vec<Frame>,
    relations: Vec<Relation>,
}

/// Assigns zero-padded ordinal ids ("0001", "0002", ...) in list order.
pub fn assign_ordinal_ids(frames: &mut [Frame]) {
    for (i, frame) in frames.iter_mut().enumerate() {
        frame.frame_id = ordinal_id(i + 1);
    }
}

pub fn ordinal_id(n: usize) -> String {
    format!("{n:04}")
}
