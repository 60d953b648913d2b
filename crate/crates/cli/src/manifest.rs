//! `manifest.json`: what a run used and what it produced.

use std::path::Path;

use chrono::{DateTime, Utc};
use llmie_core::engine::{EngineDescriptor, GenerationConfig};
use llmie_core::extractors::{FrameExtractorKind, RelationMode, ReviewMode};
use llmie_core::pipeline::RelationFilter;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateRef {
    pub path: String,
    pub sha256: String,
}

impl TemplateRef {
    pub fn new(path: &Path, content: &str) -> Self {
        Self { path: path.display().to_string(), sha256: sha256_hex(content.as_bytes()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorSettings {
    pub kind: FrameExtractorKind,
    pub max_concurrency: usize,
    pub review_mode: ReviewMode,
    pub generation: GenerationConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSettings {
    pub mode: RelationMode,
    pub template: TemplateRef,
    pub context_padding: usize,
    pub filter_path: Option<String>,
    pub filter: RelationFilter,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LlmCalls {
    pub frames: usize,
    pub relations: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub frames: usize,
    pub relations: usize,
    pub discarded_records: usize,
    pub ungrounded_records: usize,
    pub relation_tasks: usize,
    pub llm_calls: LlmCalls,
}

impl Counts {
    pub fn add(&mut self, other: &Counts) {
        self.frames += other.frames;
        self.relations += other.relations;
        self.discarded_records += other.discarded_records;
        self.ungrounded_records += other.ungrounded_records;
        self.relation_tasks += other.relation_tasks;
        self.llm_calls.frames += other.llm_calls.frames;
        self.llm_calls.relations += other.llm_calls.relations;
        self.llm_calls.total += other.llm_calls.total;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DocStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentEntry {
    pub doc_id: String,
    pub input: String,
    pub output: Option<String>,
    pub status: DocStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub counts: Counts,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub engine: EngineDescriptor,
    pub template: TemplateRef,
    pub extractor: ExtractorSettings,
    pub relations: Option<RelationSettings>,
    pub input: String,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub documents: Vec<DocumentEntry>,
    pub totals: Counts,
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(dir.join(MANIFEST_FILE), text)
    }

    pub fn load(dir: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sha256_known_vector() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
