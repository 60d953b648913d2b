//! Prompting algorithms that turn documents into frames and frame pairs into
//! relations.

mod frame;
mod relation;

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{EngineError, GenerationConfig};
use crate::prompting::{PromptTemplate, TemplateError};

pub use frame::{basic_extract, extract_frames, review_extract, sentence_extract, FrameOutput};
pub use relation::{
    binary_relation_extract, build_pair_context, enumerate_pairs, extract_relations,
    multiclass_relation_extract, parse_binary_answer, parse_multiclass_answer, FramePairTask,
    RelationOutput, NO_RELATION,
};

pub const DEFAULT_REVIEW_INSTRUCTION: &str = "Review the text and your extraction above. Add any missed entities and correct mistakes. Output the complete JSON list again.";

pub const DEFAULT_CONTEXT_PADDING: usize = 200;

#[derive(Debug, Error)]
pub enum ExtractError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("extractor configuration error: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReviewMode {
    /// Keep the initial frames and add new ones from the review turn.
    #[default]
    Addition,
    /// Replace the initial frames with the review turn's output.
    Revision,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameExtractorKind {
    Basic,
    Review,
    Sentence,
}

impl FromStr for FrameExtractorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "basic" => Ok(Self::Basic),
            "review" => Ok(Self::Review),
            "sentence" => Ok(Self::Sentence),
            other => Err(format!("unknown frame extractor {other:?}")),
        }
    }
}

impl fmt::Display for FrameExtractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Basic => "basic",
            Self::Review => "review",
            Self::Sentence => "sentence",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RelationMode {
    Binary,
    Multiclass,
}

impl FromStr for RelationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "binary" => Ok(Self::Binary),
            "multiclass" => Ok(Self::Multiclass),
            other => Err(format!("unknown relation mode {other:?}")),
        }
    }
}

/// Settings shared by all extractors. The engine is passed separately.
#[derive(Debug, Clone)]
pub struct ExtractorConfig {
    pub template: PromptTemplate,
    pub system_prompt: Option<String>,
    pub generation: GenerationConfig,
    pub max_concurrency: usize,
    pub review_mode: ReviewMode,
    pub review_instruction: String,
    pub context_padding: usize,
}

impl ExtractorConfig {
    pub fn new(template: PromptTemplate) -> Self {
        Self {
            template,
            system_prompt: None,
            generation: GenerationConfig::default(),
            max_concurrency: 1,
            review_mode: ReviewMode::default(),
            review_instruction: DEFAULT_REVIEW_INSTRUCTION.to_string(),
            context_padding: DEFAULT_CONTEXT_PADDING,
        }
    }

    pub fn with_concurrency(mut self, n: usize) -> Self {
        self.max_concurrency = n;
        self
    }

    pub fn with_review_mode(mut self, mode: ReviewMode) -> Self {
        self.review_mode = mode;
        self
    }

    pub fn with_context_padding(mut self, padding: usize) -> Self {
        self.context_padding = padding;
        self
    }

    fn check(&self) -> Result<(), ExtractError> {
        if self.max_concurrency == 0 {
            return Err(ExtractError::Config("max_concurrency must be >= 1".into()));
        }
        Ok(())
    }
}

/// Runs `task(0..n)` on up to `workers` threads and returns the results in
/// index order, independent of completion order.
pub(crate) fn run_ordered<T, F>(n: usize, workers: usize, task: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let workers = workers.clamp(1, n.max(1));
    if workers == 1 {
        return (0..n).map(task).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<T>>> = Mutex::new((0..n).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= n {
                    break;
                }
                let result = task(i);
                slots.lock().unwrap_or_else(|e| e.into_inner())[i] = Some(result);
            });
        }
    });
    slots
        .into_inner()
        .unwrap_or_else(|e| e.into_inner())
        .into_iter()
        .map(|slot| slot.expect("every task index ran"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_ordered_preserves_index_order() {
        let out = run_ordered(50, 8, |i| {
            std::thread::sleep(std::time::Duration::from_micros(((50 - i) * 20) as u64));
            i * 2
        });
        assert_eq!(out, (0..50).map(|i| i * 2).collect::<Vec<_>>());
        assert!(run_ordered(0, 4, |i| i).is_empty());
    }
}
