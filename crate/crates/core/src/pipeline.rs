//! Frame extraction followed by optional relation extraction, producing one
//! [`IEDocument`] per input text.

use serde::{Deserialize, Serialize};

use crate::datamodel::{Frame, IEDocument};
use crate::engine::Engine;
use crate::extractors::{
    enumerate_pairs, extract_frames, extract_relations, ExtractError, ExtractorConfig, FrameExtractorKind, RelationMode,
    NO_RELATION,
};

fn default_type_attribute() -> String {
    "Type".to_string()
}

/// Admissible relation types for pairs whose type values are `between`
/// (in either order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterRule {
    pub between: [String; 2],
    pub relation_types: Vec<String>,
}

/// Declarative pair pre-filter, loadable from a JSON rules file:
///
/// ```json
/// {"type_attribute": "Type",
///  "rules": [{"between": ["Drug", "Dosage"], "relation_types": ["Dosage-Drug"]}],
///  "default": []}
/// ```
///
/// The first matching rule wins; unmatched pairs get `default`. An empty
/// list means the pair is never sent to the model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelationFilter {
    #[serde(default = "default_type_attribute")]
    pub type_attribute: String,
    #[serde(default)]
    pub rules: Vec<FilterRule>,
    #[serde(default)]
    pub default: Vec<String>,
}

impl RelationFilter {
    /// Every pair is a candidate with the given types.
    pub fn permissive(types: Vec<String>) -> Self {
        Self { type_attribute: default_type_attribute(), rules: Vec::new(), default: types }
    }

    pub fn from_json(json: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(json)
    }

    pub fn possible_types(&self, a: &Frame, b: &Frame) -> Vec<String> {
        let (ta, tb) = (a.attr(&self.type_attribute), b.attr(&self.type_attribute));
        for rule in &self.rules {
            let [x, y] = &rule.between;
            let hit = match (ta, tb) {
                (Some(ta), Some(tb)) => (ta == x && tb == y) || (ta == y && tb == x),
                _ => false,
            };
            if hit {
                return rule.relation_types.clone();
            }
        }
        self.default.clone()
    }
}

#[derive(Debug, Clone)]
pub struct RelationStage {
    pub mode: RelationMode,
    pub config: ExtractorConfig,
    pub filter: RelationFilter,
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub frame_kind: FrameExtractorKind,
    pub frame_config: ExtractorConfig,
    pub relations: Option<RelationStage>,
}

/// Result of one document run, with the counts a run manifest records.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineRun {
    pub document: IEDocument,
    pub discarded: usize,
    pub ungrounded: usize,
    pub frame_calls: usize,
    pub relation_tasks: usize,
    pub relation_calls: usize,
    pub notes: Vec<String>,
}

impl PipelineRun {
    pub fn llm_calls(&self) -> usize {
        self.frame_calls + self.relation_calls
    }
}

impl Pipeline {
    pub fn new(frame_kind: FrameExtractorKind, frame_config: ExtractorConfig) -> Self {
        Self { frame_kind, frame_config, relations: None }
    }

    pub fn with_relations(mut self, stage: RelationStage) -> Self {
        self.relations = Some(stage);
        self
    }

    pub fn run(&self, engine: &Engine, doc_id: &str, text: &str) -> Result<PipelineRun, ExtractError> {
        let frames = extract_frames(self.frame_kind, engine, &self.frame_config, text)?;
        let mut doc = IEDocument::new(doc_id, text);
        doc.frames = frames.frames;
        let mut run = PipelineRun {
            document: doc,
            discarded: frames.discarded,
            ungrounded: frames.ungrounded,
            frame_calls: frames.llm_calls,
            relation_tasks: 0,
            relation_calls: 0,
            notes: frames.notes,
        };
        if let Some(stage) = &self.relations {
            let multiclass = stage.mode == RelationMode::Multiclass;
            let tasks = enumerate_pairs(
                text,
                &run.document.frames,
                |a, b| {
                    let mut types = stage.filter.possible_types(a, b);
                    if multiclass && !types.is_empty() && !types.iter().any(|t| t == NO_RELATION) {
                        types.push(NO_RELATION.to_string());
                    }
                    types
                },
                stage.config.context_padding,
            );
            let rel = extract_relations(stage.mode, engine, &stage.config, &run.document, &tasks)?;
            run.relation_tasks = tasks.len();
            run.relation_calls = rel.llm_calls;
            run.document.relations = rel.relations;
            run.notes.extend(rel.notes);
        }
        Ok(run)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn filter() -> RelationFilter {
        RelationFilter::from_json(
            r#"{"rules": [{"between": ["Drug", "Dosage"], "relation_types": ["Dosage-Drug"]}]}"#,
        )
        .unwrap()
    }

    #[test]
    fn rules_match_either_order() {
        let drug = Frame::new("1", "a", 0, 1).with_attr("Type", "Drug");
        let dose = Frame::new("2", "b", 1, 2).with_attr("Type", "Dosage");
        let f = filter();
        assert_eq!(f.possible_types(&drug, &dose), vec!["Dosage-Drug"]);
        assert_eq!(f.possible_types(&dose, &drug), vec!["Dosage-Drug"]);
        assert!(f.possible_types(&dose, &dose).is_empty());
        assert_eq!(f.type_attribute, "Type");
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RelationFilter::from_json(r#"{"rulez": []}"#).is_err());
    }
}
