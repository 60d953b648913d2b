//! Output parsing, span grounding, and sentence segmentation.

mod grounding;
mod json;
mod sentences;

pub use grounding::{ground_entity, Grounding, NotFound};
pub(crate) use grounding::ground_in_chars;
pub use json::{
    extract_json_entities, strip_code_fences, EntityParse, RawEntityRecord, ATTRIBUTES_KEY,
    ENTITY_TEXT_KEY,
};
pub use sentences::{split_sentences, SentenceSpan, ABBREVIATIONS};
