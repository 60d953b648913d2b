//! Core library for LLM-driven information extraction: chat engines, prompt
//! templates, frame and relation extraction, evaluation, and rendering.

pub mod datamodel;
pub mod engine;
pub mod evaluation;
pub mod extractors;
pub mod parsing;
pub mod pipeline;
pub mod prompt_editor;
pub mod prompting;
pub mod viz;
