use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use llmie_core::extractors::{FrameExtractorKind, RelationMode, ReviewMode};

#[derive(Debug, Parser)]
#[command(name = "llmie", version, about = "LLM-based information extraction toolkit")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract frames (and optionally relations) from text files
    Extract(ExtractArgs),
    /// Score predicted documents against gold documents
    Eval(EvalArgs),
    /// Interactive prompt-writing session with the prompt editor
    Chat(ChatArgs),
    /// Render a document as a standalone HTML page
    Render(RenderArgs),
    /// Serve documents, extraction and the prompt editor over HTTP
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum EngineChoice {
    Openai,
    Ollama,
    Scripted,
}

#[derive(Debug, Clone, Args)]
pub struct EngineArgs {
    #[arg(long, value_enum)]
    pub engine: EngineChoice,
    /// Server root, e.g. http://localhost:8000/v1 or http://localhost:11434
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Environment variable holding the API key
    #[arg(long)]
    pub api_key_env: Option<String>,
    /// JSON list of {"matcher", "response"} rules for the scripted engine
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Per-request timeout in seconds
    #[arg(long, default_value_t = 300)]
    pub timeout: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtractorChoice {
    Basic,
    Review,
    Sentence,
}

impl From<ExtractorChoice> for FrameExtractorKind {
    fn from(c: ExtractorChoice) -> Self {
        match c {
            ExtractorChoice::Basic => FrameExtractorKind::Basic,
            ExtractorChoice::Review => FrameExtractorKind::Review,
            ExtractorChoice::Sentence => FrameExtractorKind::Sentence,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RelationModeChoice {
    Binary,
    Multiclass,
}

impl From<RelationModeChoice> for RelationMode {
    fn from(c: RelationModeChoice) -> Self {
        match c {
            RelationModeChoice::Binary => RelationMode::Binary,
            RelationModeChoice::Multiclass => RelationMode::Multiclass,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReviewModeChoice {
    Addition,
    Revision,
}

impl From<ReviewModeChoice> for ReviewMode {
    fn from(c: ReviewModeChoice) -> Self {
        match c {
            ReviewModeChoice::Addition => ReviewMode::Addition,
            ReviewModeChoice::Revision => ReviewMode::Revision,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct ExtractArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// Frame extraction prompt template (must contain {{input}})
    #[arg(long)]
    pub template: PathBuf,
    #[arg(long, value_enum, default_value = "basic")]
    pub extractor: ExtractorChoice,
    /// A text file, or a directory whose *.txt files are processed
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub system_prompt: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "addition")]
    pub review_mode: ReviewModeChoice,
    /// Also extract relations between the frames
    #[arg(long, requires = "relation_template")]
    pub relations: bool,
    #[arg(long)]
    pub relation_template: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "binary")]
    pub relation_mode: RelationModeChoice,
    /// JSON rules deciding which frame pairs are sent to the model
    #[arg(long)]
    pub filter: Option<PathBuf>,
    /// Characters of context on each side of a frame pair
    #[arg(long, default_value_t = llmie_core::extractors::DEFAULT_CONTEXT_PADDING)]
    pub context_padding: usize,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub concurrency: u32,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 4096)]
    pub max_tokens: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    Strict,
    #[value(alias = "lenient")]
    Relaxed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Json,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long, value_enum, default_value = "strict")]
    pub mode: ModeChoice,
    /// Attribute keys whose accuracy is reported over matched frames
    #[arg(long, value_delimiter = ',')]
    pub attributes: Vec<String>,
    /// Also score relations
    #[arg(long)]
    pub relations: bool,
    /// Count a span match regardless of the Type attribute
    #[arg(long)]
    pub ignore_types: bool,
    #[arg(long, value_enum, default_value = "table")]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Args)]
pub struct ChatArgs {
    #[command(flatten)]
    pub engine: EngineArgs,
    /// basic, review, sentence, binary_relation or multiclass_relation
    #[arg(long)]
    pub extractor: String,
    /// Directory of <kind>.md guideline files replacing the built-in ones
    #[arg(long)]
    pub guidelines: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    /// Directory of .llmie documents (never written to)
    #[arg(long)]
    pub docs: PathBuf,
    /// Built workbench assets served at /
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub engine: Option<EngineChoice>,
    #[arg(long)]
    pub base_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Per-request engine timeout in seconds
    #[arg(long, default_value_t = 300)]
    pub timeout: u64,
    #[arg(long, default_value_t = 4)]
    pub workers: usize,
}

impl ServeArgs {
    pub fn engine_args(&self) -> Option<EngineArgs> {
        self.engine.map(|engine| EngineArgs {
            engine,
            base_url: self.base_url.clone(),
            model: self.model.clone(),
            api_key_env: self.api_key_env.clone(),
            script: self.script.clone(),
            timeout: self.timeout,
        })
    }
}
