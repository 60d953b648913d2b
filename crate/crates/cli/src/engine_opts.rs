//! Turning engine flags into engines.

use std::sync::Arc;
use std::time::Duration;

use anyhow::Context;
use llmie_core::engine::{Engine, EngineDescriptor, EngineKind, ScriptRule};

use crate::args::{EngineArgs, EngineChoice};
use crate::{Failure, WithCode, EXIT_USAGE};

/// Builds a fresh engine on demand. Each extraction or chat request gets its
/// own engine so call counts and inspection logs stay per-request.
#[derive(Clone)]
pub struct EngineFactory {
    descriptor: EngineDescriptor,
    build: Arc<dyn Fn() -> Result<Engine, llmie_core::engine::EngineError> + Send + Sync>,
}

impl EngineFactory {
    pub fn from_args(args: &EngineArgs) -> Result<Self, Failure> {
        let timeout = Duration::from_secs(args.timeout);
        if args.engine == EngineChoice::Scripted {
            let path = args
                .script
                .as_ref()
                .ok_or_else(|| Failure::usage("--engine scripted needs --script FILE"))?;
            let rules = load_script(path).code(EXIT_USAGE)?;
            return Ok(Self::scripted(rules));
        }
        let base_url = args.base_url.clone().ok_or_else(|| Failure::usage("--base-url is required"))?;
        let model = args.model.clone().ok_or_else(|| Failure::usage("--model is required"))?;
        let mut descriptor = match args.engine {
            EngineChoice::Ollama => EngineDescriptor::ollama(base_url, model),
            _ => EngineDescriptor::openai_compatible(base_url, model),
        };
        descriptor.api_key_env = args.api_key_env.clone().unwrap_or_default();
        descriptor.validate().code(EXIT_USAGE)?;
        let d = descriptor.clone();
        Ok(Self {
            descriptor,
            build: Arc::new(move || Engine::with_timeout(d.clone(), timeout)),
        })
    }

    pub fn scripted(rules: Vec<ScriptRule>) -> Self {
        Self {
            descriptor: EngineDescriptor::scripted(),
            build: Arc::new(move || Engine::scripted(rules.clone())),
        }
    }

    pub fn descriptor(&self) -> &EngineDescriptor {
        &self.descriptor
    }

    pub fn kind(&self) -> EngineKind {
        self.descriptor.kind
    }

    pub fn build(&self) -> Result<Engine, llmie_core::engine::EngineError> {
        (self.build)()
    }
}

pub fn load_script(path: &std::path::Path) -> anyhow::Result<Vec<ScriptRule>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading script {}", path.display()))?;
    let rules: Vec<ScriptRule> =
        serde_json::from_str(&text).with_context(|| format!("parsing script {}", path.display()))?;
    Ok(rules)
}
