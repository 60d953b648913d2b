use anyhow::Context;
use llmie_core::datamodel::IEDocument;
use llmie_core::viz::viz_render;

use crate::args::RenderArgs;
use crate::{CmdResult, WithCode, EXIT_DATA, EXIT_FAILURE, EXIT_OK};

pub fn run(args: &RenderArgs) -> CmdResult {
    let doc = IEDocument::load(&args.input).code(EXIT_DATA)?;
    std::fs::write(&args.output, viz_render(&doc))
        .with_context(|| format!("writing {}", args.output.display()))
        .code(EXIT_FAILURE)?;
    Ok(EXIT_OK)
}
