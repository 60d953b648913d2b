use std::io::{BufRead, Write};
use std::path::Path;

use llmie_core::prompt_editor::{extract_template, ChatSession, EditorError, GuidelineStore, PromptEditor};

use crate::args::ChatArgs;
use crate::engine_opts::EngineFactory;
use crate::{CmdResult, WithCode, EXIT_OK, EXIT_USAGE};

/// Delimits a multi-line message when given on a line of its own.
pub const BLOCK_DELIMITER: &str = "\"\"\"";

fn save(session: &ChatSession, file: &str) -> Result<String, String> {
    let reply = session.last_reply().ok_or("no assistant reply to save yet")?;
    let template = extract_template(reply).map_err(|e| match e {
        EditorError::TemplateIncomplete(missing) => {
            format!("the last reply is not a complete template (missing: {})", missing.join(", "))
        }
        other => other.to_string(),
    })?;
    let path = Path::new(file);
    std::fs::write(path, template.text()).map_err(|e| format!("writing {file}: {e}"))?;
    Ok(format!("saved template to {file} (placeholders: {})", template.placeholders().join(", ")))
}

pub fn run(args: &ChatArgs, stdin: &mut dyn BufRead, stdout: &mut dyn Write) -> CmdResult {
    let factory = EngineFactory::from_args(&args.engine)?;
    let engine = factory.build().code(EXIT_USAGE)?;
    let store = match &args.guidelines {
        Some(dir) => GuidelineStore::from_dir(dir).code(EXIT_USAGE)?,
        None => GuidelineStore::builtin(),
    };
    let mut session = PromptEditor::new(store)
        .new_session(&args.extractor, factory.descriptor().clone())
        .code(EXIT_USAGE)?;
    let _ = writeln!(
        stdout,
        "Prompt editor ({}). Send a message, /save FILE, or /quit. Wrap multi-line messages in {BLOCK_DELIMITER}.",
        session.extractor_kind.as_str()
    );

    let mut lines = stdin.lines();
    while let Some(Ok(line)) = lines.next() {
        let trimmed = line.trim();
        let message = if trimmed == BLOCK_DELIMITER {
            let mut block = Vec::new();
            for l in lines.by_ref() {
                let Ok(l) = l else { break };
                if l.trim() == BLOCK_DELIMITER {
                    break;
                }
                block.push(l);
            }
            block.join("\n")
        } else if trimmed == "/quit" {
            break;
        } else if let Some(rest) = trimmed.strip_prefix("/save") {
            let file = rest.trim();
            let msg = if file.is_empty() {
                Err("usage: /save FILE".to_string())
            } else {
                save(&session, file)
            };
            let _ = match msg {
                Ok(m) => writeln!(stdout, "{m}"),
                Err(e) => writeln!(stdout, "error: {e}"),
            };
            continue;
        } else if trimmed.is_empty() {
            continue;
        } else {
            line
        };
        match session.chat_turn(&engine, &message) {
            Ok(reply) => {
                let _ = writeln!(stdout, "assistant:\n{reply}\n");
            }
            Err(e) => {
                let _ = writeln!(stdout, "error: {e}");
            }
        }
    }
    let _ = stdout.flush();
    Ok(EXIT_OK)
}
