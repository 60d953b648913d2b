use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::Context;
use chrono::Utc;
use llmie_core::datamodel::DOCUMENT_EXTENSION;
use llmie_core::engine::GenerationConfig;
use llmie_core::extractors::{ExtractError, ExtractorConfig, RelationMode};
use llmie_core::pipeline::{Pipeline, PipelineRun, RelationFilter, RelationStage};
use llmie_core::prompting::PromptTemplate;

use crate::args::ExtractArgs;
use crate::engine_opts::EngineFactory;
use crate::manifest::{
    Counts, DocStatus, DocumentEntry, ExtractorSettings, LlmCalls, RelationSettings, RunManifest, TemplateRef,
};
use crate::{CmdResult, Failure, WithCode, EXIT_FAILURE, EXIT_OK, EXIT_PARTIAL, EXIT_UNAVAILABLE, EXIT_USAGE};

/// Text files to process: the file itself, or the sorted `*.txt` files of a
/// directory.
pub fn collect_inputs(input: &Path) -> Result<Vec<PathBuf>, Failure> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    if !input.is_dir() {
        return Err(Failure::usage(format!("--input {} does not exist", input.display())));
    }
    let mut files: Vec<PathBuf> = std::fs::read_dir(input)
        .with_context(|| format!("listing {}", input.display()))
        .code(EXIT_USAGE)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "txt"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(Failure::usage(format!("no .txt files in {}", input.display())));
    }
    Ok(files)
}

fn read_template(path: &Path) -> Result<(PromptTemplate, TemplateRef), Failure> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading template {}", path.display()))
        .code(EXIT_USAGE)?;
    let template = PromptTemplate::new(text.clone())
        .with_context(|| format!("template {}", path.display()))
        .code(EXIT_USAGE)?;
    Ok((template, TemplateRef::new(path, &text)))
}

fn doc_id_for(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn counts_of(run: &PipelineRun) -> Counts {
    Counts {
        frames: run.document.frames.len(),
        relations: run.document.relations.len(),
        discarded_records: run.discarded,
        ungrounded_records: run.ungrounded,
        relation_tasks: run.relation_tasks,
        llm_calls: LlmCalls { frames: run.frame_calls, relations: run.relation_calls, total: run.llm_calls() },
    }
}

struct Setup {
    pipeline: Pipeline,
    template_ref: TemplateRef,
    relation_settings: Option<RelationSettings>,
}

fn setup(args: &ExtractArgs) -> Result<Setup, Failure> {
    let (template, template_ref) = read_template(&args.template)?;
    let generation = GenerationConfig {
        temperature: args.temperature,
        max_tokens: args.max_tokens,
        stop_sequences: Vec::new(),
    };
    generation.validate().code(EXIT_USAGE)?;
    let mut frame_config = ExtractorConfig::new(template)
        .with_concurrency(args.concurrency as usize)
        .with_review_mode(args.review_mode.into());
    frame_config.generation = generation.clone();
    if let Some(path) = &args.system_prompt {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .code(EXIT_USAGE)?;
        frame_config.system_prompt = Some(text);
    }
    let mut pipeline = Pipeline::new(args.extractor.into(), frame_config.clone());

    let mut relation_settings = None;
    if args.relations {
        let path = args.relation_template.as_ref().ok_or_else(|| Failure::usage("--relations needs --relation-template"))?;
        let (template, template_ref) = read_template(path)?;
        let mode: RelationMode = args.relation_mode.into();
        let filter = match &args.filter {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading filter {}", p.display()))
                    .code(EXIT_USAGE)?;
                RelationFilter::from_json(&text)
                    .with_context(|| format!("parsing filter {}", p.display()))
                    .code(EXIT_USAGE)?
            }
            None if mode == RelationMode::Multiclass => {
                return Err(Failure::usage("--relation-mode multiclass needs --filter listing the relation types"));
            }
            None => RelationFilter::permissive(vec!["related".to_string()]),
        };
        let mut config = ExtractorConfig::new(template)
            .with_concurrency(args.concurrency as usize)
            .with_context_padding(args.context_padding);
        config.generation = generation;
        config.system_prompt = frame_config.system_prompt.clone();
        relation_settings = Some(RelationSettings {
            mode,
            template: template_ref,
            context_padding: args.context_padding,
            filter_path: args.filter.as_ref().map(|p| p.display().to_string()),
            filter: filter.clone(),
        });
        pipeline = pipeline.with_relations(RelationStage { mode, config, filter });
    }
    Ok(Setup { pipeline, template_ref, relation_settings })
}

pub fn run(args: &ExtractArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let factory = EngineFactory::from_args(&args.engine)?;
    let Setup { pipeline, template_ref, relation_settings } = setup(args)?;
    let inputs = collect_inputs(&args.input)?;
    std::fs::create_dir_all(&args.output)
        .with_context(|| format!("creating {}", args.output.display()))
        .code(EXIT_FAILURE)?;

    let started_at = Utc::now();
    let mut documents = Vec::with_capacity(inputs.len());
    let mut totals = Counts::default();
    let mut failed = 0;
    let mut unreachable = None;

    for path in &inputs {
        let doc_id = doc_id_for(path);
        let mut entry = DocumentEntry {
            doc_id: doc_id.clone(),
            input: path.display().to_string(),
            output: None,
            status: DocStatus::Failed,
            error: None,
            counts: Counts::default(),
            notes: Vec::new(),
        };
        if unreachable.is_some() {
            entry.error = Some("skipped: engine unreachable".into());
            documents.push(entry);
            continue;
        }
        let outcome = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .and_then(|text| {
                let engine = factory.build()?;
                match pipeline.run(&engine, &doc_id, &text) {
                    Ok(run) => Ok(run),
                    Err(ExtractError::Engine(e)) if e.is_unreachable() => {
                        unreachable = Some(e.clone());
                        Err(e.into())
                    }
                    Err(e) => Err(e.into()),
                }
            })
            .and_then(|run| {
                let out = args.output.join(format!("{doc_id}.{DOCUMENT_EXTENSION}"));
                run.document.save(&out)?;
                Ok((run, out))
            });
        match outcome {
            Ok((run, out)) => {
                entry.counts = counts_of(&run);
                entry.notes = run.notes;
                entry.output = Some(out.display().to_string());
                entry.status = DocStatus::Ok;
                totals.add(&entry.counts);
                let _ = writeln!(
                    stdout,
                    "{doc_id}: {} frames, {} relations, {} LLM calls",
                    entry.counts.frames, entry.counts.relations, entry.counts.llm_calls.total
                );
            }
            Err(e) => {
                failed += 1;
                let _ = writeln!(stderr, "{doc_id}: failed: {e:#}");
                entry.error = Some(format!("{e:#}"));
            }
        }
        documents.push(entry);
    }

    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        engine: factory.descriptor().clone(),
        template: template_ref,
        extractor: ExtractorSettings {
            kind: pipeline.frame_kind,
            max_concurrency: pipeline.frame_config.max_concurrency,
            review_mode: pipeline.frame_config.review_mode,
            generation: pipeline.frame_config.generation.clone(),
        },
        relations: relation_settings,
        input: args.input.display().to_string(),
        started_at,
        finished_at: Utc::now(),
        documents,
        totals,
    };
    manifest.write(&args.output).context("writing manifest").code(EXIT_FAILURE)?;

    if let Some(e) = unreachable {
        return Err(Failure::new(EXIT_UNAVAILABLE, anyhow::anyhow!("engine unreachable: {e}")));
    }
    Ok(if failed > 0 { EXIT_PARTIAL } else { EXIT_OK })
}
