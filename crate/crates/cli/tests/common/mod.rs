#![allow(dead_code)]

use std::path::PathBuf;

pub struct Output {
    pub code: i32,
    pub stdout: String,
    pub stderr: String,
}

/// Runs the CLI in-process.
pub fn llmie(args: &[&str], stdin: &str) -> Output {
    let mut argv = vec!["llmie"];
    argv.extend_from_slice(args);
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = llmie_cli::run_with(argv, &mut stdin.as_bytes(), &mut out, &mut err);
    Output { code, stdout: String::from_utf8(out).unwrap(), stderr: String::from_utf8(err).unwrap() }
}

pub fn fixture(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(rel)
}

pub fn fixture_str(rel: &str) -> String {
    fixture(rel).display().to_string()
}

/// Arguments for the scripted clinical-note extraction with relations.
pub fn clinical_extract_args(input: &str, output: &str, concurrency: &str) -> Vec<String> {
    [
        "extract", "--engine", "scripted", "--script", &fixture_str("clinical/script.json"),
        "--template", &fixture_str("clinical/frame_template.txt"), "--extractor", "sentence",
        "--input", input, "--output", output, "--relations",
        "--relation-template", &fixture_str("clinical/relation_template.txt"),
        "--relation-mode", "multiclass", "--filter", &fixture_str("clinical/filter.json"),
        "--concurrency", concurrency,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

pub fn run_owned(args: &[String], stdin: &str) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    llmie(&refs, stdin)
}
