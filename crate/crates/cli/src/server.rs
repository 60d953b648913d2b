//! HTTP/JSON API over a read-only document directory, synchronous
//! extraction, and prompt-editor sessions.
//!
//! | method | path | body | reply |
//! |---|---|---|---|
//! | GET | `/api/docs` | | `["id", ...]` |
//! | GET | `/api/docs/{id}` | | the `.llmie` file |
//! | POST | `/api/extract` | `{text, template, extractor, config}` | `.llmie` JSON |
//! | POST | `/api/editor/session` | `{extractor_kind}` | `{session_id}` |
//! | POST | `/api/editor/{session_id}/chat` | `{text}` | `{reply, template}` |
//! | GET | `/view/{id}` | | rendered HTML |
//! | GET | `/...` | | static assets |
//!
//! Errors are JSON `{code, message}` objects; engine failures map to 502.

use std::collections::HashMap;
use std::io::Read;
use std::net::SocketAddr;
use std::path::{Component, Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::Duration;

use anyhow::anyhow;
use llmie_core::datamodel::{IEDocument, DOCUMENT_EXTENSION};
use llmie_core::engine::{EngineError, GenerationConfig};
use llmie_core::extractors::{ExtractError, ExtractorConfig, FrameExtractorKind, RelationMode, ReviewMode};
use llmie_core::pipeline::{Pipeline, RelationFilter, RelationStage};
use llmie_core::prompt_editor::{extract_template, ChatSession, EditorError, PromptEditor};
use llmie_core::prompting::PromptTemplate;
use llmie_core::viz::{escape_html, viz_render};
use percent_encoding::{percent_decode_str, utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};

const PATH_SEGMENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'_').remove(b'.').remove(b'~');
use serde::Deserialize;
use serde_json::json;

use crate::engine_opts::EngineFactory;

const MAX_BODY: u64 = 16 * 1024 * 1024;
const JSON_TYPE: &str = "application/json; charset=utf-8";
const HTML_TYPE: &str = "text/html; charset=utf-8";

#[derive(Clone)]
pub struct ServerConfig {
    pub docs_dir: PathBuf,
    pub static_dir: Option<PathBuf>,
    pub engine: Option<EngineFactory>,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reply {
    pub status: u16,
    pub content_type: &'static str,
    pub body: Vec<u8>,
}

impl Reply {
    fn json(status: u16, value: &serde_json::Value) -> Self {
        Self { status, content_type: JSON_TYPE, body: value.to_string().into_bytes() }
    }

    fn raw_json(body: String) -> Self {
        Self { status: 200, content_type: JSON_TYPE, body: body.into_bytes() }
    }

    fn html(body: String) -> Self {
        Self { status: 200, content_type: HTML_TYPE, body: body.into_bytes() }
    }

    fn error(status: u16, code: &str, message: impl std::fmt::Display) -> Self {
        Self::json(status, &json!({"code": code, "message": message.to_string()}))
    }

    fn not_found(what: impl std::fmt::Display) -> Self {
        Self::error(404, "not_found", what)
    }

    pub fn body_json(&self) -> serde_json::Value {
        serde_json::from_slice(&self.body).unwrap_or(serde_json::Value::Null)
    }
}

/// Request handling independent of the socket layer.
pub struct App {
    config: ServerConfig,
    editor: PromptEditor,
    sessions: Mutex<HashMap<String, Arc<Mutex<ChatSession>>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ExtractRequest {
    text: String,
    template: String,
    #[serde(default = "default_extractor")]
    extractor: String,
    #[serde(default)]
    config: ExtractOptions,
}

fn default_extractor() -> String {
    "basic".into()
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct ExtractOptions {
    doc_id: Option<String>,
    concurrency: Option<usize>,
    review_mode: Option<ReviewMode>,
    review_instruction: Option<String>,
    system_prompt: Option<String>,
    generation: Option<GenerationConfig>,
    relations: Option<RelationOptions>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationOptions {
    template: String,
    mode: RelationMode,
    filter: Option<RelationFilter>,
    context_padding: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRequest {
    extractor_kind: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChatRequest {
    text: String,
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, Reply> {
    serde_json::from_slice(body).map_err(|e| Reply::error(400, "invalid_request", e))
}

fn engine_failure(e: &EngineError) -> Reply {
    Reply::error(502, "engine_error", e)
}

fn content_type_for(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" | "htm" => HTML_TYPE,
        "js" | "mjs" => "text/javascript; charset=utf-8",
        "css" => "text/css; charset=utf-8",
        "json" | "map" => JSON_TYPE,
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "woff2" => "font/woff2",
        "txt" => "text/plain; charset=utf-8",
        _ => "application/octet-stream",
    }
}

impl App {
    pub fn new(config: ServerConfig) -> Self {
        Self { config, editor: PromptEditor::default(), sessions: Mutex::new(HashMap::new()) }
    }

    /// `(doc_id, path)` for every readable document, sorted by id.
    fn doc_index(&self) -> Vec<(String, PathBuf)> {
        let Ok(entries) = std::fs::read_dir(&self.config.docs_dir) else {
            return Vec::new();
        };
        let mut index: Vec<(String, PathBuf)> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == DOCUMENT_EXTENSION))
            .filter_map(|p| match IEDocument::load(&p) {
                Ok(doc) => Some((doc.doc_id, p)),
                Err(e) => {
                    log::warn!("skipping {}: {e}", p.display());
                    None
                }
            })
            .collect();
        index.sort();
        index
    }

    fn doc_path(&self, id: &str) -> Option<PathBuf> {
        self.doc_index().into_iter().find(|(d, _)| d == id).map(|(_, p)| p)
    }

    pub fn handle(&self, method: &str, url: &str, body: &[u8]) -> Reply {
        let path = url.split(['?', '#']).next().unwrap_or("/");
        let segments: Vec<String> = path
            .split('/')
            .filter(|s| !s.is_empty())
            .map(|s| percent_decode_str(s).decode_utf8_lossy().into_owned())
            .collect();
        let segs: Vec<&str> = segments.iter().map(String::as_str).collect();
        match (method, segs.as_slice()) {
            ("GET", ["api", "docs"]) => {
                let ids: Vec<String> = self.doc_index().into_iter().map(|(id, _)| id).collect();
                Reply::json(200, &json!(ids))
            }
            ("GET", ["api", "docs", id]) => match self.doc_path(id) {
                Some(p) => match std::fs::read_to_string(&p) {
                    Ok(text) => Reply::raw_json(text),
                    Err(e) => Reply::error(500, "io_error", e),
                },
                None => Reply::not_found(format!("no document {id:?}")),
            },
            ("GET", ["view", id]) => match self.doc_path(id).map(IEDocument::load) {
                Some(Ok(doc)) => Reply::html(viz_render(&doc)),
                Some(Err(e)) => Reply::error(500, "io_error", e),
                None => Reply::not_found(format!("no document {id:?}")),
            },
            ("POST", ["api", "extract"]) => self.extract(body),
            ("POST", ["api", "editor", "session"]) => self.new_session(body),
            ("POST", ["api", "editor", id, "chat"]) => self.chat(id, body),
            ("GET", _) if segs.first() != Some(&"api") => self.static_file(&segs),
            (_, ["api", ..]) => {
                if self.route_exists(&segs) {
                    Reply::error(405, "method_not_allowed", format!("{method} not allowed on {path}"))
                } else {
                    Reply::not_found(format!("no route {path}"))
                }
            }
            _ => Reply::error(405, "method_not_allowed", format!("{method} not allowed on {path}")),
        }
    }

    fn route_exists(&self, segs: &[&str]) -> bool {
        matches!(
            segs,
            ["api", "docs"] | ["api", "docs", _] | ["api", "extract"] | ["api", "editor", "session"] | ["api", "editor", _, "chat"]
        )
    }

    fn extract(&self, body: &[u8]) -> Reply {
        let req: ExtractRequest = match parse_body(body) {
            Ok(r) => r,
            Err(reply) => return reply,
        };
        let Some(factory) = &self.config.engine else {
            return Reply::error(502, "engine_unavailable", "the server was started without an engine");
        };
        let kind: FrameExtractorKind = match req.extractor.parse() {
            Ok(k) => k,
            Err(e) => return Reply::error(400, "invalid_extractor", e),
        };
        let template = match PromptTemplate::new(req.template) {
            Ok(t) => t,
            Err(e) => return Reply::error(400, "invalid_template", e),
        };
        let opts = req.config;
        let mut config = ExtractorConfig::new(template);
        config.max_concurrency = opts.concurrency.unwrap_or(1);
        config.review_mode = opts.review_mode.unwrap_or_default();
        if let Some(instruction) = opts.review_instruction {
            config.review_instruction = instruction;
        }
        config.system_prompt = opts.system_prompt;
        config.generation = opts.generation.unwrap_or_default();
        let mut pipeline = Pipeline::new(kind, config.clone());
        if let Some(rel) = opts.relations {
            let template = match PromptTemplate::new(rel.template) {
                Ok(t) => t,
                Err(e) => return Reply::error(400, "invalid_template", e),
            };
            let filter = match (rel.filter, rel.mode) {
                (Some(f), _) => f,
                (None, RelationMode::Binary) => RelationFilter::permissive(vec!["related".into()]),
                (None, RelationMode::Multiclass) => {
                    return Reply::error(400, "invalid_config", "multiclass relation extraction needs a filter")
                }
            };
            let mut rel_config = ExtractorConfig::new(template);
            rel_config.max_concurrency = config.max_concurrency;
            rel_config.generation = config.generation.clone();
            rel_config.system_prompt = config.system_prompt.clone();
            if let Some(p) = rel.context_padding {
                rel_config.context_padding = p;
            }
            pipeline = pipeline.with_relations(RelationStage { mode: rel.mode, config: rel_config, filter });
        }
        let engine = match factory.build() {
            Ok(e) => e,
            Err(e) => return engine_failure(&e),
        };
        let doc_id = opts.doc_id.unwrap_or_else(|| "document".into());
        match pipeline.run(&engine, &doc_id, &req.text) {
            Ok(run) => Reply::raw_json(run.document.to_json()),
            Err(ExtractError::Engine(e)) => engine_failure(&e),
            Err(ExtractError::Template(e)) => Reply::error(400, "invalid_template", e),
            Err(ExtractError::Config(e)) => Reply::error(400, "invalid_config", e),
        }
    }

    fn new_session(&self, body: &[u8]) -> Reply {
        let req: SessionRequest = match parse_body(body) {
            Ok(r) => r,
            Err(reply) => return reply,
        };
        let descriptor = match &self.config.engine {
            Some(f) => f.descriptor().clone(),
            None => return Reply::error(502, "engine_unavailable", "the server was started without an engine"),
        };
        match self.editor.new_session(&req.extractor_kind, descriptor) {
            Ok(session) => {
                let id = uuid::Uuid::new_v4().to_string();
                self.sessions.lock().expect("sessions lock").insert(id.clone(), Arc::new(Mutex::new(session)));
                Reply::json(200, &json!({"session_id": id}))
            }
            Err(e) => Reply::error(400, "invalid_extractor_kind", e),
        }
    }

    fn chat(&self, id: &str, body: &[u8]) -> Reply {
        let session = self.sessions.lock().expect("sessions lock").get(id).cloned();
        let Some(session) = session else {
            return Reply::not_found(format!("no session {id:?}"));
        };
        let req: ChatRequest = match parse_body(body) {
            Ok(r) => r,
            Err(reply) => return reply,
        };
        let Some(factory) = &self.config.engine else {
            return Reply::error(502, "engine_unavailable", "the server was started without an engine");
        };
        let engine = match factory.build() {
            Ok(e) => e,
            Err(e) => return engine_failure(&e),
        };
        // held for the whole turn, so posts to one session run one at a time
        let mut session = session.lock().expect("session lock");
        match session.chat_turn(&engine, &req.text) {
            Ok(reply) => {
                let template = extract_template(&reply).ok().map(|t| t.text().to_string());
                Reply::json(200, &json!({"reply": reply, "template": template}))
            }
            Err(EditorError::EmptyMessage) => Reply::error(400, "empty_message", EditorError::EmptyMessage),
            Err(EditorError::Engine(e)) => engine_failure(&e),
            Err(e) => Reply::error(400, "editor_error", e),
        }
    }

    fn static_file(&self, segs: &[&str]) -> Reply {
        let Some(root) = &self.config.static_dir else {
            return if segs.is_empty() { Reply::html(self.index_page()) } else { Reply::not_found("no static assets configured") };
        };
        let mut path = root.clone();
        for seg in segs {
            let p = Path::new(seg);
            if p.components().any(|c| !matches!(c, Component::Normal(_))) {
                return Reply::not_found("invalid path");
            }
            path.push(p);
        }
        if path.is_dir() {
            path.push("index.html");
        }
        match std::fs::read(&path) {
            Ok(bytes) => Reply { status: 200, content_type: content_type_for(&path), body: bytes },
            Err(_) => Reply::not_found(format!("no asset {}", segs.join("/"))),
        }
    }

    fn index_page(&self) -> String {
        let mut items = String::new();
        for (id, _) in self.doc_index() {
            let href = utf8_percent_encode(&id, PATH_SEGMENT);
            items.push_str(&format!("<li><a href=\"/view/{href}\">{}</a></li>\n", escape_html(&id)));
        }
        format!(
            "<!DOCTYPE html>\n<html lang=\"en\">\n<head><meta charset=\"utf-8\"/><title>llmie</title></head>\n\
             <body>\n<h1>Documents</h1>\n<ul>\n{items}</ul>\n</body>\n</html>\n"
        )
    }
}

/// A running server; dropping it without [`Server::stop`] leaves the worker
/// threads running.
pub struct Server {
    addr: SocketAddr,
    shutdown: Arc<AtomicBool>,
    workers: Vec<JoinHandle<()>>,
}

impl Server {
    /// Binds `addr` (use port 0 for an ephemeral port) and starts the workers.
    pub fn bind(addr: &str, config: ServerConfig) -> anyhow::Result<Self> {
        let http = Arc::new(tiny_http::Server::http(addr).map_err(|e| anyhow!("binding {addr}: {e}"))?);
        let local = http.server_addr().to_ip().ok_or_else(|| anyhow!("not an IP listener"))?;
        let shutdown = Arc::new(AtomicBool::new(false));
        let workers = config.workers.max(1);
        let app = Arc::new(App::new(config));
        let handles = (0..workers)
            .map(|_| {
                let (http, app, shutdown) = (http.clone(), app.clone(), shutdown.clone());
                std::thread::spawn(move || {
                    while !shutdown.load(Ordering::SeqCst) {
                        match http.recv_timeout(Duration::from_millis(100)) {
                            Ok(Some(rq)) => respond(&app, rq),
                            Ok(None) => {}
                            Err(e) => log::warn!("accept failed: {e}"),
                        }
                    }
                })
            })
            .collect();
        Ok(Self { addr: local, shutdown, workers: handles })
    }

    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub fn stop(self) {
        self.shutdown.store(true, Ordering::SeqCst);
        self.join();
    }

    pub fn join(self) {
        for h in self.workers {
            let _ = h.join();
        }
    }
}

fn respond(app: &App, mut rq: tiny_http::Request) {
    let mut body = Vec::new();
    let reply = match rq.as_reader().take(MAX_BODY + 1).read_to_end(&mut body) {
        Ok(_) if body.len() as u64 > MAX_BODY => Reply::error(413, "body_too_large", "request body too large"),
        Ok(_) => app.handle(rq.method().as_str(), rq.url(), &body),
        Err(e) => Reply::error(400, "invalid_request", e),
    };
    log::info!("{} {} -> {}", rq.method(), rq.url(), reply.status);
    let header = tiny_http::Header::from_bytes("Content-Type", reply.content_type).expect("static header");
    let response = tiny_http::Response::from_data(reply.body).with_status_code(reply.status).with_header(header);
    if let Err(e) = rq.respond(response) {
        log::warn!("writing response: {e}");
    }
}
