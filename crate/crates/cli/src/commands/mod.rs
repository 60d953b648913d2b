pub mod chat;
pub mod eval;
pub mod extract;
pub mod render;

use std::io::Write;

use crate::args::ServeArgs;
use crate::engine_opts::EngineFactory;
use crate::server::{Server, ServerConfig};
use crate::{CmdResult, WithCode, EXIT_OK, EXIT_USAGE};

pub fn serve(args: &ServeArgs, stderr: &mut dyn Write) -> CmdResult {
    if !args.docs.is_dir() {
        return Err(crate::Failure::usage(format!("--docs {} is not a directory", args.docs.display())));
    }
    let engine = match args.engine_args() {
        Some(e) => Some(EngineFactory::from_args(&e)?),
        None => None,
    };
    let config = ServerConfig {
        docs_dir: args.docs.clone(),
        static_dir: args.static_dir.clone(),
        engine,
        workers: args.workers.max(1),
    };
    let server = Server::bind(&format!("{}:{}", args.host, args.port), config).code(EXIT_USAGE)?;
    let _ = writeln!(stderr, "listening on http://{}", server.addr());
    server.join();
    Ok(EXIT_OK)
}
