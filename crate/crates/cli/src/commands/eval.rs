use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use anyhow::{anyhow, Context};
use llmie_core::datamodel::{IEDocument, DOCUMENT_EXTENSION};
use llmie_core::evaluation::{ner_metrics_with_attributes, relation_metrics, MatchMode, MatchPolicy, MetricsReport};
use serde_json::json;

use crate::args::{EvalArgs, ModeChoice, OutputFormat};
use crate::{CmdResult, Failure, WithCode, EXIT_DATA, EXIT_OK};

/// Loads every `.llmie` file in `dir`, keyed by doc_id.
pub fn load_dir(dir: &Path) -> anyhow::Result<BTreeMap<String, IEDocument>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == DOCUMENT_EXTENSION))
        .collect();
    paths.sort();
    let mut docs = BTreeMap::new();
    for path in paths {
        let doc = IEDocument::load(&path)?;
        if docs.contains_key(&doc.doc_id) {
            return Err(anyhow!("doc_id {:?} appears twice in {}", doc.doc_id, dir.display()));
        }
        docs.insert(doc.doc_id.clone(), doc);
    }
    Ok(docs)
}

pub fn run(args: &EvalArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> CmdResult {
    let gold = load_dir(&args.gold).code(EXIT_DATA)?;
    let pred = load_dir(&args.pred).code(EXIT_DATA)?;
    let unmatched_gold: Vec<&String> = gold.keys().filter(|k| !pred.contains_key(*k)).collect();
    let unmatched_pred: Vec<&String> = pred.keys().filter(|k| !gold.contains_key(*k)).collect();
    let shared: Vec<&String> = gold.keys().filter(|k| pred.contains_key(*k)).collect();
    if shared.is_empty() {
        return Err(Failure::new(EXIT_DATA, anyhow!("gold and pred share no doc_ids")));
    }
    for id in &unmatched_gold {
        let _ = writeln!(stderr, "warning: gold document {id} has no prediction");
    }
    for id in &unmatched_pred {
        let _ = writeln!(stderr, "warning: predicted document {id} has no gold");
    }

    let mode = match args.mode {
        ModeChoice::Strict => MatchMode::Strict,
        ModeChoice::Relaxed => MatchMode::Relaxed,
    };
    let mut policy = MatchPolicy::new(mode);
    if args.ignore_types {
        policy = policy.ignoring_types();
    }
    let mut entities = MetricsReport::from_counts(0, 0, 0);
    let mut relations = MetricsReport::from_counts(0, 0, 0);
    for id in &shared {
        let (g, p) = (&gold[*id], &pred[*id]);
        entities.merge(&ner_metrics_with_attributes(&p.frames, &g.frames, &policy, &args.attributes));
        if args.relations {
            relations.merge(&relation_metrics(p, g, mode));
        }
    }

    match args.format {
        OutputFormat::Json => {
            let mut out = json!({
                "mode": format!("{mode:?}").to_lowercase(),
                "documents": shared.len(),
                "entities": entities,
                "unmatched_gold": unmatched_gold,
                "unmatched_pred": unmatched_pred,
            });
            if args.relations {
                out["relations"] = serde_json::to_value(&relations).expect("report serializes");
            }
            let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&out).expect("json"));
        }
        OutputFormat::Table => {
            let _ = writeln!(stdout, "documents: {} ({:?} matching)", shared.len(), mode);
            let _ = write!(stdout, "\nentities\n{}", entities.to_table());
            if args.relations {
                let _ = write!(stdout, "\nrelations\n{}", relations.to_table());
            }
        }
    }
    Ok(EXIT_OK)
}
