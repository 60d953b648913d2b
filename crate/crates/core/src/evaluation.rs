//! Scoring of predicted frames and relations against gold annotations.
//!
//! Matching is greedy and one-to-one: gold items are visited in order and
//! each takes the best unused prediction, preferring an exact span and then
//! the leftmost candidate. Under strict matching the candidate relation is an
//! equivalence, so greedy matching is maximal. Under relaxed (overlap)
//! matching it can fall short of the maximum in rare configurations.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::datamodel::{Frame, IEDocument};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    /// Spans must be identical.
    Strict,
    /// Spans must overlap. Also accepted as "lenient".
    #[serde(alias = "lenient")]
    Relaxed,
}

impl FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "strict" => Ok(Self::Strict),
            "relaxed" | "lenient" => Ok(Self::Relaxed),
            other => Err(format!("unknown match mode {other:?}")),
        }
    }
}

pub type Span = (usize, usize);

impl MatchMode {
    pub fn spans_match(self, a: Span, b: Span) -> bool {
        match self {
            Self::Strict => a == b,
            Self::Relaxed => a.0 < b.1 && b.0 < a.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchPolicy {
    pub mode: MatchMode,
    /// Attribute whose values must agree; empty to ignore entity types.
    pub type_attribute: String,
}

impl MatchPolicy {
    pub fn new(mode: MatchMode) -> Self {
        Self { mode, type_attribute: "Type".to_string() }
    }

    pub fn strict() -> Self {
        Self::new(MatchMode::Strict)
    }

    pub fn relaxed() -> Self {
        Self::new(MatchMode::Relaxed)
    }

    pub fn ignoring_types(mut self) -> Self {
        self.type_attribute.clear();
        self
    }

    pub fn frames_match(&self, pred: &Frame, gold: &Frame) -> bool {
        if !self.mode.spans_match(span(pred), span(gold)) {
            return false;
        }
        self.type_attribute.is_empty()
            || normalize_opt(pred.attr(&self.type_attribute)) == normalize_opt(gold.attr(&self.type_attribute))
    }
}

fn span(f: &Frame) -> Span {
    (f.start, f.end)
}

/// Trim and case-fold for attribute comparison.
pub fn normalize_value(v: &str) -> String {
    v.trim().to_lowercase()
}

fn normalize_opt(v: Option<&str>) -> Option<String> {
    v.map(normalize_value)
}

/// Greedy one-to-one assignment. `candidate(p, g)` says whether prediction
/// `p` may match gold `g`; `exact(p, g)` marks preferred candidates; `pos(p)`
/// orders candidates left to right. Returns `(pred, gold)` index pairs.
fn greedy_match(
    n_pred: usize,
    n_gold: usize,
    candidate: impl Fn(usize, usize) -> bool,
    exact: impl Fn(usize, usize) -> bool,
    pos: impl Fn(usize) -> (usize, usize),
) -> Vec<(usize, usize)> {
    let mut used = vec![false; n_pred];
    let mut pairs = Vec::new();
    for g in 0..n_gold {
        let best = (0..n_pred)
            .filter(|&p| !used[p] && candidate(p, g))
            .min_by_key(|&p| (!exact(p, g), pos(p), p));
        if let Some(p) = best {
            used[p] = true;
            pairs.push((p, g));
        }
    }
    pairs
}

/// Matched `(pred_index, gold_index)` pairs, in gold order.
pub fn match_frames(pred: &[Frame], gold: &[Frame], policy: &MatchPolicy) -> Vec<(usize, usize)> {
    greedy_match(
        pred.len(),
        gold.len(),
        |p, g| policy.frames_match(&pred[p], &gold[g]),
        |p, g| span(&pred[p]) == span(&gold[g]),
        |p| span(&pred[p]),
    )
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeTally {
    pub agree: usize,
    pub total: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub per_attribute_accuracy: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attribute_tallies: BTreeMap<String, AttributeTally>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl MetricsReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let mut report = Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            ..Default::default()
        };
        report.recompute();
        report
    }

    fn recompute(&mut self) {
        let tp = self.true_positives;
        self.precision = ratio(tp, tp + self.false_positives);
        self.recall = ratio(tp, tp + self.false_negatives);
        let sum = self.precision + self.recall;
        self.f1 = if sum == 0.0 { 0.0 } else { 2.0 * self.precision * self.recall / sum };
        self.per_attribute_accuracy = self
            .attribute_tallies
            .iter()
            .map(|(k, t)| (k.clone(), ratio(t.agree, t.total)))
            .collect();
    }

    /// Sums counts and attribute tallies, then recomputes every ratio.
    pub fn merge(&mut self, other: &MetricsReport) {
        self.true_positives += other.true_positives;
        self.false_positives += other.false_positives;
        self.false_negatives += other.false_negatives;
        for (k, t) in &other.attribute_tallies {
            let e = self.attribute_tallies.entry(k.clone()).or_default();
            e.agree += t.agree;
            e.total += t.total;
        }
        self.recompute();
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Aligned two-column table for terminals.
    pub fn to_table(&self) -> String {
        let mut rows: Vec<(String, String)> = vec![
            ("true positives".into(), self.true_positives.to_string()),
            ("false positives".into(), self.false_positives.to_string()),
            ("false negatives".into(), self.false_negatives.to_string()),
            ("precision".into(), format!("{:.4}", self.precision)),
            ("recall".into(), format!("{:.4}", self.recall)),
            ("f1".into(), format!("{:.4}", self.f1)),
        ];
        for (k, acc) in &self.per_attribute_accuracy {
            rows.push((format!("accuracy[{k}]"), format!("{acc:.4}")));
        }
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            let _ = writeln!(out, "{k:<width$}  {v:>10}");
        }
        out
    }
}

fn tally_attributes(pairs: &[(&Frame, &Frame)], attribute_keys: &[String]) -> BTreeMap<String, AttributeTally> {
    let mut tallies = BTreeMap::new();
    for key in attribute_keys {
        let mut tally = AttributeTally::default();
        for (pred, gold) in pairs {
            let Some(gold_value) = gold.attr(key) else { continue };
            tally.total += 1;
            if pred.attr(key).map(normalize_value) == Some(normalize_value(gold_value)) {
                tally.agree += 1;
            }
        }
        if tally.total > 0 {
            tallies.insert(key.clone(), tally);
        }
    }
    tallies
}

/// Accuracy of each attribute over matched `(pred, gold)` pairs whose gold
/// frame defines it. Keys no gold frame defines are omitted.
pub fn attribute_accuracy(pairs: &[(&Frame, &Frame)], attribute_keys: &[String]) -> BTreeMap<String, f64> {
    tally_attributes(pairs, attribute_keys)
        .into_iter()
        .map(|(k, t)| (k, ratio(t.agree, t.total)))
        .collect()
}

pub fn ner_metrics(pred: &[Frame], gold: &[Frame], policy: &MatchPolicy) -> MetricsReport {
    ner_metrics_with_attributes(pred, gold, policy, &[])
}

pub fn ner_metrics_with_attributes(
    pred: &[Frame],
    gold: &[Frame],
    policy: &MatchPolicy,
    attribute_keys: &[String],
) -> MetricsReport {
    let matched = match_frames(pred, gold, policy);
    let tp = matched.len();
    let mut report = MetricsReport::from_counts(tp, pred.len() - tp, gold.len() - tp);
    let pairs: Vec<(&Frame, &Frame)> = matched.iter().map(|&(p, g)| (&pred[p], &gold[g])).collect();
    report.attribute_tallies = tally_attributes(&pairs, attribute_keys);
    report.recompute();
    report
}

/// A relation reduced to its endpoint spans (in ascending order) and type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationTriple {
    pub first: Span,
    pub second: Span,
    pub relation_type: Option<String>,
}

/// Projects a document's relations onto span triples. Relations with an
/// endpoint missing from the document are skipped.
pub fn relation_triples(doc: &IEDocument) -> Vec<RelationTriple> {
    let frames = doc.frame_map();
    doc.relations
        .iter()
        .filter_map(|r| {
            let a = span(frames.get(r.frame_1_id.as_str())?);
            let b = span(frames.get(r.frame_2_id.as_str())?);
            let (first, second) = if a <= b { (a, b) } else { (b, a) };
            Some(RelationTriple {
                first,
                second,
                relation_type: r.relation_type.as_deref().map(normalize_value),
            })
        })
        .collect()
}

fn triples_match(mode: MatchMode, p: &RelationTriple, g: &RelationTriple) -> bool {
    p.relation_type == g.relation_type
        && ((mode.spans_match(p.first, g.first) && mode.spans_match(p.second, g.second))
            || (mode.spans_match(p.first, g.second) && mode.spans_match(p.second, g.first)))
}

pub fn match_relations(pred: &[RelationTriple], gold: &[RelationTriple], mode: MatchMode) -> Vec<(usize, usize)> {
    greedy_match(
        pred.len(),
        gold.len(),
        |p, g| triples_match(mode, &pred[p], &gold[g]),
        |p, g| pred[p].first == gold[g].first && pred[p].second == gold[g].second,
        |p| pred[p].first,
    )
}

/// Relation P/R/F1 for one document pair (same text, independent frame ids).
pub fn relation_metrics(pred: &IEDocument, gold: &IEDocument, mode: MatchMode) -> MetricsReport {
    let pred_triples = relation_triples(pred);
    let gold_triples = relation_triples(gold);
    let tp = match_relations(&pred_triples, &gold_triples, mode).len();
    MetricsReport::from_counts(tp, pred_triples.len() - tp, gold_triples.len() - tp)
}
