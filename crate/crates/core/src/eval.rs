//! Strong-matching evaluation: micro/macro InKB F1 for end-to-end linking
//! and for disambiguation over gold spans, plus per-stage wall-clock
//! measurement.

use std::time::Instant;

use thiserror::Error;

use crate::candidates::SelectionParams;
use crate::dataset::{Doc, GoldMention};
use crate::index::RedirectTable;
use crate::mention::{detect_gazetteer, DetectorConfig, Span};
use crate::model::{disambiguate_document, Annotation, EdHyperParams, EdParams, ModelError};
use crate::store::KnowledgeStore;
use crate::tokenize::tokenize;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("document {doc}: duplicate predicted span ({start}, {len})")]
    DuplicatePrediction { doc: usize, start: usize, len: usize },
    #[error("document {doc}: prediction at ({start}, {len}) has no gold span")]
    PredictionOutsideGold { doc: usize, start: usize, len: usize },
    #[error("document {doc}: gold spans overlap")]
    OverlappingGold { doc: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-document match counts.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct DocCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub f1: f64,
}

/// Micro scores pool counts over all documents; macro F1 averages per-doc F1,
/// scoring a document with no gold and no predictions as 1.0 (the count of
/// such documents is reported alongside).
#[derive(Debug, Clone, Default)]
pub struct ScoreReport {
    pub micro_precision: f64,
    pub micro_recall: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_doc: Vec<DocCounts>,
    pub both_empty_docs: usize,
}

fn f1_from(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let p = if tp + fp > 0 {
        tp as f64 / (tp + fp) as f64
    } else {
        0.0
    };
    let r = if tp + fn_ > 0 {
        tp as f64 / (tp + fn_) as f64
    } else {
        0.0
    };
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f1)
}

fn resolve<'a>(title: &'a str, redirects: Option<&'a RedirectTable>) -> &'a str {
    redirects.map_or(title, |r| r.resolve(title))
}

/// Strong match: identical boundaries and, after optional redirect
/// normalization, identical entity titles.
pub fn strong_match(
    pred: &Annotation,
    gold: &GoldMention,
    redirects: Option<&RedirectTable>,
) -> bool {
    pred.start == gold.start
        && pred.len == gold.len
        && resolve(&pred.entity_title, redirects) == resolve(&gold.entity, redirects)
}

fn validate_gold(doc_idx: usize, golds: &[GoldMention]) -> Result<(), EvalError> {
    let mut sorted: Vec<&GoldMention> = golds.iter().collect();
    sorted.sort_by_key(|g| g.start);
    for w in sorted.windows(2) {
        if w[1].start < w[0].end() {
            return Err(EvalError::OverlappingGold { doc: doc_idx });
        }
    }
    Ok(())
}

/// End-to-end scoring: a prediction counts iff its boundaries and entity all
/// match a gold mention; each gold matches at most once. Gold mentions with
/// NIL entities are assumed already dropped at import.
pub fn score_el(
    docs: &[(Vec<Annotation>, Vec<GoldMention>)],
    redirects: Option<&RedirectTable>,
) -> Result<ScoreReport, EvalError> {
    let mut report = ScoreReport::default();
    let mut pooled = DocCounts::default();
    for (doc_idx, (preds, golds)) in docs.iter().enumerate() {
        validate_gold(doc_idx, golds)?;
        for (i, a) in preds.iter().enumerate() {
            if preds[..i].iter().any(|b| b.start == a.start && b.len == a.len) {
                return Err(EvalError::DuplicatePrediction {
                    doc: doc_idx,
                    start: a.start,
                    len: a.len,
                });
            }
        }
        let mut matched = vec![false; golds.len()];
        let mut counts = DocCounts::default();
        for pred in preds {
            let hit = golds.iter().enumerate().find(|(gi, gold)| {
                !matched[*gi] && strong_match(pred, gold, redirects)
            });
            match hit {
                Some((gi, _)) => {
                    matched[gi] = true;
                    counts.tp += 1;
                }
                None => counts.fp += 1,
            }
        }
        counts.fn_ = matched.iter().filter(|m| !**m).count() as u64;
        counts.f1 = if preds.is_empty() && golds.is_empty() {
            report.both_empty_docs += 1;
            1.0
        } else {
            f1_from(counts.tp, counts.fp, counts.fn_).2
        };
        pooled.tp += counts.tp;
        pooled.fp += counts.fp;
        pooled.fn_ += counts.fn_;
        report.per_doc.push(counts);
    }
    let (p, r, f1) = f1_from(pooled.tp, pooled.fp, pooled.fn_);
    report.micro_precision = p;
    report.micro_recall = r;
    report.micro_f1 = f1;
    report.macro_f1 = if report.per_doc.is_empty() {
        0.0
    } else {
        report.per_doc.iter().map(|c| c.f1).sum::<f64>() / report.per_doc.len() as f64
    };
    Ok(report)
}

/// Disambiguation-only scoring: predictions were produced from the gold
/// spans, so only the entity is compared. A prediction on a span that is not
/// in the gold set is an error. With exactly one prediction per gold span,
/// micro F1 equals plain accuracy.
pub fn score_ed(
    docs: &[(Vec<Annotation>, Vec<GoldMention>)],
    redirects: Option<&RedirectTable>,
) -> Result<ScoreReport, EvalError> {
    let mut report = ScoreReport::default();
    let mut pooled = DocCounts::default();
    for (doc_idx, (preds, golds)) in docs.iter().enumerate() {
        validate_gold(doc_idx, golds)?;
        let mut counts = DocCounts::default();
        let mut correct = vec![false; golds.len()];
        for pred in preds {
            let slot = golds
                .iter()
                .position(|g| g.start == pred.start && g.len == pred.len)
                .ok_or(EvalError::PredictionOutsideGold {
                    doc: doc_idx,
                    start: pred.start,
                    len: pred.len,
                })?;
            if resolve(&pred.entity_title, redirects) == resolve(&golds[slot].entity, redirects) {
                correct[slot] = true;
                counts.tp += 1;
            } else {
                counts.fp += 1;
            }
        }
        counts.fn_ = correct.iter().filter(|c| !**c).count() as u64;
        counts.f1 = if preds.is_empty() && golds.is_empty() {
            report.both_empty_docs += 1;
            1.0
        } else {
            f1_from(counts.tp, counts.fp, counts.fn_).2
        };
        pooled.tp += counts.tp;
        pooled.fp += counts.fp;
        pooled.fn_ += counts.fn_;
        report.per_doc.push(counts);
    }
    let (p, r, f1) = f1_from(pooled.tp, pooled.fp, pooled.fn_);
    report.micro_precision = p;
    report.micro_recall = r;
    report.micro_f1 = f1;
    report.macro_f1 = if report.per_doc.is_empty() {
        0.0
    } else {
        report.per_doc.iter().map(|c| c.f1).sum::<f64>() / report.per_doc.len() as f64
    };
    Ok(report)
}

/// Wall-clock stats for one pipeline stage, in seconds.
#[derive(Debug, Clone, Default)]
pub struct StageStats {
    pub mean: f64,
    /// Sample standard deviation (n − 1 denominator); 0 for a single sample.
    pub sd: f64,
    pub samples: Vec<f64>,
}

impl StageStats {
    pub fn from_samples(samples: Vec<f64>) -> Self {
        let n = samples.len();
        if n == 0 {
            return StageStats::default();
        }
        let mean = samples.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        StageStats { mean, sd, samples }
    }
}

/// Per-stage timing over a document set, plus the document profile.
#[derive(Debug, Clone, Default)]
pub struct EfficiencyReport {
    pub md: StageStats,
    pub ed: StageStats,
    pub mean_words: f64,
    pub mean_mentions: f64,
}

/// Times mention detection and disambiguation separately for each document,
/// single-threaded.
pub fn measure_efficiency(
    docs: &[Doc],
    store: &KnowledgeStore,
    params: &EdParams,
    hyper: &EdHyperParams,
    selection: &SelectionParams,
    detector: &DetectorConfig,
) -> Result<EfficiencyReport, EvalError> {
    let mut md_samples = Vec::with_capacity(docs.len());
    let mut ed_samples = Vec::with_capacity(docs.len());
    let mut words = 0usize;
    let mut mentions = 0usize;
    for doc in docs {
        let t0 = Instant::now();
        let tokens = tokenize(&doc.text);
        let spans: Vec<Span> = detect_gazetteer(&doc.text, &tokens, store, detector);
        md_samples.push(t0.elapsed().as_secs_f64());

        let t1 = Instant::now();
        let annotations = disambiguate_document(&doc.text, &spans, store, params, hyper, selection)?;
        ed_samples.push(t1.elapsed().as_secs_f64());

        words += tokens.len();
        mentions += annotations.len();
    }
    let n = docs.len().max(1) as f64;
    Ok(EfficiencyReport {
        md: StageStats::from_samples(md_samples),
        ed: StageStats::from_samples(ed_samples),
        mean_words: words as f64 / n,
        mean_mentions: mentions as f64 / n,
    })
}
