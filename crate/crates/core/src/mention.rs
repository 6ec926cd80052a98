//! Mention detection: a gazetteer n-gram detector over the store's surface
//! forms, plus an adapter for externally produced spans (any NER tagger can
//! feed the pipeline through it).

use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::store::KnowledgeStore;
use crate::tokenize::Token;

/// A candidate text span, in character offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct Span {
    pub start: usize,
    pub len: usize,
    /// Detector confidence, when the producer supplies one.
    pub md_confidence: Option<f64>,
    /// Coarse type label (LOC/ORG/PER/...), passed through verbatim.
    pub tag: Option<String>,
}

impl Span {
    pub fn new(start: usize, len: usize) -> Self {
        Span {
            start,
            len,
            md_confidence: None,
            tag: None,
        }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    fn overlaps(&self, other: &Span) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

#[derive(Debug, Clone)]
pub struct DetectorConfig {
    /// Longest n-gram (in word tokens) probed against the surface index.
    pub max_ngram: usize,
    /// Minimum top prior a surface must reach to produce a span.
    pub min_link_probability: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            max_ngram: 5,
            min_link_probability: 0.001,
        }
    }
}

#[derive(Debug, Error)]
pub enum SpanError {
    #[error("span {index} ({start}, {len}) exceeds document length {doc_len}")]
    OutOfBounds {
        index: usize,
        start: usize,
        len: usize,
        doc_len: usize,
    },
    #[error("span {second} overlaps span {first}")]
    Overlap { first: usize, second: usize },
    #[error("span {index} has zero length")]
    EmptySpan { index: usize },
    #[error("{path}:{line}: malformed span line: {msg}")]
    MalformedLine {
        path: PathBuf,
        line: u64,
        msg: String,
    },
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Finds all token n-grams (up to `cfg.max_ngram`) whose normalized surface
/// is in the store's prior index, then resolves overlaps longest-match-first
/// (ties to the leftmost span).
///
/// Offsets are in characters; the produced spans are sorted, non-overlapping,
/// and carry neither confidence nor tag.
pub fn detect_gazetteer(
    doc: &str,
    tokens: &[Token],
    store: &KnowledgeStore,
    cfg: &DetectorConfig,
) -> Vec<Span> {
    let max_n = cfg.max_ngram.min(store.max_surface_tokens()).max(1);
    let mut matches: Vec<Span> = Vec::new();
    for i in 0..tokens.len() {
        for n in 1..=max_n.min(tokens.len() - i) {
            let first = &tokens[i];
            let last = &tokens[i + n - 1];
            let raw = &doc[first.byte_start..last.byte_start + last.byte_len];
            let surface = crate::store::normalize_surface(raw);
            let priors = store.lookup_prior_normalized(&surface);
            let top = priors.first().map(|p| p.prior as f64).unwrap_or(0.0);
            if !priors.is_empty() && top >= cfg.min_link_probability {
                matches.push(Span::new(first.start, last.end() - first.start));
            }
        }
    }
    resolve_overlaps(matches)
}

/// Longest-match-first, then leftmost; overlapped shorter matches dropped.
fn resolve_overlaps(mut matches: Vec<Span>) -> Vec<Span> {
    matches.sort_by(|a, b| b.len.cmp(&a.len).then(a.start.cmp(&b.start)));
    let mut kept: Vec<Span> = Vec::new();
    for m in matches {
        if kept.iter().all(|k| !k.overlaps(&m)) {
            kept.push(m);
        }
    }
    kept.sort_by_key(|s| s.start);
    kept
}

/// Validates externally produced spans against the document: bounds checked,
/// returned sorted by start, overlaps rejected. Tags and confidences pass
/// through untouched.
pub fn adapt_external_spans(doc: &str, spans: &[Span]) -> Result<Vec<Span>, SpanError> {
    let doc_len = crate::tokenize::char_len(doc);
    for (index, span) in spans.iter().enumerate() {
        if span.len == 0 {
            return Err(SpanError::EmptySpan { index });
        }
        if span.start + span.len > doc_len {
            return Err(SpanError::OutOfBounds {
                index,
                start: span.start,
                len: span.len,
                doc_len,
            });
        }
    }
    let mut order: Vec<usize> = (0..spans.len()).collect();
    order.sort_by_key(|&i| (spans[i].start, spans[i].len));
    for w in order.windows(2) {
        let (first, second) = (w[0], w[1]);
        if spans[first].overlaps(&spans[second]) {
            let (a, b) = (first.min(second), first.max(second));
            return Err(SpanError::Overlap { first: a, second: b });
        }
    }
    Ok(order.into_iter().map(|i| spans[i].clone()).collect())
}

/// Reads a spans file: `start<TAB>length[<TAB>tag[<TAB>confidence]]` per line.
pub fn read_spans_tsv(path: impl AsRef<Path>) -> Result<Vec<Span>, SpanError> {
    let path = path.as_ref();
    let content = fs::read_to_string(path).map_err(|source| SpanError::Io {
        path: path.into(),
        source,
    })?;
    let mut spans = Vec::new();
    for (idx, line) in content.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let malformed = |msg: &str| SpanError::MalformedLine {
            path: path.into(),
            line: idx as u64 + 1,
            msg: msg.into(),
        };
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 2 || fields.len() > 4 {
            return Err(malformed("want start<TAB>length[<TAB>tag[<TAB>confidence]]"));
        }
        let start: usize = fields[0].parse().map_err(|_| malformed("bad start"))?;
        let len: usize = fields[1].parse().map_err(|_| malformed("bad length"))?;
        let tag = fields
            .get(2)
            .filter(|t| !t.is_empty())
            .map(|t| t.to_string());
        let md_confidence = match fields.get(3) {
            Some(c) => Some(c.parse::<f64>().map_err(|_| malformed("bad confidence"))?),
            None => None,
        };
        spans.push(Span {
            start,
            len,
            md_confidence,
            tag,
        });
    }
    Ok(spans)
}
