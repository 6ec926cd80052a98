//! End-to-end disambiguation of a document given its mention spans.

use crate::candidates::{select_candidates, word_vector_ci, SelectionParams};
use crate::mention::Span;
use crate::store::KnowledgeStore;
use crate::tokenize::{slice_chars, tokenize, Token};

use super::forward::{doc_forward, CandidateRef, MentionInput};
use super::{apply_calibration, Annotation, EdHyperParams, EdParams, ModelError};

fn to_f64(v: Vec<f32>) -> Vec<f64> {
    v.into_iter().map(|x| x as f64).collect()
}

fn average(vecs: &[Vec<f64>], dim: usize) -> Vec<f64> {
    let mut avg = vec![0.0; dim];
    if vecs.is_empty() {
        return avg;
    }
    for v in vecs {
        for (a, x) in avg.iter_mut().zip(v) {
            *a += x;
        }
    }
    let scale = 1.0 / vecs.len() as f64;
    for a in &mut avg {
        *a *= scale;
    }
    avg
}

/// Runs candidate selection for every span and assembles the model inputs.
/// Spans whose surface has no prior entries are unlinkable and are dropped.
pub fn prepare_mentions(
    doc: &str,
    tokens: &[Token],
    spans: &[Span],
    store: &KnowledgeStore,
    selection: &SelectionParams,
) -> Vec<MentionInput> {
    let dim = store.dim();
    let mut mentions = Vec::with_capacity(spans.len());
    for span in spans {
        let set = select_candidates(doc, tokens, span, store, selection);
        if set.is_empty() {
            continue;
        }
        let candidates: Vec<CandidateRef> = set
            .candidates
            .iter()
            .map(|(entity, prior)| CandidateRef {
                entity: *entity,
                prior: *prior as f64,
                vec: to_f64(store.entity_vector(*entity).expect("prior entity has a row")),
            })
            .collect();
        let context_vecs: Vec<Vec<f64>> = set
            .context
            .iter()
            .filter_map(|t| word_vector_ci(store, t).map(to_f64))
            .collect();
        let mention_vecs: Vec<Vec<f64>> = tokens
            .iter()
            .filter(|t| t.start < span.end() && t.end() > span.start)
            .filter_map(|t| word_vector_ci(store, &t.text).map(to_f64))
            .collect();
        let mention_avg = average(&mention_vecs, dim);
        let context_avg = average(&context_vecs, dim);
        mentions.push(MentionInput {
            span: span.clone(),
            candidates,
            context_vecs,
            mention_avg,
            context_avg,
        });
    }
    mentions
}

/// Disambiguates a document: candidate selection, local and pairwise
/// scoring, message passing, final scoring, and calibrated confidences. One
/// annotation per linkable mention, in span order; per-mention ties go to
/// the lower entity id.
pub fn disambiguate_document(
    doc: &str,
    spans: &[Span],
    store: &KnowledgeStore,
    params: &EdParams,
    hyper: &EdHyperParams,
    selection: &SelectionParams,
) -> Result<Vec<Annotation>, ModelError> {
    if hyper.dim != store.dim() {
        return Err(ModelError::DimMismatch {
            model_dim: hyper.dim,
            store_dim: store.dim(),
        });
    }
    let tokens = tokenize(doc);
    let mentions = prepare_mentions(doc, &tokens, spans, store, selection);
    if mentions.is_empty() {
        return Ok(Vec::new());
    }
    let fwd = doc_forward(params, hyper, &mentions)?;

    let mut annotations = Vec::with_capacity(mentions.len());
    for (i, mention) in mentions.iter().enumerate() {
        let scores = &fwd.scores[i];
        let mut best = 0;
        for c in 1..scores.len() {
            let better = scores[c] > scores[best]
                || (scores[c] == scores[best]
                    && mention.candidates[c].entity < mention.candidates[best].entity);
            if better {
                best = c;
            }
        }
        let chosen = &mention.candidates[best];
        let title = store
            .entity_title(chosen.entity)
            .expect("candidate entity resolves")
            .to_string();
        annotations.push(Annotation {
            start: mention.span.start,
            len: mention.span.len,
            surface: slice_chars(doc, mention.span.start, mention.span.len)
                .unwrap_or_default()
                .to_string(),
            entity: chosen.entity,
            entity_title: title,
            ed_confidence: apply_calibration(params.calib_slope, params.calib_offset, scores[best]),
            md_confidence: mention.span.md_confidence,
            tag: mention.span.tag.clone(),
        });
    }
    Ok(annotations)
}
