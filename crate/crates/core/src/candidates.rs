//! Candidate selection: up to `k1` entities by prior plus up to `k2` by
//! similarity between the entity embedding and the mention's context, all
//! drawn from the `k` entities with the highest `P(e|m)`.

use crate::mention::Span;
use crate::store::{EntityId, KnowledgeStore};
use crate::tokenize::Token;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionParams {
    /// Candidates taken straight from the top of the prior list.
    pub k1: usize,
    /// Candidates added by context similarity from the rest of the top-k.
    pub k2: usize,
    /// Size of the prior short-list the context stage re-ranks.
    pub k: usize,
    /// Context window size in word tokens (split evenly around the mention).
    pub n_context: usize,
}

impl Default for SelectionParams {
    fn default() -> Self {
        SelectionParams {
            k1: 4,
            k2: 3,
            k: 30,
            n_context: 50,
        }
    }
}

impl SelectionParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.k1 < 1 {
            return Err("k1 must be >= 1".into());
        }
        if self.k < self.k1 + self.k2 {
            return Err(format!(
                "k ({}) must be >= k1 + k2 ({})",
                self.k,
                self.k1 + self.k2
            ));
        }
        if self.n_context < 1 {
            return Err("n_context must be >= 1".into());
        }
        Ok(())
    }
}

/// A mention's candidate entities and the context tokens used to pick them.
#[derive(Debug, Clone)]
pub struct CandidateSet {
    pub span: Span,
    /// `(entity, P(e|m))`, prior picks first; at most `k1 + k2` long, no
    /// duplicates, every prior positive.
    pub candidates: Vec<(EntityId, f32)>,
    /// Context window tokens (surface text), document order.
    pub context: Vec<String>,
}

impl CandidateSet {
    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }
}

/// The context window around `span`: up to `n_context/2` word tokens on each
/// side, excluding tokens that overlap the mention itself, truncated at the
/// document edges.
pub fn extract_context<'a>(tokens: &'a [Token], span: &Span, n_context: usize) -> Vec<&'a Token> {
    let half = n_context / 2;
    let before = tokens
        .iter()
        .filter(|t| t.end() <= span.start)
        .collect::<Vec<_>>();
    let after = tokens.iter().filter(|t| t.start >= span.end());
    let keep_from = before.len().saturating_sub(half);
    let mut window: Vec<&Token> = before[keep_from..].to_vec();
    window.extend(after.take(half));
    window
}

/// Word-vector lookup used across the scoring paths: exact token first, then
/// its lowercased form. Out-of-vocabulary tokens yield `None` and are simply
/// skipped by callers.
pub fn word_vector_ci(store: &KnowledgeStore, token: &str) -> Option<Vec<f32>> {
    store.word_vector(token).or_else(|| {
        let lower = token.to_lowercase();
        if lower == token {
            None
        } else {
            store.word_vector(&lower)
        }
    })
}

/// Dot product of the entity vector with the sum of in-vocabulary context
/// word vectors. No usable context words means a score of zero.
pub fn context_score(store: &KnowledgeStore, entity: EntityId, context: &[String]) -> f64 {
    let Some(entity_vec) = store.entity_vector(entity) else {
        return 0.0;
    };
    let mut sum = vec![0.0f64; store.dim()];
    let mut any = false;
    for token in context {
        if let Some(vec) = word_vector_ci(store, token) {
            any = true;
            for (s, v) in sum.iter_mut().zip(vec.iter()) {
                *s += *v as f64;
            }
        }
    }
    if !any {
        return 0.0;
    }
    entity_vec
        .iter()
        .zip(sum.iter())
        .map(|(e, s)| *e as f64 * *s)
        .sum()
}

/// Selects the candidate set for one mention.
///
/// Let `L` be the top-`k` prior entities for the surface. The top `k1` of
/// `L` are taken by prior; the remaining members of `L` are ranked by
/// [`context_score`] and the best `k2` join them (ties by ascending entity
/// id). An unknown surface yields an empty set — the mention is unlinkable
/// and drops out of disambiguation.
pub fn select_candidates(
    doc: &str,
    tokens: &[Token],
    span: &Span,
    store: &KnowledgeStore,
    params: &SelectionParams,
) -> CandidateSet {
    let context_tokens = extract_context(tokens, span, params.n_context);
    let context: Vec<String> = context_tokens.iter().map(|t| t.text.clone()).collect();

    let surface = crate::tokenize::slice_chars(doc, span.start, span.len).unwrap_or("");
    let shortlist = store.lookup_prior(surface);
    let shortlist = &shortlist[..shortlist.len().min(params.k)];

    let candidates = if shortlist.len() <= params.k1 {
        shortlist.iter().map(|p| (p.entity, p.prior)).collect()
    } else {
        let mut picked: Vec<(EntityId, f32)> = shortlist[..params.k1]
            .iter()
            .map(|p| (p.entity, p.prior))
            .collect();
        let mut rest: Vec<(EntityId, f32, f64)> = shortlist[params.k1..]
            .iter()
            .map(|p| (p.entity, p.prior, context_score(store, p.entity, &context)))
            .collect();
        rest.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap().then(a.0.cmp(&b.0)));
        picked.extend(rest.into_iter().take(params.k2).map(|(e, p, _)| (e, p)));
        picked
    };

    CandidateSet {
        span: span.clone(),
        candidates,
        context,
    }
}
