//! Forward computation for one document: mention encodings, local attention
//! scores, relation mixture weights, pairwise coherence tables, message
//! passing, and the final scorer. Traces of every argmax and softmax are kept
//! so the backward pass can route gradients exactly through the unrolled
//! computation.

use crate::mention::Span;
use crate::store::EntityId;

use super::lbp::{lbp_infer, LbpTrace};
use super::{EdHyperParams, EdParams, Mat, ModelError};

/// A candidate entity with everything scoring needs.
#[derive(Debug, Clone)]
pub struct CandidateRef {
    pub entity: EntityId,
    /// `P(e|m)`, always positive.
    pub prior: f64,
    pub vec: Vec<f64>,
}

/// Model-facing view of one mention after candidate selection.
#[derive(Debug, Clone)]
pub struct MentionInput {
    pub span: Span,
    pub candidates: Vec<CandidateRef>,
    /// In-vocabulary context word vectors, document order.
    pub context_vecs: Vec<Vec<f64>>,
    /// Average of in-vocabulary mention-token vectors; zeros when none.
    pub mention_avg: Vec<f64>,
    /// Average of `context_vecs`; zeros when none.
    pub context_avg: Vec<f64>,
}

/// Per-word attention record kept for the backward pass.
#[derive(Debug, Clone)]
pub struct PsiWordTrace {
    /// Index into the mention's `context_vecs`.
    pub word: usize,
    /// Candidate that realized the attention max for this word.
    pub best_candidate: usize,
    pub beta: f64,
}

#[derive(Debug, Clone, Default)]
pub struct PsiTrace {
    pub kept: Vec<PsiWordTrace>,
    /// β-weighted sum of kept context word vectors.
    pub weighted_ctx: Vec<f64>,
}

/// Full forward state for one document.
#[derive(Debug, Clone)]
pub struct DocForward {
    /// Local scores ψ, `[mention][candidate]`.
    pub psi: Vec<Vec<f64>>,
    pub psi_traces: Vec<PsiTrace>,
    /// Mention encodings f, `[mention][dim]`.
    pub f_vecs: Vec<Vec<f64>>,
    /// Relation mixture weights α, `[i][j][k]`; empty for single mentions.
    pub alpha: Vec<Vec<Vec<f64>>>,
    /// Pairwise coherence tables φ for ordered pairs; `phi[i][j]` is
    /// `c_i × c_j`. Empty for single mentions.
    pub phi: Vec<Vec<Mat>>,
    pub lbp: LbpTrace,
    /// Max-marginals before shifting, `ψ + incoming messages`.
    pub raw_marginals: Vec<Vec<f64>>,
    /// Per-mention argmax used by the max-0 shift.
    pub shift_argmax: Vec<usize>,
    /// Max-marginals shifted so each mention's best candidate sits at 0.
    pub max_marginals: Vec<Vec<f64>>,
    pub log_priors: Vec<Vec<f64>>,
    /// Post-relu hidden activations of the final scorer, `[i][c][H]`.
    pub hidden: Vec<Vec<Vec<f64>>>,
    /// Final raw scores g, `[mention][candidate]`.
    pub scores: Vec<Vec<f64>>,
}

/// Encodes a mention and its context into a d-vector:
/// `tanh(W · [avg mention vecs ; avg context vecs] + b)`.
pub fn mention_encode(params: &EdParams, mention_avg: &[f64], context_avg: &[f64]) -> Vec<f64> {
    let d = params.encoder_bias.len();
    let mut out = Vec::with_capacity(d);
    for r in 0..d {
        let row = params.encoder_weight.row(r);
        let mut acc = params.encoder_bias[r];
        for (w, x) in row[..d].iter().zip(mention_avg) {
            acc += w * x;
        }
        for (w, x) in row[d..].iter().zip(context_avg) {
            acc += w * x;
        }
        out.push(acc.tanh());
    }
    out
}

/// Local attention score ψ for every candidate of one mention.
///
/// Each context word gets the logit `max_e eᵀ diag(A) w`; the top-R words by
/// logit are kept, softmaxed into weights β, and each candidate is scored
/// against the β-weighted context sum through `diag(B)`. No usable context
/// words means ψ = 0 for every candidate.
pub fn local_psi(
    params: &EdParams,
    hyper: &EdHyperParams,
    candidates: &[CandidateRef],
    context_vecs: &[Vec<f64>],
) -> (Vec<f64>, PsiTrace) {
    let d = params.attention_diag.len();
    if context_vecs.is_empty() || candidates.is_empty() {
        return (vec![0.0; candidates.len()], PsiTrace::default());
    }

    // Attention logit and realizing candidate per context word.
    let mut logits = Vec::with_capacity(context_vecs.len());
    for w in context_vecs {
        let mut best = f64::NEG_INFINITY;
        let mut best_candidate = 0;
        for (c, cand) in candidates.iter().enumerate() {
            let mut dot = 0.0;
            for t in 0..d {
                dot += cand.vec[t] * params.attention_diag[t] * w[t];
            }
            if dot > best {
                best = dot;
                best_candidate = c;
            }
        }
        logits.push((best, best_candidate));
    }

    // Keep the top-R words (ties to the earlier word).
    let mut order: Vec<usize> = (0..logits.len()).collect();
    order.sort_by(|&a, &b| logits[b].0.partial_cmp(&logits[a].0).unwrap().then(a.cmp(&b)));
    order.truncate(hyper.attention_keep);
    order.sort_unstable();

    // Softmax over the kept logits, max-subtracted.
    let max_logit = order
        .iter()
        .map(|&w| logits[w].0)
        .fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = order.iter().map(|&w| (logits[w].0 - max_logit).exp()).collect();
    let z: f64 = exps.iter().sum();

    let mut weighted_ctx = vec![0.0; d];
    let mut kept = Vec::with_capacity(order.len());
    for (&w, e) in order.iter().zip(exps) {
        let beta = e / z;
        for t in 0..d {
            weighted_ctx[t] += beta * context_vecs[w][t];
        }
        kept.push(PsiWordTrace {
            word: w,
            best_candidate: logits[w].1,
            beta,
        });
    }

    let psi = candidates
        .iter()
        .map(|cand| {
            let mut acc = 0.0;
            for t in 0..d {
                acc += cand.vec[t] * params.local_diag[t] * weighted_ctx[t];
            }
            acc
        })
        .collect();
    (psi, PsiTrace { kept, weighted_ctx })
}

/// Relation mixture weights `α[i][j][k]`: a softmax over `j ≠ i` of the
/// mention-affinity logits `(f_i ⊙ D_k)·f_j / √d`, computed with
/// max-subtraction. `α[i][i]` stays zero.
pub fn pairwise_alpha(
    params: &EdParams,
    f_vecs: &[Vec<f64>],
) -> Vec<Vec<Vec<f64>>> {
    let n = f_vecs.len();
    let k_rel = params.affinity_diags.len();
    let d = params.attention_diag.len();
    let scale = 1.0 / (d as f64).sqrt();
    let mut alpha = vec![vec![vec![0.0; k_rel]; n]; n];
    if n < 2 {
        return alpha;
    }
    let mut weighted = vec![0.0; d];
    for i in 0..n {
        for k in 0..k_rel {
            for t in 0..d {
                weighted[t] = f_vecs[i][t] * params.affinity_diags[k][t];
            }
            let mut logits = Vec::with_capacity(n - 1);
            for (j, f_j) in f_vecs.iter().enumerate() {
                if j == i {
                    continue;
                }
                let mut dot = 0.0;
                for t in 0..d {
                    dot += weighted[t] * f_j[t];
                }
                logits.push((j, dot * scale));
            }
            let max = logits
                .iter()
                .map(|(_, z)| *z)
                .fold(f64::NEG_INFINITY, f64::max);
            let z_sum: f64 = logits.iter().map(|(_, z)| (z - max).exp()).sum();
            for (j, z) in logits {
                alpha[i][j][k] = (z - max).exp() / z_sum;
            }
        }
    }
    alpha
}

/// Coherence between two entity choices: `Σ_k α_ijk (e_i ⊙ R_k)·e_j`.
pub fn pairwise_phi(params: &EdParams, alpha_ij: &[f64], e_i: &[f64], e_j: &[f64]) -> f64 {
    let d = e_i.len();
    let mut acc = 0.0;
    for (k, diag) in params.rel_diags.iter().enumerate() {
        let mut dot = 0.0;
        for t in 0..d {
            dot += e_i[t] * diag[t] * e_j[t];
        }
        acc += alpha_ij[k] * dot;
    }
    acc
}

/// φ tables for every ordered mention pair. The per-pair relation mixture is
/// folded into one diagonal first, so each candidate pair costs a single
/// d-length dot product.
fn phi_tables(
    params: &EdParams,
    alpha: &[Vec<Vec<f64>>],
    mentions: &[MentionInput],
) -> Vec<Vec<Mat>> {
    let n = mentions.len();
    let d = params.attention_diag.len();
    let k_rel = params.rel_diags.len();
    let mut tables = Vec::with_capacity(n);
    let mut combined = vec![0.0; d];
    for i in 0..n {
        let mut row = Vec::with_capacity(n);
        for j in 0..n {
            if i == j {
                row.push(Mat::zeros(0, 0));
                continue;
            }
            for t in 0..d {
                combined[t] = 0.0;
            }
            for k in 0..k_rel {
                let a = alpha[i][j][k];
                for t in 0..d {
                    combined[t] += a * params.rel_diags[k][t];
                }
            }
            let ci = mentions[i].candidates.len();
            let cj = mentions[j].candidates.len();
            let mut table = Mat::zeros(ci, cj);
            for (e, cand_i) in mentions[i].candidates.iter().enumerate() {
                for (e2, cand_j) in mentions[j].candidates.iter().enumerate() {
                    let mut dot = 0.0;
                    for t in 0..d {
                        dot += cand_i.vec[t] * combined[t] * cand_j.vec[t];
                    }
                    *table.at_mut(e, e2) = dot;
                }
            }
            row.push(table);
        }
        tables.push(row);
    }
    tables
}

/// The final scorer: `g = w2 · relu(w1 · [max_marginal, log_prior] + b1) + b2`.
pub fn final_score(params: &EdParams, max_marginal: f64, prior: f64) -> f64 {
    scorer_forward(params, max_marginal, prior.ln()).0
}

pub(super) fn scorer_forward(params: &EdParams, max_marginal: f64, log_prior: f64) -> (f64, Vec<f64>) {
    let h = params.scorer_b1.len();
    let mut hidden = Vec::with_capacity(h);
    let mut g = params.scorer_b2;
    for r in 0..h {
        let a = params.scorer_w1.at(r, 0) * max_marginal
            + params.scorer_w1.at(r, 1) * log_prior
            + params.scorer_b1[r];
        let act = a.max(0.0);
        g += params.scorer_w2[r] * act;
        hidden.push(act);
    }
    (g, hidden)
}

/// Runs the complete forward pass over a document's mentions.
pub fn doc_forward(
    params: &EdParams,
    hyper: &EdHyperParams,
    mentions: &[MentionInput],
) -> Result<DocForward, ModelError> {
    let n = mentions.len();
    let f_vecs: Vec<Vec<f64>> = mentions
        .iter()
        .map(|m| mention_encode(params, &m.mention_avg, &m.context_avg))
        .collect();

    let mut psi = Vec::with_capacity(n);
    let mut psi_traces = Vec::with_capacity(n);
    for m in mentions {
        let (p, trace) = local_psi(params, hyper, &m.candidates, &m.context_vecs);
        psi.push(p);
        psi_traces.push(trace);
    }

    let (alpha, phi) = if n >= 2 {
        let alpha = pairwise_alpha(params, &f_vecs);
        let phi = phi_tables(params, &alpha, mentions);
        (alpha, phi)
    } else {
        (Vec::new(), Vec::new())
    };

    let (raw_marginals, lbp) = lbp_infer(&psi, &phi, hyper)?;

    let mut shift_argmax = Vec::with_capacity(n);
    let mut max_marginals = Vec::with_capacity(n);
    for raw in &raw_marginals {
        let mut best = 0;
        for (c, v) in raw.iter().enumerate() {
            if *v > raw[best] {
                best = c;
            }
        }
        shift_argmax.push(best);
        max_marginals.push(raw.iter().map(|v| v - raw[best]).collect::<Vec<f64>>());
    }

    let log_priors: Vec<Vec<f64>> = mentions
        .iter()
        .map(|m| m.candidates.iter().map(|c| c.prior.ln()).collect())
        .collect();

    let mut hidden = Vec::with_capacity(n);
    let mut scores = Vec::with_capacity(n);
    for i in 0..n {
        let c_n = mentions[i].candidates.len();
        let mut h_row = Vec::with_capacity(c_n);
        let mut s_row = Vec::with_capacity(c_n);
        for c in 0..c_n {
            let (g, h) = scorer_forward(params, max_marginals[i][c], log_priors[i][c]);
            h_row.push(h);
            s_row.push(g);
        }
        hidden.push(h_row);
        scores.push(s_row);
    }

    Ok(DocForward {
        psi,
        psi_traces,
        f_vecs,
        alpha,
        phi,
        lbp,
        raw_marginals,
        shift_argmax,
        max_marginals,
        log_priors,
        hidden,
        scores,
    })
}
