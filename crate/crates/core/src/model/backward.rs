//! Reverse-mode gradients for the document forward pass. Max, relu, top-R
//! selection, and the max-0 shifts all differentiate as routing along the
//! argmax recorded in the forward traces.

use super::forward::{DocForward, MentionInput};
use super::lbp::lbp_backward;
use super::{EdHyperParams, EdParams};

/// Accumulates gradients of a scalar loss with respect to every parameter
/// tensor, given `dscores[i][c] = ∂loss/∂g_i(c)`. The returned container has
/// the same shape as [`EdParams`]; the calibration scalars are untouched by
/// the raw-score path and stay zero.
pub fn doc_backward(
    params: &EdParams,
    hyper: &EdHyperParams,
    mentions: &[MentionInput],
    fwd: &DocForward,
    dscores: &[Vec<f64>],
) -> EdParams {
    let mut grads = EdParams::zeros(hyper);
    let n = mentions.len();
    let d = hyper.dim;
    let h = hyper.scorer_hidden;

    // Final scorer.
    let mut d_shifted: Vec<Vec<f64>> = fwd
        .max_marginals
        .iter()
        .map(|row| vec![0.0; row.len()])
        .collect();
    for i in 0..n {
        for c in 0..mentions[i].candidates.len() {
            let dg = dscores[i][c];
            if dg == 0.0 {
                continue;
            }
            grads.scorer_b2 += dg;
            let hidden = &fwd.hidden[i][c];
            let mm = fwd.max_marginals[i][c];
            let lp = fwd.log_priors[i][c];
            for r in 0..h {
                grads.scorer_w2[r] += dg * hidden[r];
                if hidden[r] > 0.0 {
                    let da = dg * params.scorer_w2[r];
                    *grads.scorer_w1.at_mut(r, 0) += da * mm;
                    *grads.scorer_w1.at_mut(r, 1) += da * lp;
                    grads.scorer_b1[r] += da;
                    d_shifted[i][c] += da * params.scorer_w1.at(r, 0);
                }
            }
        }
    }

    // Max-0 shift of the marginals.
    let mut d_raw: Vec<Vec<f64>> = d_shifted.clone();
    for i in 0..n {
        let total: f64 = d_shifted[i].iter().sum();
        d_raw[i][fwd.shift_argmax[i]] -= total;
    }

    // Message passing.
    let counts: Vec<usize> = mentions.iter().map(|m| m.candidates.len()).collect();
    let (d_psi, d_phi) = lbp_backward(&fwd.lbp, &counts, hyper.lbp_damping, &d_raw);

    // φ tables → α and the relation diagonals.
    let k_rel = hyper.relations;
    let mut d_alpha = vec![vec![vec![0.0; k_rel]; n]; n];
    if n >= 2 {
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let table = &d_phi[i][j];
                for e in 0..counts[i] {
                    for e2 in 0..counts[j] {
                        let dp = table.at(e, e2);
                        if dp == 0.0 {
                            continue;
                        }
                        let xi = &mentions[i].candidates[e].vec;
                        let xj = &mentions[j].candidates[e2].vec;
                        for k in 0..k_rel {
                            let a = fwd.alpha[i][j][k];
                            let diag = &params.rel_diags[k];
                            let g_diag = &mut grads.rel_diags[k];
                            let mut bilinear = 0.0;
                            for t in 0..d {
                                let cross = xi[t] * xj[t];
                                bilinear += diag[t] * cross;
                                g_diag[t] += dp * a * cross;
                            }
                            d_alpha[i][j][k] += dp * bilinear;
                        }
                    }
                }
            }
        }
    }

    // α softmax → affinity diagonals and mention encodings.
    let mut d_f = vec![vec![0.0; d]; n];
    if n >= 2 {
        let scale = 1.0 / (d as f64).sqrt();
        for i in 0..n {
            for k in 0..k_rel {
                let mut dot = 0.0;
                for j in 0..n {
                    if j != i {
                        dot += d_alpha[i][j][k] * fwd.alpha[i][j][k];
                    }
                }
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    let dz = fwd.alpha[i][j][k] * (d_alpha[i][j][k] - dot) * scale;
                    if dz == 0.0 {
                        continue;
                    }
                    let f_i = &fwd.f_vecs[i];
                    let f_j = &fwd.f_vecs[j];
                    let diag = &params.affinity_diags[k];
                    let g_diag = &mut grads.affinity_diags[k];
                    for t in 0..d {
                        g_diag[t] += dz * f_i[t] * f_j[t];
                        d_f[i][t] += dz * diag[t] * f_j[t];
                        d_f[j][t] += dz * diag[t] * f_i[t];
                    }
                }
            }
        }
    }

    // Local attention ψ.
    for i in 0..n {
        let trace = &fwd.psi_traces[i];
        if trace.kept.is_empty() {
            continue;
        }
        let mention = &mentions[i];
        let mut d_weighted = vec![0.0; d];
        for (c, cand) in mention.candidates.iter().enumerate() {
            let dp = d_psi[i][c];
            if dp == 0.0 {
                continue;
            }
            for t in 0..d {
                grads.local_diag[t] += dp * cand.vec[t] * trace.weighted_ctx[t];
                d_weighted[t] += dp * params.local_diag[t] * cand.vec[t];
            }
        }
        let d_beta: Vec<f64> = trace
            .kept
            .iter()
            .map(|w| {
                let vec = &mention.context_vecs[w.word];
                let mut acc = 0.0;
                for t in 0..d {
                    acc += d_weighted[t] * vec[t];
                }
                acc
            })
            .collect();
        let mix: f64 = trace
            .kept
            .iter()
            .zip(&d_beta)
            .map(|(w, db)| w.beta * db)
            .sum();
        for (w, db) in trace.kept.iter().zip(&d_beta) {
            let du = w.beta * (db - mix);
            if du == 0.0 {
                continue;
            }
            let word_vec = &mention.context_vecs[w.word];
            let cand_vec = &mention.candidates[w.best_candidate].vec;
            for t in 0..d {
                grads.attention_diag[t] += du * cand_vec[t] * word_vec[t];
            }
        }
    }

    // Mention encoder.
    for i in 0..n {
        let f = &fwd.f_vecs[i];
        let mention = &mentions[i];
        for r in 0..d {
            let dh = d_f[i][r] * (1.0 - f[r] * f[r]);
            if dh == 0.0 {
                continue;
            }
            grads.encoder_bias[r] += dh;
            let row = r * 2 * d;
            let w = &mut grads.encoder_weight.data[row..row + 2 * d];
            for t in 0..d {
                w[t] += dh * mention.mention_avg[t];
                w[d + t] += dh * mention.context_avg[t];
            }
        }
    }

    grads
}
