//! Max-product loopy belief propagation over the fully connected mention
//! graph, in the log domain.
//!
//! The objective being maximized is `Σ_i ψ_i(e_i) + Σ_{i≠j} φ_ij(e_i, e_j)`
//! over ordered pairs, so the potential on the edge used by the `i→j`
//! message is the sum of both directions' tables. Messages update
//! synchronously with damping δ and are shifted to max 0 every round;
//! iteration order is fixed, ties resolve to the lowest candidate index,
//! and the whole pass is deterministic.

use super::{EdHyperParams, Mat, ModelError};

/// Directed-edge bookkeeping from a forward LBP run; everything the backward
/// pass needs to route gradients (argmax choices only — gradients of max and
/// shift are pure routing).
#[derive(Debug, Clone, Default)]
pub struct LbpTrace {
    pub iters: usize,
    /// `edges[e] = (i, j)` for the message i→j; fixed enumeration order.
    pub edges: Vec<(usize, usize)>,
    /// `argmax_choices[t][e][e_j]` = source candidate that realized the max.
    pub argmax_choices: Vec<Vec<Vec<usize>>>,
    /// `norm_argmax[t][e]` = target candidate subtracted by the max-0 shift.
    pub norm_argmax: Vec<Vec<usize>>,
    /// Messages after the final iteration, `[edge][candidate of j]`.
    pub final_messages: Vec<Vec<f64>>,
}

#[inline]
fn edge_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert_ne!(i, j);
    i * (n - 1) + if j < i { j } else { j - 1 }
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (idx, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = idx;
        }
    }
    best
}

/// Runs `hyper.lbp_iters` rounds of damped max-product message passing and
/// returns the per-mention max-marginals `ψ_i(e) + Σ_{j≠i} m_{j→i}(e)`
/// (unshifted) together with the trace.
///
/// `phi[i][j]` holds the ordered-pair coherence table for `i ≠ j`; a single
/// mention short-circuits to its ψ row. Non-finite table entries are
/// rejected.
pub fn lbp_infer(
    psi: &[Vec<f64>],
    phi: &[Vec<Mat>],
    hyper: &EdHyperParams,
) -> Result<(Vec<Vec<f64>>, LbpTrace), ModelError> {
    let n = psi.len();
    for row in psi {
        if row.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteTable);
        }
    }
    for row in phi {
        for table in row {
            if table.data.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFiniteTable);
            }
        }
    }
    if n <= 1 {
        return Ok((psi.to_vec(), LbpTrace::default()));
    }

    let counts: Vec<usize> = psi.iter().map(|p| p.len()).collect();
    let mut edges = Vec::with_capacity(n * (n - 1));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                edges.push((i, j));
            }
        }
    }

    let damping = hyper.lbp_damping;
    let mut messages: Vec<Vec<f64>> = edges.iter().map(|&(_, j)| vec![0.0; counts[j]]).collect();
    let mut argmax_choices = Vec::with_capacity(hyper.lbp_iters);
    let mut norm_argmax = Vec::with_capacity(hyper.lbp_iters);

    for _ in 0..hyper.lbp_iters {
        // Total incoming message mass per node, so the per-edge exclusion is
        // one subtraction instead of an inner loop.
        let mut total_in: Vec<Vec<f64>> = counts.iter().map(|&c| vec![0.0; c]).collect();
        for (e_idx, &(_, j)) in edges.iter().enumerate() {
            for (c, v) in messages[e_idx].iter().enumerate() {
                total_in[j][c] += v;
            }
        }

        let mut new_messages = Vec::with_capacity(edges.len());
        let mut iter_argmax = Vec::with_capacity(edges.len());
        let mut iter_norm = Vec::with_capacity(edges.len());
        for &(i, j) in &edges {
            let back = &messages[edge_index(n, j, i)];
            let base: Vec<f64> = (0..counts[i])
                .map(|e| psi[i][e] + total_in[i][e] - back[e])
                .collect();
            let fwd_table = &phi[i][j];
            let rev_table = &phi[j][i];
            let mut raw = Vec::with_capacity(counts[j]);
            let mut choices = Vec::with_capacity(counts[j]);
            for t in 0..counts[j] {
                let mut best = f64::NEG_INFINITY;
                let mut best_src = 0;
                for s in 0..counts[i] {
                    let v = base[s] + fwd_table.at(s, t) + rev_table.at(t, s);
                    if v > best {
                        best = v;
                        best_src = s;
                    }
                }
                raw.push(best);
                choices.push(best_src);
            }
            let old = &messages[edge_index(n, i, j)];
            let pre: Vec<f64> = raw
                .iter()
                .zip(old)
                .map(|(r, o)| damping * o + (1.0 - damping) * r)
                .collect();
            let norm_at = argmax(&pre);
            let shift = pre[norm_at];
            new_messages.push(pre.iter().map(|v| v - shift).collect::<Vec<f64>>());
            iter_argmax.push(choices);
            iter_norm.push(norm_at);
        }
        messages = new_messages;
        argmax_choices.push(iter_argmax);
        norm_argmax.push(iter_norm);
    }

    let mut marginals: Vec<Vec<f64>> = psi.to_vec();
    for (e_idx, &(_, j)) in edges.iter().enumerate() {
        for (c, v) in messages[e_idx].iter().enumerate() {
            marginals[j][c] += v;
        }
    }

    Ok((
        marginals,
        LbpTrace {
            iters: hyper.lbp_iters,
            edges,
            argmax_choices,
            norm_argmax,
            final_messages: messages,
        },
    ))
}

/// Routes max-marginal gradients back through the unrolled message passing.
///
/// Returns `(dψ, dφ)` matching the shapes handed to [`lbp_infer`]. The
/// gradient of the initial zero messages is discarded.
pub fn lbp_backward(
    trace: &LbpTrace,
    counts: &[usize],
    damping: f64,
    d_marginals: &[Vec<f64>],
) -> (Vec<Vec<f64>>, Vec<Vec<Mat>>) {
    let n = counts.len();
    let mut d_psi: Vec<Vec<f64>> = d_marginals.to_vec();
    let mut d_phi: Vec<Vec<Mat>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Mat::zeros(0, 0)
                    } else {
                        Mat::zeros(counts[i], counts[j])
                    }
                })
                .collect()
        })
        .collect();
    if trace.iters == 0 || n <= 1 {
        return (d_psi, d_phi);
    }

    // Seed: marginals take every final message once.
    let mut d_msg: Vec<Vec<f64>> = trace
        .edges
        .iter()
        .map(|&(_, j)| d_marginals[j].clone())
        .collect();

    for t in (0..trace.iters).rev() {
        let mut d_prev: Vec<Vec<f64>> = trace
            .edges
            .iter()
            .map(|&(_, j)| vec![0.0; counts[j]])
            .collect();
        for (e_idx, &(i, j)) in trace.edges.iter().enumerate() {
            let dm = &d_msg[e_idx];
            let total: f64 = dm.iter().sum();
            let norm_at = trace.norm_argmax[t][e_idx];
            for c in 0..counts[j] {
                let mut dpre = dm[c];
                if c == norm_at {
                    dpre -= total;
                }
                if dpre == 0.0 {
                    continue;
                }
                d_prev[e_idx][c] += damping * dpre;
                let g = (1.0 - damping) * dpre;
                let src = trace.argmax_choices[t][e_idx][c];
                d_psi[i][src] += g;
                *d_phi[i][j].at_mut(src, c) += g;
                *d_phi[j][i].at_mut(c, src) += g;
                // The base term summed incoming messages to i except from j.
                for l in 0..n {
                    if l != i && l != j {
                        d_prev[edge_index(n, l, i)][src] += g;
                    }
                }
            }
        }
        d_msg = d_prev;
    }
    (d_psi, d_phi)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn hyper(iters: usize, damping: f64) -> EdHyperParams {
        EdHyperParams {
            lbp_iters: iters,
            lbp_damping: damping,
            ..EdHyperParams::default()
        }
    }

    #[test]
    fn single_mention_passes_psi_through() {
        let psi = vec![vec![0.3, -1.0, 2.5]];
        let (marginals, trace) = lbp_infer(&psi, &[], &hyper(10, 0.5)).unwrap();
        assert_eq!(marginals, psi);
        assert_eq!(trace.iters, 0);
    }

    #[test]
    fn non_finite_tables_rejected() {
        let psi = vec![vec![f64::NAN]];
        assert!(matches!(
            lbp_infer(&psi, &[], &hyper(1, 0.0)),
            Err(ModelError::NonFiniteTable)
        ));
    }

    #[test]
    fn two_mentions_match_exhaustive() {
        // Hand-set 2×2 tables; exhaustive best of the 4 joint assignments.
        let psi = vec![vec![1.0, 0.2], vec![0.1, 0.4]];
        let mut phi_01 = Mat::zeros(2, 2);
        *phi_01.at_mut(0, 0) = -2.0;
        *phi_01.at_mut(0, 1) = 0.5;
        *phi_01.at_mut(1, 0) = 0.1;
        *phi_01.at_mut(1, 1) = 1.5;
        let mut phi_10 = Mat::zeros(2, 2);
        *phi_10.at_mut(0, 0) = -1.0;
        *phi_10.at_mut(0, 1) = 0.2;
        *phi_10.at_mut(1, 0) = 0.3;
        *phi_10.at_mut(1, 1) = 1.0;
        let phi = vec![
            vec![Mat::zeros(0, 0), phi_01.clone()],
            vec![phi_10.clone(), Mat::zeros(0, 0)],
        ];

        let mut best = (0, 0);
        let mut best_score = f64::NEG_INFINITY;
        for a in 0..2 {
            for b in 0..2 {
                let s = psi[0][a] + psi[1][b] + phi_01.at(a, b) + phi_10.at(b, a);
                if s > best_score {
                    best_score = s;
                    best = (a, b);
                }
            }
        }

        let (marginals, _) = lbp_infer(&psi, &phi, &hyper(10, 0.0)).unwrap();
        let pick = |row: &Vec<f64>| {
            row.iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0
        };
        assert_eq!((pick(&marginals[0]), pick(&marginals[1])), best);
    }
}
