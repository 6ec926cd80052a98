//! Per-operation oracles for the disambiguation model: independent
//! re-implementations of each forward piece, exhaustive enumeration for the
//! message passing, and the coherence-flip construction.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relink_core::mention::Span;
use relink_core::model::{
    final_score, lbp_infer, local_psi, mention_encode, pairwise_alpha, pairwise_phi,
    CandidateRef, EdHyperParams, EdParams, Mat,
};
use relink_core::store::EntityId;

fn small_hyper(d: usize, k: usize) -> EdHyperParams {
    EdHyperParams {
        relations: k,
        dim: d,
        scorer_hidden: 4,
        ..EdHyperParams::default()
    }
}

fn random_params(rng: &mut ChaCha8Rng, hyper: &EdHyperParams) -> EdParams {
    let mut params = EdParams::init(hyper, rng.random());
    let mut flat = params.flatten();
    for v in &mut flat {
        *v += rng.random_range(-0.5..0.5);
    }
    params.assign_flat(&flat);
    params
}

fn random_vec(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn candidates(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<CandidateRef> {
    (0..n)
        .map(|i| CandidateRef {
            entity: EntityId(i as u32),
            prior: rng.random_range(0.05..1.0),
            vec: random_vec(rng, d),
        })
        .collect()
}

// ---- mention encoder ----

#[test]
fn encoder_zero_weights_give_zero_vector() {
    let hyper = small_hyper(6, 2);
    let params = EdParams::zeros(&hyper);
    let out = mention_encode(&params, &vec![0.3; 6], &vec![-0.7; 6]);
    assert_eq!(out, vec![0.0; 6]);
}

#[test]
fn encoder_matches_independent_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let d = 7;
    let hyper = small_hyper(d, 1);
    let params = random_params(&mut rng, &hyper);
    let mention = random_vec(&mut rng, d);
    let context = random_vec(&mut rng, d);

    let got = mention_encode(&params, &mention, &context);
    // Independent: explicit concatenation and per-row accumulation.
    let input: Vec<f64> = mention.iter().chain(context.iter()).copied().collect();
    for r in 0..d {
        let mut acc = params.encoder_bias[r];
        for (c, x) in input.iter().enumerate() {
            acc += params.encoder_weight.at(r, c) * x;
        }
        assert!((got[r] - acc.tanh()).abs() < 1e-6);
    }

    let again = mention_encode(&params, &mention, &context);
    assert_eq!(got, again);
}

// ---- local attention ψ ----

#[test]
fn psi_single_context_word_is_plain_bilinear() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let d = 5;
    let hyper = small_hyper(d, 1);
    let params = random_params(&mut rng, &hyper);
    let cands = candidates(&mut rng, 3, d);
    let word = random_vec(&mut rng, d);

    let (psi, trace) = local_psi(&params, &hyper, &cands, &[word.clone()]);
    assert_eq!(trace.kept.len(), 1);
    assert!((trace.kept[0].beta - 1.0).abs() < 1e-12);
    for (c, cand) in cands.iter().enumerate() {
        let expected: f64 = (0..d)
            .map(|t| cand.vec[t] * params.local_diag[t] * word[t])
            .sum();
        assert!((psi[c] - expected).abs() < 1e-9);
    }
}

#[test]
fn psi_zero_attention_gives_uniform_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let d = 4;
    let hyper = small_hyper(d, 1);
    let mut params = random_params(&mut rng, &hyper);
    params.attention_diag.fill(0.0);
    let cands = candidates(&mut rng, 2, d);
    let words: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, d)).collect();
    let (_, trace) = local_psi(&params, &hyper, &cands, &words);
    for w in &trace.kept {
        assert!((w.beta - 0.2).abs() < 1e-12);
    }
}

#[test]
fn psi_matches_brute_force_without_topk() {
    // R ≥ word count, so the top-R stage keeps everything and a direct
    // re-computation must agree.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = 4;
    let mut hyper = small_hyper(d, 1);
    hyper.attention_keep = 100;
    let params = random_params(&mut rng, &hyper);
    let cands = candidates(&mut rng, 3, d);
    let words: Vec<Vec<f64>> = (0..6).map(|_| random_vec(&mut rng, d)).collect();

    let (psi, _) = local_psi(&params, &hyper, &cands, &words);

    // Oracle.
    let logits: Vec<f64> = words
        .iter()
        .map(|w| {
            cands
                .iter()
                .map(|c| (0..d).map(|t| c.vec[t] * params.attention_diag[t] * w[t]).sum::<f64>())
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    let betas: Vec<f64> = logits.iter().map(|l| (l - max).exp() / z).collect();
    for (c, cand) in cands.iter().enumerate() {
        let mut expected = 0.0;
        for (w, beta) in words.iter().zip(&betas) {
            for t in 0..d {
                expected += beta * cand.vec[t] * params.local_diag[t] * w[t];
            }
        }
        assert!((psi[c] - expected).abs() < 1e-6, "candidate {c}");
    }
}

#[test]
fn psi_empty_context_is_zero() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let hyper = small_hyper(4, 1);
    let params = random_params(&mut rng, &hyper);
    let cands = candidates(&mut rng, 3, 4);
    let (psi, trace) = local_psi(&params, &hyper, &cands, &[]);
    assert_eq!(psi, vec![0.0; 3]);
    assert!(trace.kept.is_empty());
}

// ---- relation mixture α ----

#[test]
fn alpha_identical_encodings_split_evenly() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let d = 5;
    let hyper = small_hyper(d, 2);
    let params = random_params(&mut rng, &hyper);
    let f = random_vec(&mut rng, d);
    let alpha = pairwise_alpha(&params, &[f.clone(), f.clone(), f.clone()]);
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..2 {
                let expected = if i == j { 0.0 } else { 0.5 };
                assert!((alpha[i][j][k] - expected).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn alpha_two_mentions_is_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let d = 6;
    let hyper = small_hyper(d, 3);
    let params = random_params(&mut rng, &hyper);
    let f1 = random_vec(&mut rng, d);
    let f2 = random_vec(&mut rng, d);
    let alpha = pairwise_alpha(&params, &[f1, f2]);
    for k in 0..3 {
        assert!((alpha[0][1][k] - 1.0).abs() < 1e-12);
        assert!((alpha[1][0][k] - 1.0).abs() < 1e-12);
    }
}

#[test]
fn alpha_rows_normalize_over_partners() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let d = 8;
    let hyper = small_hyper(d, 2);
    for _ in 0..20 {
        let params = random_params(&mut rng, &hyper);
        let f_vecs: Vec<Vec<f64>> = (0..4).map(|_| random_vec(&mut rng, d)).collect();
        let alpha = pairwise_alpha(&params, &f_vecs);
        for i in 0..4 {
            for k in 0..2 {
                let sum: f64 = (0..4).filter(|j| *j != i).map(|j| alpha[i][j][k]).sum();
                assert!((sum - 1.0).abs() < 1e-9, "i={i} k={k}: {sum}");
            }
        }
    }
}

// ---- pairwise coherence φ ----

#[test]
fn phi_identity_relation_is_dot_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let d = 6;
    let hyper = small_hyper(d, 1);
    let mut params = EdParams::zeros(&hyper);
    params.rel_diags[0].fill(1.0);
    let e1 = random_vec(&mut rng, d);
    let e2 = random_vec(&mut rng, d);
    let dot: f64 = e1.iter().zip(&e2).map(|(a, b)| a * b).sum();
    assert!((pairwise_phi(&params, &[1.0], &e1, &e2) - dot).abs() < 1e-12);

    let zero = vec![0.0; d];
    assert_eq!(pairwise_phi(&params, &[1.0], &zero, &e2), 0.0);
}

#[test]
fn phi_matches_triple_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let d = 8;
    let k_rel = 3;
    let hyper = small_hyper(d, k_rel);
    let params = random_params(&mut rng, &hyper);
    for _ in 0..20 {
        let alpha: Vec<f64> = (0..k_rel).map(|_| rng.random_range(0.0..1.0)).collect();
        let e1 = random_vec(&mut rng, d);
        let e2 = random_vec(&mut rng, d);
        let got = pairwise_phi(&params, &alpha, &e1, &e2);
        let mut expected = 0.0;
        for k in 0..k_rel {
            for t in 0..d {
                expected += alpha[k] * e1[t] * params.rel_diags[k][t] * e2[t];
            }
        }
        assert!((got - expected).abs() < 1e-6);
    }
}

// ---- message passing ----

fn random_tables(
    rng: &mut ChaCha8Rng,
    counts: &[usize],
    scale: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<Mat>>) {
    let n = counts.len();
    let psi: Vec<Vec<f64>> = counts
        .iter()
        .map(|&c| (0..c).map(|_| rng.random_range(-scale..scale)).collect())
        .collect();
    let phi: Vec<Vec<Mat>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        Mat::zeros(0, 0)
                    } else {
                        let mut m = Mat::zeros(counts[i], counts[j]);
                        for v in &mut m.data {
                            *v = rng.random_range(-scale..scale);
                        }
                        m
                    }
                })
                .collect()
        })
        .collect();
    (psi, phi)
}

/// Eq-style objective of a full assignment: Σψ plus both ordered φ terms.
fn objective(psi: &[Vec<f64>], phi: &[Vec<Mat>], assignment: &[usize]) -> f64 {
    let n = assignment.len();
    let mut total = 0.0;
    for i in 0..n {
        total += psi[i][assignment[i]];
        for j in 0..n {
            if i != j {
                total += phi[i][j].at(assignment[i], assignment[j]);
            }
        }
    }
    total
}

fn marginal_argmax(marginals: &[Vec<f64>]) -> Vec<usize> {
    marginals
        .iter()
        .map(|row| {
            let mut best = 0;
            for (c, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

#[test]
fn lbp_two_mentions_exact_on_random_tables() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let hyper = EdHyperParams {
        lbp_iters: 10,
        lbp_damping: 0.0,
        ..EdHyperParams::default()
    };
    for trial in 0..200 {
        let counts = vec![rng.random_range(2..=4), rng.random_range(2..=4)];
        let (psi, phi) = random_tables(&mut rng, &counts, 2.0);
        let (marginals, _) = lbp_infer(&psi, &phi, &hyper).unwrap();
        let got = marginal_argmax(&marginals);

        let mut best = vec![0, 0];
        let mut best_obj = f64::NEG_INFINITY;
        for a in 0..counts[0] {
            for b in 0..counts[1] {
                let obj = objective(&psi, &phi, &[a, b]);
                if obj > best_obj {
                    best_obj = obj;
                    best = vec![a, b];
                }
            }
        }
        assert_eq!(got, best, "trial {trial}");
    }
}

#[test]
fn lbp_beats_or_matches_greedy_on_loopy_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let hyper = EdHyperParams::default(); // T=10, δ=0.5
    let mut wins = 0;
    let total = 200;
    for _ in 0..total {
        let n = rng.random_range(3..=4);
        let counts: Vec<usize> = (0..n).map(|_| 3).collect();
        let (psi, phi) = random_tables(&mut rng, &counts, 1.5);
        let (marginals, _) = lbp_infer(&psi, &phi, &hyper).unwrap();
        let joint = marginal_argmax(&marginals);
        let greedy = marginal_argmax(&psi);
        if objective(&psi, &phi, &joint) >= objective(&psi, &phi, &greedy) - 1e-12 {
            wins += 1;
        }
    }
    assert!(
        wins as f64 >= total as f64 * 0.95,
        "LBP matched greedy on only {wins}/{total} tables"
    );
}

#[test]
fn lbp_is_deterministic_and_scale_invariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let hyper = EdHyperParams::default();
    for _ in 0..50 {
        let n = rng.random_range(2..=4);
        let counts: Vec<usize> = (0..n).map(|_| rng.random_range(2..=4)).collect();
        let (psi, phi) = random_tables(&mut rng, &counts, 1.0);

        let (m1, _) = lbp_infer(&psi, &phi, &hyper).unwrap();
        let (m2, _) = lbp_infer(&psi, &phi, &hyper).unwrap();
        assert_eq!(m1, m2);

        for scale in [0.25, 4.0] {
            let psi_s: Vec<Vec<f64>> = psi
                .iter()
                .map(|row| row.iter().map(|v| v * scale).collect())
                .collect();
            let phi_s: Vec<Vec<Mat>> = phi
                .iter()
                .map(|row| {
                    row.iter()
                        .map(|m| Mat {
                            rows: m.rows,
                            cols: m.cols,
                            data: m.data.iter().map(|v| v * scale).collect(),
                        })
                        .collect()
                })
                .collect();
            let (ms, _) = lbp_infer(&psi_s, &phi_s, &hyper).unwrap();
            assert_eq!(marginal_argmax(&m1), marginal_argmax(&ms), "scale {scale}");
        }
    }
}

// ---- final scorer ----

#[test]
fn scorer_zero_weights_return_bias() {
    let hyper = small_hyper(4, 1);
    let mut params = EdParams::zeros(&hyper);
    params.scorer_b2 = 1.25;
    for mm in [-3.0, 0.0, 2.0] {
        assert_eq!(final_score(&params, mm, 0.5), 1.25);
    }
}

#[test]
fn scorer_monotone_with_nonnegative_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let hyper = small_hyper(4, 1);
    let mut params = EdParams::zeros(&hyper);
    for v in &mut params.scorer_w1.data {
        *v = rng.random_range(0.0..1.0);
    }
    for v in &mut params.scorer_w2 {
        *v = rng.random_range(0.0..1.0);
    }
    let mut last = f64::NEG_INFINITY;
    for step in 0..20 {
        let mm = -5.0 + step as f64 * 0.5;
        let g = final_score(&params, mm, 0.3);
        assert!(g >= last);
        last = g;
    }
}

#[test]
fn scorer_matches_independent_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    let hyper = small_hyper(4, 1);
    let params = random_params(&mut rng, &hyper);
    for _ in 0..20 {
        let mm = rng.random_range(-3.0..0.0);
        let prior: f64 = rng.random_range(0.01..1.0);
        let got = final_score(&params, mm, prior);
        let mut expected = params.scorer_b2;
        for h in 0..hyper.scorer_hidden {
            let a = params.scorer_w1.at(h, 0) * mm
                + params.scorer_w1.at(h, 1) * prior.ln()
                + params.scorer_b1[h];
            expected += params.scorer_w2[h] * a.max(0.0);
        }
        assert!((got - expected).abs() < 1e-6);
    }
}

// ---- end-to-end document behavior ----

mod document {
    use super::*;
    use relink_core::candidates::SelectionParams;
    use relink_core::model::{disambiguate_document, sigmoid};
    use relink_core::index::build_store;
    use relink_core::store::{Embeddings, KnowledgeStore};
    use std::collections::BTreeMap;

    /// Scorer wired to pass the max-marginal straight through:
    /// h0 = relu(mm), h1 = relu(−mm), g = h0 − h1 = mm.
    fn passthrough_scorer(params: &mut EdParams) {
        params.scorer_w1.data.fill(0.0);
        params.scorer_b1.fill(0.0);
        params.scorer_w2.fill(0.0);
        *params.scorer_w1.at_mut(0, 0) = 1.0;
        *params.scorer_w1.at_mut(1, 0) = -1.0;
        params.scorer_w2[0] = 1.0;
        params.scorer_w2[1] = -1.0;
        params.scorer_b2 = 0.0;
    }

    fn base_params(hyper: &EdHyperParams) -> EdParams {
        let mut params = EdParams::zeros(hyper);
        params.attention_diag.fill(1.0);
        params.local_diag.fill(1.0);
        for diag in &mut params.rel_diags {
            diag.fill(1.0);
        }
        params.calib_slope = 1.0;
        passthrough_scorer(&mut params);
        params
    }

    #[test]
    fn forced_choice_confidence_is_calibrated_score() {
        let d = 4;
        let embeddings = Embeddings {
            dim: d as u32,
            words: BTreeMap::from([("ctx".to_string(), vec![0.5f32, 0.0, 0.0, 0.0])]),
            entities: BTreeMap::from([("Only".to_string(), vec![1.0f32, 0.0, 0.0, 0.0])]),
        };
        let priors = BTreeMap::from([(
            "thing".to_string(),
            vec![("Only".to_string(), 0.75f32)],
        )]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.rel");
        build_store(&embeddings, &priors, &path).unwrap();
        let store = KnowledgeStore::open(&path).unwrap();

        let hyper = EdHyperParams {
            dim: d,
            scorer_hidden: 4,
            ..EdHyperParams::default()
        };
        let mut params = base_params(&hyper);
        params.calib_slope = 2.0;
        params.calib_offset = -0.25;

        let doc = "ctx thing ctx";
        let spans = [Span::new(4, 5)];
        let anns = disambiguate_document(
            doc,
            &spans,
            &store,
            &params,
            &hyper,
            &SelectionParams::default(),
        )
        .unwrap();
        assert_eq!(anns.len(), 1);
        assert_eq!(anns[0].entity_title, "Only");
        // Single candidate: shifted marginal = 0, passthrough g = 0.
        let expected = sigmoid(2.0 * 0.0 - 0.25);
        assert!((anns[0].ed_confidence - expected).abs() < 1e-12);
        assert_eq!(anns[0].surface, "thing");
    }

    #[test]
    fn coherence_flips_both_mentions_to_gold() {
        // ψ slightly prefers the distractors; φ strongly couples the gold
        // pair. The joint decision must flip both, unlike ψ-only decoding.
        let d = 4;
        let embeddings = Embeddings {
            dim: d as u32,
            words: BTreeMap::from([
                ("wa".to_string(), vec![0.4f32, 0.5, 0.0, 0.0]),
                ("wb".to_string(), vec![0.4f32, 0.0, 0.5, 0.0]),
            ]),
            entities: BTreeMap::from([
                ("A_good".to_string(), vec![1.0f32, 0.0, 0.0, 0.0]),
                ("A_bad".to_string(), vec![0.0f32, 1.0, 0.0, 0.0]),
                ("B_good".to_string(), vec![1.0f32, 0.0, 0.0, 0.0]),
                ("B_bad".to_string(), vec![0.0f32, 0.0, 1.0, 0.0]),
            ]),
        };
        let priors = BTreeMap::from([
            (
                "alpha".to_string(),
                vec![("A_bad".to_string(), 0.5f32), ("A_good".to_string(), 0.5)],
            ),
            (
                "beta".to_string(),
                vec![("B_bad".to_string(), 0.5f32), ("B_good".to_string(), 0.5)],
            ),
        ]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.rel");
        build_store(&embeddings, &priors, &path).unwrap();
        let store = KnowledgeStore::open(&path).unwrap();

        let hyper = EdHyperParams {
            dim: d,
            scorer_hidden: 4,
            ..EdHyperParams::default()
        };
        let params = base_params(&hyper);
        let selection = SelectionParams {
            n_context: 2,
            ..SelectionParams::default()
        };

        let doc = "wa alpha wa wb beta wb";
        let spans = [Span::new(3, 5), Span::new(15, 4)];

        // Exhaustive check of the construction itself: recompute ψ and φ
        // from the raw vectors and enumerate the four joint assignments.
        let evec = |t: &str| {
            embeddings.entities[t]
                .iter()
                .map(|v| *v as f64)
                .collect::<Vec<f64>>()
        };
        let wvec = |t: &str| {
            embeddings.words[t]
                .iter()
                .map(|v| *v as f64)
                .collect::<Vec<f64>>()
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let psi_of = |entity: &str, word: &str| dot(&evec(entity), &wvec(word));
        let pairs = [
            ("A_good", "B_good"),
            ("A_good", "B_bad"),
            ("A_bad", "B_good"),
            ("A_bad", "B_bad"),
        ];
        let mut best_pair = ("", "");
        let mut best_obj = f64::NEG_INFINITY;
        for (a, b) in pairs {
            let obj = psi_of(a, "wa") + psi_of(b, "wb") + 2.0 * dot(&evec(a), &evec(b));
            if obj > best_obj {
                best_obj = obj;
                best_pair = (a, b);
            }
        }
        assert_eq!(best_pair, ("A_good", "B_good"), "construction is broken");
        // And ψ alone must prefer the distractors.
        assert!(psi_of("A_bad", "wa") > psi_of("A_good", "wa"));
        assert!(psi_of("B_bad", "wb") > psi_of("B_good", "wb"));

        let anns =
            disambiguate_document(doc, &spans, &store, &params, &hyper, &selection).unwrap();
        assert_eq!(anns.len(), 2);
        assert_eq!(anns[0].entity_title, "A_good");
        assert_eq!(anns[1].entity_title, "B_good");
    }
}
