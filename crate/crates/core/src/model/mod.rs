//! Latent-relation entity disambiguation.
//!
//! Scoring couples every mention's candidates with the rest of the document:
//! a local attention score over context words, a pairwise coherence score
//! that mixes `K` latent relations (diagonal bilinear forms over entity
//! embeddings, weighted by mention-encoding affinities), max-product loopy
//! belief propagation over the fully connected mention graph, and a small
//! two-layer scorer that combines the resulting max-marginal with the
//! `P(e|m)` prior. Confidences come from a logistic calibration fit.
//!
//! The forward pass keeps the traces needed to backpropagate through the
//! unrolled message passing, so training reaches every tensor, including the
//! relation diagonals.

mod backward;
mod calibrate;
mod forward;
mod infer;
mod io;
mod lbp;

pub use backward::doc_backward;
pub use calibrate::{apply_calibration, calibrate, sigmoid};
pub use forward::{
    doc_forward, final_score, local_psi, mention_encode, pairwise_alpha, pairwise_phi,
    CandidateRef, DocForward, MentionInput, PsiTrace, PsiWordTrace,
};
pub use infer::{disambiguate_document, prepare_mentions};
pub use io::{load_model, save_model, MODEL_MAGIC, MODEL_VERSION};
pub use lbp::{lbp_backward, lbp_infer, LbpTrace};

use std::io as stdio;
use std::path::PathBuf;

use thiserror::Error;

use crate::store::EntityId;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error: {0}")]
    Io(#[from] stdio::Error),
    #[error("{path}: not a model file (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("unsupported model format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt model file: {0}")]
    Corrupt(String),
    #[error("model dim {model_dim} does not match store dim {store_dim}")]
    DimMismatch { model_dim: usize, store_dim: usize },
    #[error("score table contains a non-finite value")]
    NonFiniteTable,
    #[error("calibration needs both correct and incorrect examples")]
    DegenerateCalibration,
}

/// Model shape and inference knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct EdHyperParams {
    /// Number of latent relations (K).
    pub relations: usize,
    /// Embedding dimension; must match the store.
    pub dim: usize,
    /// Max-margin γ used in training.
    pub margin: f64,
    /// Message-passing iterations.
    pub lbp_iters: usize,
    /// Damping δ in [0, 1): new message = δ·old + (1−δ)·computed.
    pub lbp_damping: f64,
    /// Context words kept by the local attention (top-R).
    pub attention_keep: usize,
    /// Hidden width of the final scorer.
    pub scorer_hidden: usize,
}

impl Default for EdHyperParams {
    fn default() -> Self {
        EdHyperParams {
            relations: 3,
            dim: 300,
            margin: 0.9,
            lbp_iters: 10,
            lbp_damping: 0.5,
            attention_keep: 25,
            scorer_hidden: 100,
        }
    }
}

impl EdHyperParams {
    pub fn validate(&self) -> Result<(), String> {
        if self.relations < 1 {
            return Err("relations must be >= 1".into());
        }
        if self.lbp_iters < 1 {
            return Err("lbp_iters must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.lbp_damping) {
            return Err("lbp_damping must be in [0, 1)".into());
        }
        if self.attention_keep < 1 {
            return Err("attention_keep must be >= 1".into());
        }
        if self.scorer_hidden < 1 {
            return Err("scorer_hidden must be >= 1".into());
        }
        Ok(())
    }
}

/// Row-major dense matrix of f64.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// All learned tensors. Field order is also the serialization order in the
/// model file.
#[derive(Debug, Clone, PartialEq)]
pub struct EdParams {
    /// Diagonal of the attention bilinear form (entity × context word).
    pub attention_diag: Vec<f64>,
    /// Diagonal of the local score bilinear form.
    pub local_diag: Vec<f64>,
    /// Per-relation diagonal coupling entity embeddings (K × d).
    pub rel_diags: Vec<Vec<f64>>,
    /// Per-relation diagonal coupling mention encodings (K × d); drives the
    /// relation mixture weights α.
    pub affinity_diags: Vec<Vec<f64>>,
    /// Mention encoder: d × 2d, applied to [avg mention vecs ; avg context vecs].
    pub encoder_weight: Mat,
    pub encoder_bias: Vec<f64>,
    /// Final scorer, layer 1: H × 2 over [max-marginal, log prior].
    pub scorer_w1: Mat,
    pub scorer_b1: Vec<f64>,
    /// Final scorer, layer 2: H weights to a scalar.
    pub scorer_w2: Vec<f64>,
    pub scorer_b2: f64,
    /// Logistic calibration σ(slope · score + offset).
    pub calib_slope: f64,
    pub calib_offset: f64,
}

impl EdParams {
    /// All-zero tensors of the right shape; also the gradient container.
    pub fn zeros(hyper: &EdHyperParams) -> Self {
        let d = hyper.dim;
        let k = hyper.relations;
        let h = hyper.scorer_hidden;
        EdParams {
            attention_diag: vec![0.0; d],
            local_diag: vec![0.0; d],
            rel_diags: vec![vec![0.0; d]; k],
            affinity_diags: vec![vec![0.0; d]; k],
            encoder_weight: Mat::zeros(d, 2 * d),
            encoder_bias: vec![0.0; d],
            scorer_w1: Mat::zeros(h, 2),
            scorer_b1: vec![0.0; h],
            scorer_w2: vec![0.0; h],
            scorer_b2: 0.0,
            calib_slope: 0.0,
            calib_offset: 0.0,
        }
    }

    /// Fresh trainable parameters: identity-like diagonals (so scoring starts
    /// near the prior-plus-context baseline), zero affinities (uniform α),
    /// and uniform ±1/√fan_in dense layers.
    pub fn init(hyper: &EdHyperParams, seed: u64) -> Self {
        use rand::Rng;
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let d = hyper.dim;
        let h = hyper.scorer_hidden;
        let mut params = Self::zeros(hyper);
        params.attention_diag.fill(1.0);
        params.local_diag.fill(1.0);
        for diag in &mut params.rel_diags {
            diag.fill(1.0);
        }
        let enc_bound = 1.0 / (2.0 * d as f64).sqrt();
        for w in &mut params.encoder_weight.data {
            *w = rng.random_range(-enc_bound..enc_bound);
        }
        let w1_bound = 1.0 / (2.0f64).sqrt();
        for w in &mut params.scorer_w1.data {
            *w = rng.random_range(-w1_bound..w1_bound);
        }
        let w2_bound = 1.0 / (h as f64).sqrt();
        for w in &mut params.scorer_w2 {
            *w = rng.random_range(-w2_bound..w2_bound);
        }
        params.calib_slope = 1.0;
        params.calib_offset = 0.0;
        params
    }

    pub fn num_params(&self) -> usize {
        let d = self.attention_diag.len();
        let k = self.rel_diags.len();
        let h = self.scorer_b1.len();
        2 * d + 2 * k * d + self.encoder_weight.data.len() + d + 2 * h + h + h + 1 + 2
    }

    /// Copies every tensor into one flat vector, in declaration order.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.num_params());
        out.extend(&self.attention_diag);
        out.extend(&self.local_diag);
        for diag in &self.rel_diags {
            out.extend(diag);
        }
        for diag in &self.affinity_diags {
            out.extend(diag);
        }
        out.extend(&self.encoder_weight.data);
        out.extend(&self.encoder_bias);
        out.extend(&self.scorer_w1.data);
        out.extend(&self.scorer_b1);
        out.extend(&self.scorer_w2);
        out.push(self.scorer_b2);
        out.push(self.calib_slope);
        out.push(self.calib_offset);
        out
    }

    /// Inverse of [`Self::flatten`].
    pub fn assign_flat(&mut self, flat: &[f64]) {
        assert_eq!(flat.len(), self.num_params());
        let mut it = flat.iter().copied();
        let mut take = |dst: &mut [f64]| {
            for v in dst {
                *v = it.next().unwrap();
            }
        };
        take(&mut self.attention_diag);
        take(&mut self.local_diag);
        for diag in &mut self.rel_diags {
            take(diag);
        }
        for diag in &mut self.affinity_diags {
            take(diag);
        }
        take(&mut self.encoder_weight.data);
        take(&mut self.encoder_bias);
        take(&mut self.scorer_w1.data);
        take(&mut self.scorer_b1);
        take(&mut self.scorer_w2);
        self.scorer_b2 = it.next().unwrap();
        self.calib_slope = it.next().unwrap();
        self.calib_offset = it.next().unwrap();
        assert!(it.next().is_none());
    }

    /// Human-readable name of the tensor owning flat index `idx`.
    pub fn param_name(&self, idx: usize) -> &'static str {
        let d = self.attention_diag.len();
        let k = self.rel_diags.len();
        let h = self.scorer_b1.len();
        let bounds = [
            (d, "attention_diag"),
            (d, "local_diag"),
            (k * d, "rel_diags"),
            (k * d, "affinity_diags"),
            (self.encoder_weight.data.len(), "encoder_weight"),
            (d, "encoder_bias"),
            (2 * h, "scorer_w1"),
            (h, "scorer_b1"),
            (h, "scorer_w2"),
            (1, "scorer_b2"),
            (1, "calib_slope"),
            (1, "calib_offset"),
        ];
        let mut cursor = 0;
        for (len, name) in bounds {
            cursor += len;
            if idx < cursor {
                return name;
            }
        }
        "out-of-range"
    }
}

/// One linked mention in a document.
#[derive(Debug, Clone, PartialEq)]
pub struct Annotation {
    pub start: usize,
    pub len: usize,
    /// The mention text exactly as it appears in the document.
    pub surface: String,
    pub entity: EntityId,
    pub entity_title: String,
    /// Calibrated probability in (0, 1).
    pub ed_confidence: f64,
    pub md_confidence: Option<f64>,
    pub tag: Option<String>,
}
