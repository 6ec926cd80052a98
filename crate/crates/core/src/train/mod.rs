//! Max-margin training of the disambiguation model.
//!
//! One document is one optimization step: the document forward pass scores
//! every candidate, the hinge loss compares each mention's gold candidate
//! with its competitors, and the exact gradients flow back through the
//! unrolled message passing into every tensor. The learning rate drops from
//! its initial value the first time validation micro F1 reaches the switch
//! threshold, and stays dropped.

mod adam;
mod synth;

pub use adam::Adam;
pub use synth::{make_synthetic_corpus, SynthSizes, SyntheticCorpus};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use thiserror::Error;

use crate::candidates::SelectionParams;
use crate::dataset::Doc;
use crate::mention::Span;
use crate::model::{
    calibrate, doc_backward, doc_forward, prepare_mentions, EdHyperParams, EdParams, MentionInput,
    ModelError,
};
use crate::store::KnowledgeStore;
use crate::tokenize::tokenize;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub lr_initial: f64,
    pub lr_reduced: f64,
    /// Validation micro F1 at which the learning rate drops.
    pub f1_switch: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr_initial: 1e-3,
            lr_reduced: 1e-4,
            f1_switch: 0.88,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            epochs: 30,
            seed: 0,
        }
    }
}

/// One line of training history.
#[derive(Debug, Clone)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_micro_f1: f64,
    /// Learning rate used for this epoch's updates.
    pub lr: f64,
    /// True on the epoch whose validation first crossed the switch threshold.
    pub lr_switched: bool,
    /// Gold mentions skipped because the gold entity missed the candidate set.
    pub skipped_mentions: u64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Parameters of the best validation epoch, with calibration fitted.
    pub params: EdParams,
    pub history: Vec<EpochRecord>,
    pub best_epoch: Option<usize>,
    /// False when calibration data was single-class and the default
    /// calibration was kept.
    pub calibrated: bool,
}

/// Hinge loss over a document's scores and its gradient.
///
/// `gold[i]` is the gold candidate index for mention i, or `None` when the
/// mention does not contribute (gold missing from the candidate set). For
/// each competitor `e ≠ gold`: `max(0, margin − g(gold) + g(e))`; the gold
/// candidate itself is excluded from the inner sum.
pub fn margin_loss(
    scores: &[Vec<f64>],
    gold: &[Option<usize>],
    margin: f64,
) -> (f64, Vec<Vec<f64>>) {
    let mut loss = 0.0;
    let mut grads: Vec<Vec<f64>> = scores.iter().map(|row| vec![0.0; row.len()]).collect();
    for (i, row) in scores.iter().enumerate() {
        let Some(g_star) = gold[i] else { continue };
        for (c, value) in row.iter().enumerate() {
            if c == g_star {
                continue;
            }
            let hinge = margin - row[g_star] + value;
            if hinge > 0.0 {
                loss += hinge;
                grads[i][c] += 1.0;
                grads[i][g_star] -= 1.0;
            }
        }
    }
    (loss, grads)
}

/// A training document resolved against the store: model inputs plus the
/// gold candidate index per mention (where present).
pub struct PreparedDoc {
    pub mentions: Vec<MentionInput>,
    pub gold: Vec<Option<usize>>,
    /// Gold mentions whose entity missed the candidate set.
    pub skipped: u64,
    /// Gold entity titles aligned with `mentions` (for scoring).
    pub gold_titles: Vec<Option<String>>,
}

/// Runs candidate selection on a gold document and aligns gold entities with
/// candidate indices. Unlinkable mentions (no candidates at all) are dropped;
/// linkable mentions whose gold entity is outside the candidate set stay in
/// the graph but carry no loss.
pub fn prepare_training_doc(
    doc: &Doc,
    store: &KnowledgeStore,
    selection: &SelectionParams,
) -> PreparedDoc {
    let tokens = tokenize(&doc.text);
    let spans: Vec<Span> = doc
        .mentions
        .iter()
        .map(|m| Span::new(m.start, m.len))
        .collect();
    let mentions = prepare_mentions(&doc.text, &tokens, &spans, store, selection);

    let mut gold = Vec::with_capacity(mentions.len());
    let mut gold_titles = Vec::with_capacity(mentions.len());
    let mut skipped = 0u64;
    for mention in &mentions {
        let gold_mention = doc
            .mentions
            .iter()
            .find(|m| m.start == mention.span.start && m.len == mention.span.len);
        let title = gold_mention.map(|m| m.entity.clone());
        let idx = gold_mention.and_then(|m| {
            store.entity_id(&m.entity).and_then(|id| {
                mention
                    .candidates
                    .iter()
                    .position(|c| c.entity == id)
            })
        });
        if idx.is_none() {
            skipped += 1;
        }
        gold.push(idx);
        gold_titles.push(title);
    }
    PreparedDoc {
        mentions,
        gold,
        skipped,
        gold_titles,
    }
}

/// ED-mode validation: predict an entity for every gold span and measure
/// micro F1 against the gold entities (mentions the pipeline drops count as
/// misses).
pub fn validation_micro_f1(
    docs: &[PreparedDoc],
    params: &EdParams,
    hyper: &EdHyperParams,
    store: &KnowledgeStore,
) -> Result<f64, ModelError> {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fn_ = 0u64;
    for doc in docs {
        if doc.mentions.is_empty() {
            continue;
        }
        let fwd = doc_forward(params, hyper, &doc.mentions)?;
        for (i, mention) in doc.mentions.iter().enumerate() {
            let Some(gold_title) = &doc.gold_titles[i] else {
                continue;
            };
            let scores = &fwd.scores[i];
            let mut best = 0;
            for c in 1..scores.len() {
                if scores[c] > scores[best]
                    || (scores[c] == scores[best]
                        && mention.candidates[c].entity < mention.candidates[best].entity)
                {
                    best = c;
                }
            }
            let predicted = store
                .entity_title(mention.candidates[best].entity)
                .unwrap_or("");
            if predicted == gold_title {
                tp += 1;
            } else {
                fp += 1;
                fn_ += 1;
            }
        }
    }
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
    Ok(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
}

/// Trains the model. Deterministic under a fixed seed; returns the best
/// validation parameters with calibration fitted on validation scores.
pub fn train(
    train_docs: &[Doc],
    val_docs: &[Doc],
    store: &KnowledgeStore,
    hyper: &EdHyperParams,
    selection: &SelectionParams,
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if train_docs.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut params = EdParams::init(hyper, config.seed);
    let mut history = Vec::with_capacity(config.epochs);
    if config.epochs == 0 {
        return Ok(TrainOutcome {
            params,
            history,
            best_epoch: None,
            calibrated: false,
        });
    }

    let prepared_train: Vec<PreparedDoc> = train_docs
        .iter()
        .map(|d| prepare_training_doc(d, store, selection))
        .collect();
    let prepared_val: Vec<PreparedDoc> = val_docs
        .iter()
        .map(|d| prepare_training_doc(d, store, selection))
        .collect();

    let mut flat = params.flatten();
    let mut adam = Adam::new(
        flat.len(),
        config.adam_beta1,
        config.adam_beta2,
        config.adam_eps,
    );
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    let mut lr = config.lr_initial;
    let mut switched = false;
    let mut best: Option<(f64, usize, EdParams)> = None;

    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..prepared_train.len()).collect();
        order.shuffle(&mut rng);

        let mut epoch_loss = 0.0;
        let mut skipped = 0u64;
        for &doc_idx in &order {
            let doc = &prepared_train[doc_idx];
            skipped += doc.skipped;
            if doc.mentions.is_empty() || doc.gold.iter().all(|g| g.is_none()) {
                continue;
            }
            let fwd = doc_forward(&params, hyper, &doc.mentions)?;
            let (loss, dscores) = margin_loss(&fwd.scores, &doc.gold, hyper.margin);
            epoch_loss += loss;
            if loss > 0.0 {
                let grads = doc_backward(&params, hyper, &doc.mentions, &fwd, &dscores);
                adam.step(&mut flat, &grads.flatten(), lr);
                params.assign_flat(&flat);
            }
        }

        let val_f1 = validation_micro_f1(&prepared_val, &params, hyper, store)?;
        let mut record = EpochRecord {
            epoch,
            train_loss: epoch_loss,
            val_micro_f1: val_f1,
            lr,
            lr_switched: false,
            skipped_mentions: skipped,
        };
        if !switched && val_f1 >= config.f1_switch {
            switched = true;
            lr = config.lr_reduced;
            record.lr_switched = true;
        }
        if best.as_ref().is_none_or(|(f1, _, _)| val_f1 > *f1) {
            best = Some((val_f1, epoch, params.clone()));
        }
        history.push(record);
    }

    let (_, best_epoch, mut best_params) = best.expect("at least one epoch ran");

    // Calibrate on validation candidate scores with is-gold labels.
    let mut cal_scores = Vec::new();
    let mut cal_labels = Vec::new();
    for doc in &prepared_val {
        if doc.mentions.is_empty() {
            continue;
        }
        let fwd = doc_forward(&best_params, hyper, &doc.mentions)?;
        for (i, gold) in doc.gold.iter().enumerate() {
            let Some(g_star) = gold else { continue };
            for (c, score) in fwd.scores[i].iter().enumerate() {
                cal_scores.push(*score);
                cal_labels.push(c == *g_star);
            }
        }
    }
    let calibrated = match calibrate(&cal_scores, &cal_labels) {
        Ok((slope, offset)) => {
            best_params.calib_slope = slope;
            best_params.calib_offset = offset;
            true
        }
        Err(_) => false,
    };

    Ok(TrainOutcome {
        params: best_params,
        history,
        best_epoch: Some(best_epoch),
        calibrated,
    })
}
