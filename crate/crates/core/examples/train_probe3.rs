use relink_core::candidates::{context_score, SelectionParams};
use relink_core::model::EdHyperParams;
use relink_core::store::KnowledgeStore;
use relink_core::train::{make_synthetic_corpus, prepare_training_doc, train, SynthSizes, TrainConfig};

fn main() {
    let sizes = SynthSizes::default();
    let corpus = make_synthetic_corpus(42, &sizes);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synth.rel");
    corpus.write_store(&path).unwrap();
    let store = KnowledgeStore::open(&path).unwrap();
    let selection = SelectionParams::default();

    // Context-score oracle on validation: argmax of e · Σw over candidates.
    let mut total = 0; let mut ctx_right = 0; let mut prior_right = 0; let mut gold_in_cands = 0;
    for doc in &corpus.val {
        let prep = prepare_training_doc(doc, &store, &selection);
        for (i, m) in prep.mentions.iter().enumerate() {
            total += 1;
            if prep.gold[i].is_some() { gold_in_cands += 1; } else { continue; }
            let g = prep.gold[i].unwrap();
            // context argmax
            let ctx: Vec<String> = (0..m.context_vecs.len()).map(|w| format!("ignored{w}")).collect();
            let _ = ctx;
            let mut best = 0; let mut best_s = f64::NEG_INFINITY;
            for (c, cand) in m.candidates.iter().enumerate() {
                let mut s = 0.0;
                for w in &m.context_vecs { for t in 0..w.len() { s += cand.vec[t] * w[t]; } }
                if s > best_s { best_s = s; best = c; }
            }
            if best == g { ctx_right += 1; }
            let mut bp = 0; let mut bps = f64::NEG_INFINITY;
            for (c, cand) in m.candidates.iter().enumerate() {
                if cand.prior > bps { bps = cand.prior; bp = c; }
            }
            if bp == g { prior_right += 1; }
        }
    }
    println!("val mentions {total}, gold-in-candidates {gold_in_cands}, context-argmax acc {:.3}, prior-argmax acc {:.3}",
        ctx_right as f64 / total as f64, prior_right as f64 / total as f64);
    let _ = context_score;

    // Ceiling probe: never switch lr, 60 epochs.
    let hyper = EdHyperParams { dim: sizes.dim, ..EdHyperParams::default() };
    let config = TrainConfig { epochs: 60, seed: 7, f1_switch: 1.01, ..TrainConfig::default() };
    let outcome = train(&corpus.train, &corpus.val, &store, &hyper, &selection, &config).unwrap();
    for rec in outcome.history.iter().step_by(5) {
        println!("epoch {:2}: loss {:9.3} val F1 {:.4}", rec.epoch, rec.train_loss, rec.val_micro_f1);
    }
    let best = outcome.history.iter().map(|r| r.val_micro_f1).fold(0.0f64, f64::max);
    println!("best {best:.4}");
}
