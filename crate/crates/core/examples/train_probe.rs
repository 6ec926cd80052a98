use relink_core::candidates::SelectionParams;
use relink_core::model::EdHyperParams;
use relink_core::store::KnowledgeStore;
use relink_core::train::{make_synthetic_corpus, train, SynthSizes, TrainConfig};
use std::time::Instant;

fn main() {
    let sizes = SynthSizes::default(); // E=50 V=500 N=200/50 d=32
    let corpus = make_synthetic_corpus(42, &sizes);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synth.rel");
    let report = corpus.write_store(&path).unwrap();
    println!("store: {report:?}");
    let store = KnowledgeStore::open(&path).unwrap();
    println!("store: {} words, {} entities, {} surfaces", store.word_count(), store.entity_count(), store.surface_count());

    let hyper = EdHyperParams { dim: sizes.dim, ..EdHyperParams::default() };
    let selection = SelectionParams::default();
    let config = TrainConfig { epochs: 30, seed: 7, ..TrainConfig::default() };
    let t0 = Instant::now();
    let outcome = train(&corpus.train, &corpus.val, &store, &hyper, &selection, &config).unwrap();
    println!("trained in {:.1?}s", t0.elapsed());
    for rec in &outcome.history {
        println!("epoch {:2}: loss {:9.3} val F1 {:.4} lr {:.0e} switch={} skipped={}",
            rec.epoch, rec.train_loss, rec.val_micro_f1, rec.lr, rec.lr_switched, rec.skipped_mentions);
    }
    println!("best epoch {:?} calibrated={}", outcome.best_epoch, outcome.calibrated);
}
