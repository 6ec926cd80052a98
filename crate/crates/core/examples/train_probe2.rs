use relink_core::candidates::SelectionParams;
use relink_core::model::EdHyperParams;
use relink_core::store::KnowledgeStore;
use relink_core::train::{make_synthetic_corpus, train, SynthSizes, TrainConfig};
use std::time::Instant;

fn main() {
    for corpus_seed in [42u64, 1, 9] {
        for train_seed in [7u64, 0, 3] {
            let sizes = SynthSizes::default();
            let corpus = make_synthetic_corpus(corpus_seed, &sizes);
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("synth.rel");
            corpus.write_store(&path).unwrap();
            let store = KnowledgeStore::open(&path).unwrap();
            let hyper = EdHyperParams { dim: sizes.dim, ..EdHyperParams::default() };
            let config = TrainConfig { epochs: 30, seed: train_seed, ..TrainConfig::default() };
            let t0 = Instant::now();
            let outcome = train(&corpus.train, &corpus.val, &store, &hyper, &SelectionParams::default(), &config).unwrap();
            let first = outcome.history.first().unwrap();
            let best = outcome.history.iter().map(|r| r.val_micro_f1).fold(0.0f64, f64::max);
            let switch_epoch = outcome.history.iter().find(|r| r.lr_switched).map(|r| r.epoch);
            println!("corpus {corpus_seed} train {train_seed}: init F1 {:.3}, best F1 {:.3}, switch at {:?}, {:.1}s",
                first.val_micro_f1, best, switch_epoch, t0.elapsed().as_secs_f64());
        }
    }
}
