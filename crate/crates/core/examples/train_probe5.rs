use relink_core::candidates::SelectionParams;
use relink_core::model::{doc_forward, EdHyperParams};
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
    let hyper = EdHyperParams { dim: sizes.dim, ..EdHyperParams::default() };
    let config = TrainConfig { epochs: 60, seed: 7, f1_switch: 1.01, ..TrainConfig::default() };
    let outcome = train(&corpus.train, &corpus.val, &store, &hyper, &selection, &config).unwrap();
    let params = outcome.params;

    let mut total = 0; let mut mm_right = 0; let mut g_right = 0; let mut psi_right = 0;
    for doc in &corpus.val {
        let prep = prepare_training_doc(doc, &store, &selection);
        if prep.mentions.is_empty() { continue; }
        let fwd = doc_forward(&params, &hyper, &prep.mentions).unwrap();
        for (i, g) in prep.gold.iter().enumerate() {
            let Some(gold) = g else { continue };
            total += 1;
            if fwd.shift_argmax[i] == *gold { mm_right += 1; }
            let pick = |row: &Vec<f64>| row.iter().enumerate().max_by(|a, b| a.1.partial_cmp(b.1).unwrap()).unwrap().0;
            if pick(&fwd.scores[i]) == *gold { g_right += 1; }
            if pick(&fwd.psi[i]) == *gold { psi_right += 1; }
        }
    }
    println!("total {total}: m̄-argmax {:.3}, g-argmax {:.3}, ψ-argmax {:.3}",
        mm_right as f64/total as f64, g_right as f64/total as f64, psi_right as f64/total as f64);
}
