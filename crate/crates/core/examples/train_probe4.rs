use relink_core::candidates::SelectionParams;
use relink_core::model::{doc_backward, doc_forward, EdHyperParams, EdParams};
use relink_core::store::KnowledgeStore;
use relink_core::train::{make_synthetic_corpus, margin_loss, prepare_training_doc, train, Adam, SynthSizes, TrainConfig};

fn block_norms(p: &EdParams, label: &str) {
    let d = p.attention_diag.len();
    let k = p.rel_diags.len();
    let h = p.scorer_b1.len();
    let flat = p.flatten();
    let blocks = [
        ("attn", 0, d), ("local", d, d), ("rel", 2*d, k*d), ("affin", 2*d+k*d, k*d),
        ("encW", 2*d+2*k*d, 2*d*d), ("encB", 2*d+2*k*d+2*d*d, d),
        ("w1", 2*d+2*k*d+2*d*d+d, 2*h), ("b1", 2*d+2*k*d+2*d*d+d+2*h, h),
        ("w2", 2*d+2*k*d+2*d*d+d+3*h, h),
    ];
    print!("{label}: ");
    for (name, start, len) in blocks {
        let norm: f64 = flat[start..start+len].iter().map(|v| v*v).sum::<f64>().sqrt();
        print!("{name}={norm:.3} ");
    }
    println!();
}

fn main() {
    let sizes = SynthSizes::default();
    let corpus = make_synthetic_corpus(42, &sizes);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("synth.rel");
    corpus.write_store(&path).unwrap();
    let store = KnowledgeStore::open(&path).unwrap();
    let selection = SelectionParams::default();
    let hyper = EdHyperParams { dim: sizes.dim, ..EdHyperParams::default() };

    // Manual loop to watch gradient blocks.
    let mut params = EdParams::init(&hyper, 7);
    let init_local = params.local_diag.clone();
    let mut flat = params.flatten();
    let mut adam = Adam::new(flat.len(), 0.9, 0.999, 1e-8);
    let prepared: Vec<_> = corpus.train.iter().map(|d| prepare_training_doc(d, &store, &selection)).collect();
    for epoch in 1..=30 {
        let mut accum = EdParams::zeros(&hyper);
        let mut accum_flat = accum.flatten();
        let mut loss_sum = 0.0;
        for doc in &prepared {
            if doc.mentions.is_empty() || doc.gold.iter().all(|g| g.is_none()) { continue; }
            let fwd = doc_forward(&params, &hyper, &doc.mentions).unwrap();
            let (loss, ds) = margin_loss(&fwd.scores, &doc.gold, hyper.margin);
            loss_sum += loss;
            if loss > 0.0 {
                let g = doc_backward(&params, &hyper, &doc.mentions, &fwd, &ds);
                let gf = g.flatten();
                for (a, b) in accum_flat.iter_mut().zip(&gf) { *a += b; }
                adam.step(&mut flat, &gf, 1e-3);
                params.assign_flat(&flat);
            }
        }
        if epoch == 1 || epoch % 10 == 0 {
            accum.assign_flat(&accum_flat);
            println!("epoch {epoch} loss {loss_sum:.1}");
            block_norms(&accum, "  grad");
            block_norms(&params, "  param");
            let moved: f64 = params.local_diag.iter().zip(&init_local).map(|(a,b)| (a-b)*(a-b)).sum::<f64>().sqrt();
            println!("  local_diag moved {moved:.3}");
        }
    }
    let _ = train as usize == 0;
    let _ = TrainConfig::default();
}
