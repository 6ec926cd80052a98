//! Desk-scale synthetic corpus with planted ground truth.
//!
//! Entities live in topic clusters; each surface form is shared by entities
//! from different clusters, with overlapping priors, so neither the prior
//! alone nor chance recovers the gold entity. Every mention is surrounded by
//! signature words correlated with its gold entity's embedding, and all of a
//! document's gold entities come from one cluster, so both the local context
//! signal and cross-mention coherence point at the planted truth.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Doc, GoldMention};
use crate::index::{build_store, BuildReport, IndexError};
use crate::store::Embeddings;

#[derive(Debug, Clone)]
pub struct SynthSizes {
    pub entities: usize,
    pub vocab: usize,
    pub train_docs: usize,
    pub val_docs: usize,
    pub dim: usize,
    pub mentions_per_doc: (usize, usize),
    /// Signature words planted on each side of a mention.
    pub signature_words: (usize, usize),
    /// Filler words between mentions.
    pub filler_words: (usize, usize),
}

impl Default for SynthSizes {
    fn default() -> Self {
        SynthSizes {
            entities: 50,
            vocab: 500,
            train_docs: 200,
            val_docs: 50,
            dim: 32,
            mentions_per_doc: (2, 8),
            signature_words: (3, 5),
            filler_words: (4, 8),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCorpus {
    pub train: Vec<Doc>,
    pub val: Vec<Doc>,
    pub embeddings: Embeddings,
    /// Surface → (entity title, prior), ready for the store writer.
    pub priors: BTreeMap<String, Vec<(String, f32)>>,
    /// Planted gold: surface → member entity titles.
    pub surface_groups: BTreeMap<String, Vec<String>>,
}

impl SyntheticCorpus {
    pub fn write_store(&self, path: impl AsRef<std::path::Path>) -> Result<BuildReport, IndexError> {
        build_store(&self.embeddings, &self.priors, path)
    }
}

const SIGNATURES_PER_ENTITY: usize = 6;
const TOPIC_SIZE: usize = 5;

fn unit_vec(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

fn blend(base: &[f64], noise: &[f64], noise_weight: f64) -> Vec<f32> {
    let mixed: Vec<f64> = base
        .iter()
        .zip(noise)
        .map(|(b, n)| b * (1.0 - noise_weight) + n * noise_weight)
        .collect();
    let norm = mixed.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-9);
    mixed.into_iter().map(|x| (x / norm) as f32).collect()
}

fn entity_title(e: usize) -> String {
    format!("Entity_{e:03}")
}

fn signature_word(e: usize, k: usize) -> String {
    format!("w{e}_{k}")
}

/// Generates the corpus, its embeddings, and its priors. Byte-for-byte
/// reproducible for a given seed and sizes.
pub fn make_synthetic_corpus(seed: u64, sizes: &SynthSizes) -> SyntheticCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dim = sizes.dim;
    let n_entities = sizes.entities;
    let n_topics = n_entities.div_ceil(TOPIC_SIZE);

    // Topic centers, then entities clustered around them.
    let topic_centers: Vec<Vec<f64>> = (0..n_topics).map(|_| unit_vec(&mut rng, dim)).collect();
    let entity_vecs: Vec<Vec<f32>> = (0..n_entities)
        .map(|e| {
            let noise = unit_vec(&mut rng, dim);
            blend(&topic_centers[e / TOPIC_SIZE], &noise, 0.5)
        })
        .collect();

    // Signature words correlated with their entity.
    let mut words: BTreeMap<String, Vec<f32>> = BTreeMap::new();
    for e in 0..n_entities {
        let base: Vec<f64> = entity_vecs[e].iter().map(|v| *v as f64).collect();
        for k in 0..SIGNATURES_PER_ENTITY {
            let noise = unit_vec(&mut rng, dim);
            words.insert(signature_word(e, k), blend(&base, &noise, 0.3));
        }
    }

    // Surface groups: two shuffled passes over the entities, cut into groups
    // of 2-4, so each entity is reachable through about two surfaces and
    // group members usually come from different topics — both the planted
    // context and document coherence then point at the gold member.
    let mut surface_groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    let mut surface_names: Vec<String> = Vec::new();
    let mut entity_surfaces: Vec<Vec<usize>> = vec![Vec::new(); n_entities];
    let mut surface_id = 0usize;
    for _pass in 0..2 {
        use rand::seq::SliceRandom;
        let mut perm: Vec<usize> = (0..n_entities).collect();
        perm.shuffle(&mut rng);
        let mut cursor = 0;
        while cursor < perm.len() {
            let size = rng.random_range(2..=4).min(perm.len() - cursor).max(1);
            let group: Vec<usize> = perm[cursor..cursor + size].to_vec();
            cursor += size;
            let name = if surface_id % 5 == 4 {
                format!("sf{surface_id} club")
            } else {
                format!("sf{surface_id}")
            };
            for &e in &group {
                entity_surfaces[e].push(surface_id);
            }
            surface_groups.insert(name.clone(), group.iter().map(|&e| entity_title(e)).collect());
            surface_names.push(name);
            surface_id += 1;
        }
    }

    // Surface tokens get embeddings too: the average of their group, noised
    // — they boost the whole group evenly and stay neutral within it.
    for name in &surface_names {
        let group = &surface_groups[name];
        let mut avg = vec![0.0f64; dim];
        for title in group {
            let e: usize = title[7..].parse().unwrap();
            for (a, v) in avg.iter_mut().zip(&entity_vecs[e]) {
                *a += *v as f64;
            }
        }
        for a in &mut avg {
            *a /= group.len() as f64;
        }
        let noise = unit_vec(&mut rng, dim);
        for token in name.split(' ') {
            words
                .entry(token.to_string())
                .or_insert_with(|| blend(&avg, &noise, 0.4));
        }
    }

    // Filler words up to the vocabulary budget.
    let mut filler: Vec<String> = Vec::new();
    let mut filler_id = 0;
    while words.len() < sizes.vocab {
        let name = format!("filler{filler_id}");
        filler_id += 1;
        let v = unit_vec(&mut rng, dim);
        words.insert(name.clone(), v.into_iter().map(|x| x as f32).collect());
        filler.push(name);
    }
    if filler.is_empty() {
        // Vocabulary budget too tight for filler; keep one so documents can
        // still separate mentions.
        let name = "filler0".to_string();
        let v = unit_vec(&mut rng, dim);
        words.insert(name.clone(), v.into_iter().map(|x| x as f32).collect());
        filler.push(name);
    }

    // Priors: skewed counts per group member. Gold entities are drawn
    // uniformly from the group, so the prior is deliberately uninformative
    // (often sharply wrong) and the model has to learn to trust context.
    let mut priors: BTreeMap<String, Vec<(String, f32)>> = BTreeMap::new();
    for name in &surface_names {
        let group = &surface_groups[name];
        let counts: Vec<u64> = group
            .iter()
            .map(|_| if rng.random_range(0.0..1.0) < 0.3 { rng.random_range(20..=60) } else { rng.random_range(1..=5) })
            .collect();
        let total: u64 = counts.iter().sum();
        let mut entries: Vec<(String, f32)> = group
            .iter()
            .zip(&counts)
            .map(|(title, c)| (title.clone(), (*c as f64 / total as f64) as f32))
            .collect();
        entries.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        priors.insert(name.clone(), entries);
    }

    let entities: BTreeMap<String, Vec<f32>> = (0..n_entities)
        .map(|e| (entity_title(e), entity_vecs[e].clone()))
        .collect();
    let embeddings = Embeddings {
        dim: dim as u32,
        words,
        entities,
    };

    let gen_docs = |rng: &mut ChaCha8Rng, count: usize| -> Vec<Doc> {
        (0..count)
            .map(|_| {
                let topic = rng.random_range(0..n_topics);
                let topic_entities: Vec<usize> = (0..n_entities)
                    .filter(|e| e / TOPIC_SIZE == topic)
                    .collect();
                let n_mentions = rng.random_range(sizes.mentions_per_doc.0..=sizes.mentions_per_doc.1);
                let mut text = String::new();
                let mut char_len = 0usize;
                let mut mentions = Vec::with_capacity(n_mentions);
                let push_token = |text: &mut String, char_len: &mut usize, tok: &str| {
                    if !text.is_empty() {
                        text.push(' ');
                        *char_len += 1;
                    }
                    text.push_str(tok);
                    *char_len += tok.chars().count();
                };
                for _ in 0..n_mentions {
                    let gold = *topic_entities.choose(rng).unwrap();
                    let surface_idx = *entity_surfaces[gold].choose(rng).unwrap();
                    let surface = &surface_names[surface_idx];

                    for _ in 0..rng.random_range(sizes.filler_words.0..=sizes.filler_words.1) {
                        push_token(&mut text, &mut char_len, filler.choose(rng).unwrap());
                    }
                    for _ in 0..rng.random_range(sizes.signature_words.0..=sizes.signature_words.1)
                    {
                        let k = rng.random_range(0..SIGNATURES_PER_ENTITY);
                        push_token(&mut text, &mut char_len, &signature_word(gold, k));
                    }
                    let start = if text.is_empty() { 0 } else { char_len + 1 };
                    push_token(&mut text, &mut char_len, surface);
                    mentions.push(GoldMention {
                        start,
                        len: surface.chars().count(),
                        entity: entity_title(gold),
                    });
                    for _ in 0..rng.random_range(sizes.signature_words.0..=sizes.signature_words.1)
                    {
                        let k = rng.random_range(0..SIGNATURES_PER_ENTITY);
                        push_token(&mut text, &mut char_len, &signature_word(gold, k));
                    }
                }
                Doc { text, mentions }
            })
            .collect()
    };

    let train = gen_docs(&mut rng, sizes.train_docs);
    let val = gen_docs(&mut rng, sizes.val_docs);

    SyntheticCorpus {
        train,
        val,
        embeddings,
        priors,
        surface_groups,
    }
}
