//! Prior construction checked against hand arithmetic and independent
//! recomputation, plus the byte-determinism of the store writer.

use std::collections::BTreeMap;
use std::io::Write;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use relink_core::index::{
    anchor_counts, build_store, combine_priors, compute_wiki_prior, merge_counts,
    parse_anchor_corpus, CountTable, IndexError, RedirectTable, UniformDict,
    MAX_CANDIDATES_STORED,
};
use relink_core::store::{Embeddings, KnowledgeStore, StoreError};

fn write_file(dir: &tempfile::TempDir, name: &str, content: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    let mut f = std::fs::File::create(&path).unwrap();
    f.write_all(content.as_bytes()).unwrap();
    path
}

#[test]
fn wikitext_extraction_counts_each_anchor_once() {
    let dir = tempfile::tempdir().unwrap();
    let path = write_file(&dir, "doc.txt", "visit [[Paris]] and [[Paris|the city]]");
    let (counts, report) =
        parse_anchor_corpus(&path, &RedirectTable::empty(), true).unwrap();
    let flat = anchor_counts(&counts);
    assert_eq!(flat.len(), 2);
    assert_eq!(counts["paris"]["Paris"], 1);
    assert_eq!(counts["the city"]["Paris"], 1);
    assert_eq!(report.skipped_anchors, 0);
}

#[test]
fn tsv_counts_aggregate_across_files() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_file(&dir, "a.tsv", "paris\tParis\t8\n");
    let b = write_file(&dir, "b.tsv", "paris\tParis\t2\n");
    let mut total = CountTable::new();
    for path in [a, b] {
        let (counts, _) = parse_anchor_corpus(&path, &RedirectTable::empty(), true).unwrap();
        merge_counts(&mut total, counts);
    }
    assert_eq!(total["paris"]["Paris"], 10);
}

#[test]
fn redirects_resolve_before_counting() {
    let dir = tempfile::tempdir().unwrap();
    let doc = write_file(&dir, "doc.txt", "see [[Paris_FR|Paris]]");
    let redirects =
        RedirectTable::from_pairs([("Paris_FR".to_string(), "Paris".to_string())]).unwrap();
    let (counts, _) = parse_anchor_corpus(&doc, &redirects, true).unwrap();
    assert_eq!(counts["paris"]["Paris"], 1);
}

#[test]
fn redirect_chains_close_and_cycles_error() {
    let table = RedirectTable::from_pairs([
        ("A".to_string(), "B".to_string()),
        ("B".to_string(), "C".to_string()),
    ])
    .unwrap();
    assert_eq!(table.resolve("A"), "C");
    assert_eq!(table.resolve("B"), "C");
    assert_eq!(table.resolve("C"), "C");

    let err = RedirectTable::from_pairs([
        ("X".to_string(), "Y".to_string()),
        ("Y".to_string(), "X".to_string()),
    ])
    .unwrap_err();
    assert!(matches!(err, IndexError::RedirectCycle { .. }));
}

#[test]
fn malformed_tsv_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_file(&dir, "bad.tsv", "ok\tEntity\t3\nbroken line\n");
    match parse_anchor_corpus(&bad, &RedirectTable::empty(), true) {
        Err(IndexError::MalformedTsv { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected MalformedTsv, got {other:?}"),
    }
}

#[test]
fn wiki_prior_matches_hand_arithmetic() {
    let mut counts = CountTable::new();
    counts.insert(
        "paris".to_string(),
        BTreeMap::from([
            ("Paris".to_string(), 8u64),
            ("Paris_Hilton".to_string(), 2),
        ]),
    );
    let wiki = compute_wiki_prior(&counts);
    assert_eq!(wiki["paris"]["Paris"], 0.8);
    assert_eq!(wiki["paris"]["Paris_Hilton"], 0.2);
}

#[test]
fn wiki_prior_sums_to_one_on_random_fixture() {
    // 50-surface random count table; independent per-surface sum oracle.
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let mut counts = CountTable::new();
    for s in 0..50 {
        let per: BTreeMap<String, u64> = (0..rng.random_range(1..8))
            .map(|e| (format!("E{e}"), rng.random_range(1..100)))
            .collect();
        counts.insert(format!("s{s}"), per);
    }
    let wiki = compute_wiki_prior(&counts);
    assert_eq!(wiki.len(), 50);
    for dist in wiki.values() {
        let sum: f64 = dist.values().sum();
        assert!((sum - 1.0).abs() < 1e-9, "sum {sum}");
    }
}

#[test]
fn combination_caps_and_unions() {
    let mut wiki = BTreeMap::new();
    wiki.insert(
        "acme".to_string(),
        BTreeMap::from([("Acme".to_string(), 0.8f64), ("Acme_Corp".to_string(), 0.2)]),
    );
    let mut dict = UniformDict::empty();
    dict.insert("acme", "Acme");
    dict.insert("acme", "Acme_Inc");
    // dict-only surface with 4 entities
    for e in ["A", "B", "C", "D"] {
        dict.insert("letters", e);
    }

    let combined = combine_priors(&wiki, &dict, MAX_CANDIDATES_STORED);

    // 0.8 + 1/2 capped at 1.0
    let acme = &combined["acme"];
    let get = |t: &str| acme.iter().find(|(x, _)| x == t).unwrap().1;
    assert_eq!(get("Acme"), 1.0);
    assert_eq!(get("Acme_Corp"), 0.2);
    assert_eq!(get("Acme_Inc"), 0.5);

    // dict-only: uniform 0.25
    for (_, p) in &combined["letters"] {
        assert_eq!(*p, 0.25);
    }

    // counts-only surface passes through unchanged
    let mut wiki2 = BTreeMap::new();
    wiki2.insert(
        "solo".to_string(),
        BTreeMap::from([("Solo".to_string(), 1.0f64)]),
    );
    let combined2 = combine_priors(&wiki2, &UniformDict::empty(), MAX_CANDIDATES_STORED);
    assert_eq!(combined2["solo"][0].1, 1.0);
}

#[test]
fn dropping_dictionary_never_raises_wiki_mass() {
    // Combination is monotone: with the dictionary, every shared entity's
    // prior is >= its wiki-only value.
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut counts = CountTable::new();
    for s in 0..20 {
        let per: BTreeMap<String, u64> = (0..rng.random_range(1..6))
            .map(|e| (format!("E{e}"), rng.random_range(1..50)))
            .collect();
        counts.insert(format!("s{s}"), per);
    }
    let wiki = compute_wiki_prior(&counts);
    let mut dict = UniformDict::empty();
    for s in 0..10 {
        dict.insert(&format!("s{s}"), "E0");
        dict.insert(&format!("s{s}"), "E9");
    }
    let with_dict = combine_priors(&wiki, &dict, MAX_CANDIDATES_STORED);
    let without = combine_priors(&wiki, &UniformDict::empty(), MAX_CANDIDATES_STORED);
    for (surface, entries) in &without {
        for (title, p) in entries {
            let p_with = with_dict[surface]
                .iter()
                .find(|(t, _)| t == title)
                .map(|(_, p)| *p)
                .unwrap();
            assert!(p_with >= *p);
        }
    }
}

fn tiny_embeddings(titles: &[&str]) -> Embeddings {
    Embeddings {
        dim: 4,
        words: BTreeMap::from([("the".to_string(), vec![0.1, 0.2, 0.3, 0.4])]),
        entities: titles
            .iter()
            .map(|t| (t.to_string(), vec![1.0, 0.0, 0.0, 0.0]))
            .collect(),
    }
}

#[test]
fn build_drops_entities_without_embeddings() {
    let embeddings = tiny_embeddings(&["Known"]);
    let mut priors = BTreeMap::new();
    priors.insert(
        "x".to_string(),
        vec![("Known".to_string(), 0.6f32), ("Unknown".to_string(), 0.4)],
    );
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.rel");
    let report = build_store(&embeddings, &priors, &path).unwrap();
    assert_eq!(report.dropped_entities, 1);
    assert_eq!(report.entries_written, 1);
    let store = KnowledgeStore::open(&path).unwrap();
    assert_eq!(store.lookup_prior("x").len(), 1);
}

#[test]
fn empty_prior_map_is_an_error() {
    let embeddings = tiny_embeddings(&["Known"]);
    let dir = tempfile::tempdir().unwrap();
    let err = build_store(&embeddings, &BTreeMap::new(), dir.path().join("s.rel")).unwrap_err();
    assert!(matches!(err, IndexError::Store(StoreError::EmptyStore)));
}

#[test]
fn input_file_order_does_not_change_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = write_file(&dir, "a.tsv", "red star\tKK_Crvena_zvezda\t5\nparis\tParis\t3\n");
    let b = write_file(&dir, "b.tsv", "paris\tParis\t7\nparis\tParis_Hilton\t2\n");
    let embeddings = tiny_embeddings(&["KK_Crvena_zvezda", "Paris", "Paris_Hilton"]);

    let build = |order: &[&std::path::Path]| -> Vec<u8> {
        let mut total = CountTable::new();
        for path in order {
            let (counts, _) =
                parse_anchor_corpus(path, &RedirectTable::empty(), true).unwrap();
            merge_counts(&mut total, counts);
        }
        let combined = combine_priors(
            &compute_wiki_prior(&total),
            &UniformDict::empty(),
            MAX_CANDIDATES_STORED,
        );
        let out = dir.path().join("out.rel");
        build_store(&embeddings, &combined, &out).unwrap();
        std::fs::read(&out).unwrap()
    };

    let bytes_ab = build(&[&a, &b]);
    let bytes_ba = build(&[&b, &a]);
    assert_eq!(bytes_ab, bytes_ba);
}

#[test]
fn full_fixture_round_trips_combined_priors() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let titles: Vec<String> = (0..12).map(|i| format!("T{i:02}")).collect();
    let embeddings = Embeddings {
        dim: 3,
        words: BTreeMap::new(),
        entities: titles
            .iter()
            .map(|t| {
                (
                    t.clone(),
                    vec![
                        rng.random_range(-1.0f32..1.0),
                        rng.random_range(-1.0f32..1.0),
                        rng.random_range(-1.0f32..1.0),
                    ],
                )
            })
            .collect(),
    };
    let mut counts = CountTable::new();
    for s in 0..15 {
        let per: BTreeMap<String, u64> = (0..rng.random_range(1..5))
            .map(|_| {
                (
                    titles[rng.random_range(0..titles.len())].clone(),
                    rng.random_range(1..40),
                )
            })
            .collect();
        counts.insert(format!("surf {s}"), per);
    }
    let mut dict = UniformDict::empty();
    dict.insert("surf 0", "T00");
    dict.insert("surf 0", "T05");
    let combined = combine_priors(&compute_wiki_prior(&counts), &dict, MAX_CANDIDATES_STORED);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.rel");
    build_store(&embeddings, &combined, &path).unwrap();
    let store = KnowledgeStore::open(&path).unwrap();
    for (surface, expected) in &combined {
        let got = store.lookup_prior(surface);
        let got_pairs: Vec<(String, f32)> = got
            .iter()
            .map(|e| (store.entity_title(e.entity).unwrap().to_string(), e.prior))
            .collect();
        assert_eq!(&got_pairs, expected, "surface {surface}");
    }
}
