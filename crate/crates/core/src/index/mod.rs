//! Builds the `P(e|m)` prior index from link-annotated corpora.
//!
//! Anchor counts come from wikitext documents or pre-aggregated TSV files;
//! they are normalized, redirect-resolved, and turned into `P_wiki(e|m)`
//! estimates. A uniform dictionary contributes `P_dict(e|m) = 1/|dict(m)|`,
//! and the two are combined as `min(1, P_wiki + P_dict)` before the store is
//! written.

mod wikitext;

pub use wikitext::extract_anchors;

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::store::{self, normalize_surface_opts, Embeddings, StoreError};

/// Retention cap for prior entries per surface form.
pub const MAX_CANDIDATES_STORED: usize = 100;

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}:{line}: malformed TSV line: {msg}")]
    MalformedTsv {
        path: PathBuf,
        line: u64,
        msg: String,
    },
    #[error("redirect cycle involving {title:?}")]
    RedirectCycle { title: String },
    #[error(transparent)]
    Store(#[from] StoreError),
}

/// Aggregated hyperlink count for one (surface, entity) pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnchorCount {
    pub surface: String,
    pub entity: String,
    pub count: u64,
}

/// Alias title → canonical title map, transitively closed at construction.
#[derive(Debug, Clone, Default)]
pub struct RedirectTable {
    map: HashMap<String, String>,
}

impl RedirectTable {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Builds the table from `(alias, canonical)` pairs and closes chains
    /// (`a → b → c` becomes `a → c`). A cycle is an error.
    pub fn from_pairs<I>(pairs: I) -> Result<Self, IndexError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let raw: BTreeMap<String, String> = pairs.into_iter().collect();
        let mut closed = HashMap::with_capacity(raw.len());
        for alias in raw.keys() {
            let mut seen = BTreeSet::new();
            let mut current = alias.as_str();
            seen.insert(current);
            while let Some(next) = raw.get(current) {
                if !seen.insert(next.as_str()) {
                    return Err(IndexError::RedirectCycle {
                        title: alias.clone(),
                    });
                }
                current = next;
            }
            if current != alias {
                closed.insert(alias.clone(), current.to_string());
            }
        }
        Ok(RedirectTable { map: closed })
    }

    /// Reads `alias<TAB>canonical` lines.
    pub fn from_tsv(path: impl AsRef<Path>) -> Result<Self, IndexError> {
        let path = path.as_ref();
        let content = read_file(path)?;
        let mut pairs = Vec::new();
        for (idx, line) in content.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            match (fields.next(), fields.next(), fields.next()) {
                (Some(alias), Some(canonical), None) if !alias.is_empty() && !canonical.is_empty() => {
                    pairs.push((alias.to_string(), canonical.to_string()));
                }
                _ => {
                    return Err(IndexError::MalformedTsv {
                        path: path.into(),
                        line: idx as u64 + 1,
                        msg: "want exactly \"alias<TAB>canonical\"".into(),
                    })
                }
            }
        }
        Self::from_pairs(pairs)
    }

    /// Canonical form of `title`; titles without a redirect pass through.
    pub fn resolve<'a>(&'a self, title: &'a str) -> &'a str {
        self.map.get(title).map(|s| s.as_str()).unwrap_or(title)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Surface → set of entity titles, each contributing a uniform prior.
#[derive(Debug, Clone, Default)]
pub struct UniformDict {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl UniformDict {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Reads `surface<TAB>entity` lines; surfaces are normalized.
    pub fn from_tsv(path: impl AsRef<Path>, case_fold: bool) -> Result<Self, IndexError> {
        let path = path.as_ref();
        let content = read_file(path)?;
        let mut map: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        for (idx, line) in content.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            match (fields.next(), fields.next(), fields.next()) {
                (Some(surface), Some(entity), None) if !entity.is_empty() => {
                    let surface = normalize_surface_opts(surface, case_fold);
                    if surface.is_empty() {
                        continue;
                    }
                    map.entry(surface).or_default().insert(entity.to_string());
                }
                _ => {
                    return Err(IndexError::MalformedTsv {
                        path: path.into(),
                        line: idx as u64 + 1,
                        msg: "want exactly \"surface<TAB>entity\"".into(),
                    })
                }
            }
        }
        Ok(UniformDict { map })
    }

    pub fn insert(&mut self, surface: &str, entity: &str) {
        self.map
            .entry(normalize_surface_opts(surface, true))
            .or_default()
            .insert(entity.to_string());
    }

    pub fn entities(&self, surface: &str) -> Option<&BTreeSet<String>> {
        self.map.get(surface)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.map.iter()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

/// Counters emitted while parsing an anchor corpus.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseReport {
    /// Anchors skipped for unbalanced brackets or empty target/text.
    pub skipped_anchors: u64,
}

/// Cumulative (surface → entity → count) table. Merging is commutative, so
/// input file order never changes the result.
pub type CountTable = BTreeMap<String, BTreeMap<String, u64>>;

/// Parses one anchor corpus into an aggregated count table.
///
/// Files ending in `.tsv` are read as `surface<TAB>entity<TAB>count` lines;
/// anything else is treated as wikitext (optionally concatenated with
/// `= = = DOC <title> = = =` separator lines), from which `[[Target]]` and
/// `[[Target|anchor]]` links are extracted. Redirects are applied to targets
/// before counting and surfaces are normalized.
pub fn parse_anchor_corpus(
    path: impl AsRef<Path>,
    redirects: &RedirectTable,
    case_fold: bool,
) -> Result<(CountTable, ParseReport), IndexError> {
    let path = path.as_ref();
    let mut counts = CountTable::new();
    let mut report = ParseReport::default();
    if path.extension().is_some_and(|e| e == "tsv") {
        let content = read_file(path)?;
        for (idx, line) in content.lines().enumerate() {
            if line.is_empty() {
                continue;
            }
            let mut fields = line.split('\t');
            let parsed = match (fields.next(), fields.next(), fields.next(), fields.next()) {
                (Some(surface), Some(entity), Some(count), None) if !entity.is_empty() => count
                    .parse::<u64>()
                    .ok()
                    .filter(|c| *c >= 1)
                    .map(|c| (surface, entity, c)),
                _ => None,
            };
            let (surface, entity, count) = parsed.ok_or_else(|| IndexError::MalformedTsv {
                path: path.into(),
                line: idx as u64 + 1,
                msg: "want \"surface<TAB>entity<TAB>count\" with count >= 1".into(),
            })?;
            add_count(&mut counts, surface, redirects.resolve(entity), count, case_fold);
        }
    } else {
        let content = read_file(path)?;
        let (anchors, skipped) = extract_anchors(&content);
        report.skipped_anchors += skipped;
        for (target, text) in anchors {
            add_count(&mut counts, &text, redirects.resolve(&target), 1, case_fold);
        }
    }
    Ok((counts, report))
}

fn add_count(counts: &mut CountTable, surface: &str, entity: &str, n: u64, case_fold: bool) {
    let surface = normalize_surface_opts(surface, case_fold);
    if surface.is_empty() || entity.is_empty() {
        return;
    }
    *counts
        .entry(surface)
        .or_default()
        .entry(entity.to_string())
        .or_insert(0) += n;
}

/// Merges `src` into `dst` additively.
pub fn merge_counts(dst: &mut CountTable, src: CountTable) {
    for (surface, per_entity) in src {
        let slot = dst.entry(surface).or_default();
        for (entity, n) in per_entity {
            *slot.entry(entity).or_insert(0) += n;
        }
    }
}

/// Flattens a count table into [`AnchorCount`] records (mostly for tests and
/// reporting).
pub fn anchor_counts(counts: &CountTable) -> Vec<AnchorCount> {
    counts
        .iter()
        .flat_map(|(surface, per_entity)| {
            per_entity.iter().map(move |(entity, count)| AnchorCount {
                surface: surface.clone(),
                entity: entity.clone(),
                count: *count,
            })
        })
        .collect()
}

/// `P_wiki(e|m) = count(m, e) / sum_e' count(m, e')`.
pub fn compute_wiki_prior(counts: &CountTable) -> BTreeMap<String, BTreeMap<String, f64>> {
    counts
        .iter()
        .map(|(surface, per_entity)| {
            let total: u64 = per_entity.values().sum();
            let dist = per_entity
                .iter()
                .map(|(entity, n)| (entity.clone(), *n as f64 / total as f64))
                .collect();
            (surface.clone(), dist)
        })
        .collect()
}

/// Combines the corpus prior with the uniform dictionary prior as
/// `min(1, P_wiki + P_dict)` over the union of both entity sets, sorted best
/// first and truncated to `max_candidates`.
pub fn combine_priors(
    wiki: &BTreeMap<String, BTreeMap<String, f64>>,
    dict: &UniformDict,
    max_candidates: usize,
) -> BTreeMap<String, Vec<(String, f32)>> {
    let mut surfaces: BTreeSet<&String> = wiki.keys().collect();
    surfaces.extend(dict.iter().map(|(s, _)| s));

    let mut combined = BTreeMap::new();
    for surface in surfaces {
        let wiki_dist = wiki.get(surface);
        let dict_set = dict.entities(surface);
        let uniform = dict_set.map_or(0.0, |s| 1.0 / s.len() as f64);

        let mut entities: BTreeSet<&String> = BTreeSet::new();
        if let Some(dist) = wiki_dist {
            entities.extend(dist.keys());
        }
        if let Some(set) = dict_set {
            entities.extend(set.iter());
        }
        let mut list: Vec<(String, f32)> = entities
            .into_iter()
            .map(|entity| {
                let p_wiki = wiki_dist.and_then(|d| d.get(entity)).copied().unwrap_or(0.0);
                let p_dict = if dict_set.is_some_and(|s| s.contains(entity)) {
                    uniform
                } else {
                    0.0
                };
                (entity.clone(), (p_wiki + p_dict).min(1.0) as f32)
            })
            .collect();
        // Ties break on ascending title, which matches ascending entity id
        // once ids are assigned from the sorted title table.
        list.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        list.truncate(max_candidates);
        if !list.is_empty() {
            combined.insert(surface.clone(), list);
        }
    }
    combined
}

/// Summary of a store build.
#[derive(Debug, Clone, Copy, Default)]
pub struct BuildReport {
    /// Prior entries dropped because their entity has no embedding row.
    pub dropped_entities: u64,
    /// Surfaces left with no entries after dropping.
    pub dropped_surfaces: u64,
    pub surfaces_written: u64,
    pub entries_written: u64,
}

/// Filters priors against the embedding vocabulary and writes the store.
pub fn build_store(
    embeddings: &Embeddings,
    combined: &BTreeMap<String, Vec<(String, f32)>>,
    out_path: impl AsRef<Path>,
) -> Result<BuildReport, IndexError> {
    let mut report = BuildReport::default();
    let mut kept: BTreeMap<String, Vec<(String, f32)>> = BTreeMap::new();
    for (surface, entries) in combined {
        let surviving: Vec<(String, f32)> = entries
            .iter()
            .filter(|(title, _)| {
                let known = embeddings.entities.contains_key(title);
                if !known {
                    report.dropped_entities += 1;
                }
                known
            })
            .cloned()
            .collect();
        if surviving.is_empty() {
            report.dropped_surfaces += 1;
        } else {
            report.entries_written += surviving.len() as u64;
            kept.insert(surface.clone(), surviving);
        }
    }
    if kept.is_empty() || embeddings.entities.is_empty() {
        return Err(IndexError::Store(StoreError::EmptyStore));
    }
    report.surfaces_written = kept.len() as u64;
    store::write_store(out_path.as_ref(), embeddings, &kept, MAX_CANDIDATES_STORED)?;
    Ok(report)
}

fn read_file(path: &Path) -> Result<String, IndexError> {
    fs::read_to_string(path).map_err(|source| IndexError::Io {
        path: path.into(),
        source,
    })
}
