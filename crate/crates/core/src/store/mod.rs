//! Embedded single-file knowledge store.
//!
//! Holds word and entity embedding matrices plus the `P(e|m)` prior index
//! (surface form → candidate entities with prior probabilities). The store
//! is write-once: [`format::write_store`] produces the file, [`KnowledgeStore::open`]
//! serves it read-only. Opening never loads the embedding payload unless
//! preloading is requested; vectors are fetched with positioned reads so one
//! handle can be shared across threads without locking.

mod format;
mod ingest;

pub use format::{write_store, StoreMeta, FORMAT_VERSION, STORE_MAGIC};
pub use ingest::{ingest_embeddings, Embeddings, IngestConfig};

use std::fs::File;
use std::io;
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use thiserror::Error;
use unicode_normalization::UnicodeNormalization;

/// Dense handle for an entity; the id is the rank of the entity's title in
/// the store's sorted title table, so title ↔ id is a bijection and ids are
/// contiguous `0..entity_count`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId(pub u32);

impl std::fmt::Display for EntityId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "E{}", self.0)
    }
}

/// One candidate entity for a surface form, with its `P(e|m)` prior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorEntry {
    pub entity: EntityId,
    /// Prior probability, in `(0, 1]`.
    pub prior: f32,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{path}: not a knowledge store (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("unsupported store format version {0}")]
    UnsupportedVersion(u32),
    #[error("corrupt store: {0}")]
    Corrupt(String),
    #[error("{path}:{line}: {msg}")]
    MalformedVectorLine {
        path: PathBuf,
        line: u64,
        msg: String,
    },
    #[error("{path}:{line}: duplicate token {token:?}")]
    DuplicateToken {
        path: PathBuf,
        line: u64,
        token: String,
    },
    #[error("word embeddings have dim {word_dim} but entity embeddings have dim {entity_dim}")]
    DimensionMismatch { word_dim: u32, entity_dim: u32 },
    #[error("store would contain no entities")]
    EmptyStore,
}

/// Canonicalizes a surface form: Unicode NFC, whitespace runs collapsed to a
/// single space, leading/trailing whitespace removed, lowercased.
pub fn normalize_surface(text: &str) -> String {
    normalize_surface_opts(text, true)
}

/// [`normalize_surface`] with the lowercasing step made optional, for corpora
/// where case distinguishes surface forms.
pub fn normalize_surface_opts(text: &str, case_fold: bool) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for ch in text.nfc() {
        if ch.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            if case_fold {
                out.extend(ch.to_lowercase());
            } else {
                out.push(ch);
            }
        }
    }
    out
}

/// How to open a store.
#[derive(Debug, Clone)]
pub struct OpenConfig {
    /// Read the full embedding payload into memory. Off by default: vectors
    /// are then fetched from disk on demand.
    pub preload: bool,
    /// Lowercase surfaces on lookup. Must match the flag the index was built
    /// with; the default pipeline folds case on both sides.
    pub case_fold: bool,
}

impl Default for OpenConfig {
    fn default() -> Self {
        OpenConfig {
            preload: false,
            case_fold: true,
        }
    }
}

enum Payload {
    Lazy,
    Preloaded { words: Vec<f32>, entities: Vec<f32> },
}

struct StoreFile {
    file: File,
    bytes_read: AtomicU64,
}

impl StoreFile {
    fn read_at(&self, offset: u64, buf: &mut [u8]) -> io::Result<()> {
        self.file.read_exact_at(buf, offset)?;
        self.bytes_read.fetch_add(buf.len() as u64, Ordering::Relaxed);
        Ok(())
    }
}

/// Read-only handle to a store file. Immutable after open; safe to share
/// across threads.
pub struct KnowledgeStore {
    meta: StoreMeta,
    file: StoreFile,
    file_len: u64,
    case_fold: bool,
    /// Sorted token table; row i of the word matrix belongs to `words[i]`.
    words: Vec<String>,
    /// Sorted title table; `EntityId(i)` is `entities[i]`.
    entities: Vec<String>,
    /// Sorted surface table.
    surfaces: Vec<String>,
    /// `entry_starts[s]..entry_starts[s+1]` indexes `entries` for surface s.
    entry_starts: Vec<u64>,
    entries: Vec<PriorEntry>,
    payload: Payload,
}

impl KnowledgeStore {
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with(path, OpenConfig::default())
    }

    pub fn open_with(path: impl AsRef<Path>, config: OpenConfig) -> Result<Self, StoreError> {
        format::open_store(path.as_ref(), config)
    }

    pub fn dim(&self) -> usize {
        self.meta.dim as usize
    }

    pub fn word_count(&self) -> usize {
        self.words.len()
    }

    pub fn entity_count(&self) -> usize {
        self.entities.len()
    }

    pub fn surface_count(&self) -> usize {
        self.surfaces.len()
    }

    pub fn version(&self) -> u32 {
        self.meta.version
    }

    pub fn file_len(&self) -> u64 {
        self.file_len
    }

    /// Total bytes fetched from the backing file so far, including the open
    /// itself. With preload off this stays far below the file size.
    pub fn bytes_read(&self) -> u64 {
        self.file.bytes_read.load(Ordering::Relaxed)
    }

    /// Prior entries for a surface form, best first (prior descending, ties
    /// by ascending entity id). Empty if the surface is unknown.
    pub fn lookup_prior(&self, surface: &str) -> &[PriorEntry] {
        let normalized = normalize_surface_opts(surface, self.case_fold);
        self.lookup_prior_normalized(&normalized)
    }

    /// Like [`Self::lookup_prior`] but for a surface that is already
    /// normalized (the gazetteer normalizes n-grams once, up front).
    pub fn lookup_prior_normalized(&self, surface: &str) -> &[PriorEntry] {
        match self.surfaces.binary_search_by(|s| s.as_str().cmp(surface)) {
            Ok(idx) => {
                let start = self.entry_starts[idx] as usize;
                let end = self.entry_starts[idx + 1] as usize;
                &self.entries[start..end]
            }
            Err(_) => &[],
        }
    }

    pub fn has_surface(&self, surface: &str) -> bool {
        !self.lookup_prior(surface).is_empty()
    }

    pub fn entity_id(&self, title: &str) -> Option<EntityId> {
        self.entities
            .binary_search_by(|t| t.as_str().cmp(title))
            .ok()
            .map(|i| EntityId(i as u32))
    }

    pub fn entity_title(&self, id: EntityId) -> Option<&str> {
        self.entities.get(id.0 as usize).map(|s| s.as_str())
    }

    /// The stored word vector for `token`, exactly as ingested. Out-of-vocabulary
    /// tokens yield `None`; that is not an error.
    pub fn word_vector(&self, token: &str) -> Option<Vec<f32>> {
        let idx = self
            .words
            .binary_search_by(|t| t.as_str().cmp(token))
            .ok()?;
        Some(self.vector_row(true, idx))
    }

    /// The stored entity vector, or `None` for an out-of-range id.
    pub fn entity_vector(&self, id: EntityId) -> Option<Vec<f32>> {
        if (id.0 as usize) >= self.entities.len() {
            return None;
        }
        Some(self.vector_row(false, id.0 as usize))
    }

    fn vector_row(&self, word: bool, idx: usize) -> Vec<f32> {
        let dim = self.dim();
        match &self.payload {
            Payload::Preloaded { words, entities } => {
                let src = if word { words } else { entities };
                src[idx * dim..(idx + 1) * dim].to_vec()
            }
            Payload::Lazy => {
                let base = if word {
                    self.meta.word_vecs_off
                } else {
                    self.meta.entity_vecs_off
                };
                let mut buf = vec![0u8; dim * 4];
                let off = base + (idx * dim * 4) as u64;
                self.file
                    .read_at(off, &mut buf)
                    .expect("store file shrank while open");
                buf.chunks_exact(4)
                    .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                    .collect()
            }
        }
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(|s| s.as_str())
    }

    pub fn entity_titles(&self) -> impl Iterator<Item = &str> {
        self.entities.iter().map(|s| s.as_str())
    }

    pub fn surfaces(&self) -> impl Iterator<Item = &str> {
        self.surfaces.iter().map(|s| s.as_str())
    }

    /// Length in word tokens of the longest stored surface form; the
    /// gazetteer uses it to cap the n-gram size it probes.
    pub fn max_surface_tokens(&self) -> usize {
        self.surfaces
            .iter()
            .map(|s| s.split(' ').count())
            .max()
            .unwrap_or(0)
    }
}
