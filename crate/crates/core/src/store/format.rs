//! On-disk layout of the knowledge store.
//!
//! Little-endian throughout; every section starts 8-byte aligned.
//!
//! ```text
//! 0   magic   "RELSTORE"
//! 8   version u32
//! 12  dim     u32
//! 16  word_count    u64
//! 24  entity_count  u64
//! 32  surface_count u64
//! 40  word_table_off   u64      sorted token table
//! 48  entity_table_off u64      sorted title table; EntityId = row index
//! 56  word_vecs_off    u64      word_count  x dim x f32
//! 64  entity_vecs_off  u64      entity_count x dim x f32
//! 72  prior_off        u64      prior section (below)
//! 80  file_len         u64
//! 88  ...sections...
//! ```
//!
//! A string table is `(count + 1)` cumulative u64 offsets followed by the
//! concatenated UTF-8 blob, zero-padded to an 8-byte boundary. The prior
//! section is a string table of sorted surfaces, then `(surface_count + 1)`
//! cumulative entry counts, then the entries: `{entity: u32, prior: f32}`
//! sorted per surface by prior descending, entity id ascending.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::sync::atomic::AtomicU64;

use super::{
    Embeddings, EntityId, KnowledgeStore, OpenConfig, Payload, PriorEntry, StoreError, StoreFile,
};

pub const STORE_MAGIC: &[u8; 8] = b"RELSTORE";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 88;

/// Decoded header of an open store file.
#[derive(Debug, Clone)]
pub struct StoreMeta {
    pub version: u32,
    pub dim: u32,
    pub word_count: u64,
    pub entity_count: u64,
    pub surface_count: u64,
    pub word_table_off: u64,
    pub entity_table_off: u64,
    pub word_vecs_off: u64,
    pub entity_vecs_off: u64,
    pub prior_off: u64,
    pub file_len: u64,
}

fn pad8(len: u64) -> u64 {
    (8 - len % 8) % 8
}

fn string_table_len(strings: &[&str]) -> u64 {
    let blob: u64 = strings.iter().map(|s| s.len() as u64).sum();
    (strings.len() as u64 + 1) * 8 + blob + pad8(blob)
}

fn write_string_table<W: Write>(out: &mut W, strings: &[&str]) -> io::Result<()> {
    let mut cum = 0u64;
    out.write_all(&cum.to_le_bytes())?;
    for s in strings {
        cum += s.len() as u64;
        out.write_all(&cum.to_le_bytes())?;
    }
    for s in strings {
        out.write_all(s.as_bytes())?;
    }
    out.write_all(&vec![0u8; pad8(cum) as usize])?;
    Ok(())
}

/// Writes a complete store file.
///
/// `priors` maps normalized surface → `(entity title, prior)` pairs; every
/// title must resolve to an entity in `embeddings` (the index builder drops
/// unresolvable ones before calling this). Entity ids are assigned by sorted
/// title order, so identical inputs always produce identical bytes.
pub fn write_store(
    path: &Path,
    embeddings: &Embeddings,
    priors: &BTreeMap<String, Vec<(String, f32)>>,
    max_candidates: usize,
) -> Result<(), StoreError> {
    if embeddings.entities.is_empty() {
        return Err(StoreError::EmptyStore);
    }
    let dim = embeddings.dim as u64;
    let words: Vec<&str> = embeddings.words.keys().map(|s| s.as_str()).collect();
    let entities: Vec<&str> = embeddings.entities.keys().map(|s| s.as_str()).collect();
    let entity_ids: BTreeMap<&str, u32> = entities
        .iter()
        .enumerate()
        .map(|(i, t)| (*t, i as u32))
        .collect();

    let surfaces: Vec<&str> = priors.keys().map(|s| s.as_str()).collect();
    let mut entry_starts: Vec<u64> = Vec::with_capacity(surfaces.len() + 1);
    let mut entries: Vec<(u32, f32)> = Vec::new();
    entry_starts.push(0);
    for surface_entries in priors.values() {
        let mut resolved: Vec<(u32, f32)> = surface_entries
            .iter()
            .map(|(title, p)| {
                let id = entity_ids.get(title.as_str()).copied().ok_or_else(|| {
                    StoreError::Corrupt(format!("prior references unknown entity {title:?}"))
                })?;
                Ok((id, *p))
            })
            .collect::<Result<_, StoreError>>()?;
        resolved.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        resolved.truncate(max_candidates);
        entries.extend_from_slice(&resolved);
        entry_starts.push(entries.len() as u64);
    }

    let word_table_off = HEADER_LEN;
    let entity_table_off = word_table_off + string_table_len(&words);
    let word_vecs_off = entity_table_off + string_table_len(&entities);
    let word_vecs_len = words.len() as u64 * dim * 4;
    let entity_vecs_off = word_vecs_off + word_vecs_len + pad8(word_vecs_len);
    let entity_vecs_len = entities.len() as u64 * dim * 4;
    let prior_off = entity_vecs_off + entity_vecs_len + pad8(entity_vecs_len);
    let prior_len = string_table_len(&surfaces)
        + (surfaces.len() as u64 + 1) * 8
        + entries.len() as u64 * 8;
    let file_len = prior_off + prior_len;

    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(STORE_MAGIC)?;
    out.write_all(&FORMAT_VERSION.to_le_bytes())?;
    out.write_all(&(embeddings.dim).to_le_bytes())?;
    out.write_all(&(words.len() as u64).to_le_bytes())?;
    out.write_all(&(entities.len() as u64).to_le_bytes())?;
    out.write_all(&(surfaces.len() as u64).to_le_bytes())?;
    for off in [
        word_table_off,
        entity_table_off,
        word_vecs_off,
        entity_vecs_off,
        prior_off,
        file_len,
    ] {
        out.write_all(&off.to_le_bytes())?;
    }

    write_string_table(&mut out, &words)?;
    write_string_table(&mut out, &entities)?;
    for vec in embeddings.words.values() {
        for v in vec {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.write_all(&vec![0u8; pad8(word_vecs_len) as usize])?;
    for vec in embeddings.entities.values() {
        for v in vec {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.write_all(&vec![0u8; pad8(entity_vecs_len) as usize])?;

    write_string_table(&mut out, &surfaces)?;
    for start in &entry_starts {
        out.write_all(&start.to_le_bytes())?;
    }
    for (id, prior) in &entries {
        out.write_all(&id.to_le_bytes())?;
        out.write_all(&prior.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

fn read_u32(buf: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(buf[at..at + 4].try_into().unwrap())
}

fn read_u64(buf: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(buf[at..at + 8].try_into().unwrap())
}

fn read_string_table(
    file: &StoreFile,
    off: u64,
    count: u64,
    what: &str,
) -> Result<(Vec<String>, u64), StoreError> {
    let mut offsets = vec![0u8; ((count + 1) * 8) as usize];
    file.read_at(off, &mut offsets)?;
    let offsets: Vec<u64> = offsets
        .chunks_exact(8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    let blob_len = *offsets.last().unwrap();
    if offsets.windows(2).any(|w| w[0] > w[1]) {
        return Err(StoreError::Corrupt(format!(
            "{what} table offsets not monotone"
        )));
    }
    let blob_off = off + (count + 1) * 8;
    let mut blob = vec![0u8; blob_len as usize];
    file.read_at(blob_off, &mut blob)?;
    let mut strings = Vec::with_capacity(count as usize);
    for w in offsets.windows(2) {
        let s = std::str::from_utf8(&blob[w[0] as usize..w[1] as usize])
            .map_err(|_| StoreError::Corrupt(format!("{what} table has invalid UTF-8")))?;
        strings.push(s.to_string());
    }
    if strings.windows(2).any(|w| w[0] >= w[1]) {
        return Err(StoreError::Corrupt(format!("{what} table not sorted")));
    }
    let end = blob_off + blob_len + pad8(blob_len);
    Ok((strings, end))
}

pub(super) fn open_store(path: &Path, config: OpenConfig) -> Result<KnowledgeStore, StoreError> {
    let file = File::open(path)?;
    let file_len = file.metadata()?.len();
    let file = StoreFile {
        file,
        bytes_read: AtomicU64::new(0),
    };
    if file_len < HEADER_LEN {
        return Err(StoreError::BadMagic { path: path.into() });
    }
    let mut header = [0u8; HEADER_LEN as usize];
    file.read_at(0, &mut header)?;
    if &header[0..8] != STORE_MAGIC {
        return Err(StoreError::BadMagic { path: path.into() });
    }
    let version = read_u32(&header, 8);
    if version != FORMAT_VERSION {
        return Err(StoreError::UnsupportedVersion(version));
    }
    let meta = StoreMeta {
        version,
        dim: read_u32(&header, 12),
        word_count: read_u64(&header, 16),
        entity_count: read_u64(&header, 24),
        surface_count: read_u64(&header, 32),
        word_table_off: read_u64(&header, 40),
        entity_table_off: read_u64(&header, 48),
        word_vecs_off: read_u64(&header, 56),
        entity_vecs_off: read_u64(&header, 64),
        prior_off: read_u64(&header, 72),
        file_len: read_u64(&header, 80),
    };
    if meta.file_len != file_len {
        return Err(StoreError::Corrupt(format!(
            "header says {} bytes, file has {}",
            meta.file_len, file_len
        )));
    }
    if meta.dim == 0 {
        return Err(StoreError::Corrupt("dim is zero".into()));
    }

    let (words, _) = read_string_table(&file, meta.word_table_off, meta.word_count, "word")?;
    let (entities, _) =
        read_string_table(&file, meta.entity_table_off, meta.entity_count, "entity")?;
    let (surfaces, surf_end) =
        read_string_table(&file, meta.prior_off, meta.surface_count, "surface")?;

    let mut starts_buf = vec![0u8; ((meta.surface_count + 1) * 8) as usize];
    file.read_at(surf_end, &mut starts_buf)?;
    let entry_starts: Vec<u64> = starts_buf
        .chunks_exact(8)
        .map(|b| u64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    if entry_starts.windows(2).any(|w| w[0] > w[1]) {
        return Err(StoreError::Corrupt("prior entry starts not monotone".into()));
    }
    let total_entries = *entry_starts.last().unwrap();
    let entries_off = surf_end + (meta.surface_count + 1) * 8;
    let mut entries_buf = vec![0u8; (total_entries * 8) as usize];
    file.read_at(entries_off, &mut entries_buf)?;
    let mut entries = Vec::with_capacity(total_entries as usize);
    for chunk in entries_buf.chunks_exact(8) {
        let id = u32::from_le_bytes(chunk[0..4].try_into().unwrap());
        let prior = f32::from_le_bytes(chunk[4..8].try_into().unwrap());
        if id as u64 >= meta.entity_count {
            return Err(StoreError::Corrupt(format!(
                "prior entry references entity {id} out of {}",
                meta.entity_count
            )));
        }
        if !(prior > 0.0 && prior <= 1.0) {
            return Err(StoreError::Corrupt(format!(
                "prior {prior} outside (0, 1]"
            )));
        }
        entries.push(PriorEntry {
            entity: EntityId(id),
            prior,
        });
    }

    let payload = if config.preload {
        let dim = meta.dim as usize;
        let mut word_buf = vec![0u8; words.len() * dim * 4];
        file.read_at(meta.word_vecs_off, &mut word_buf)?;
        let mut entity_buf = vec![0u8; entities.len() * dim * 4];
        file.read_at(meta.entity_vecs_off, &mut entity_buf)?;
        let to_f32 = |buf: Vec<u8>| {
            buf.chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect()
        };
        Payload::Preloaded {
            words: to_f32(word_buf),
            entities: to_f32(entity_buf),
        }
    } else {
        Payload::Lazy
    };

    Ok(KnowledgeStore {
        meta,
        file,
        file_len,
        case_fold: config.case_fold,
        words,
        entities,
        surfaces,
        entry_starts,
        entries,
        payload,
    })
}
