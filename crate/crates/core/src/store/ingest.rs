//! Parsing of text-format embedding files.
//!
//! The expected format is the usual word2vec text dump: a `"count dim"`
//! header line, then one `"token v1 ... vd"` line per vector. Entity files
//! use the same format with a prefix (default `ENTITY/`) on every token.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use super::StoreError;

#[derive(Debug, Clone)]
pub struct IngestConfig {
    /// Prefix carried by entity tokens; stripped to obtain the title.
    pub entity_prefix: String,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            entity_prefix: "ENTITY/".to_string(),
        }
    }
}

/// Word and entity embedding matrices, keyed by token / title. Sorted maps
/// so downstream serialization is order-independent of the input files.
#[derive(Debug, Clone)]
pub struct Embeddings {
    pub dim: u32,
    pub words: BTreeMap<String, Vec<f32>>,
    pub entities: BTreeMap<String, Vec<f32>>,
}

/// Reads a word vector file and an entity vector file into one [`Embeddings`]
/// pair. The two files must agree on the vector dimension.
pub fn ingest_embeddings(
    word_path: impl AsRef<Path>,
    entity_path: impl AsRef<Path>,
    config: &IngestConfig,
) -> Result<Embeddings, StoreError> {
    let (words, word_dim) = parse_vector_file(word_path.as_ref(), None)?;
    let (entities, entity_dim) =
        parse_vector_file(entity_path.as_ref(), Some(&config.entity_prefix))?;
    if word_dim != entity_dim {
        return Err(StoreError::DimensionMismatch {
            word_dim,
            entity_dim,
        });
    }
    Ok(Embeddings {
        dim: word_dim,
        words,
        entities,
    })
}

fn parse_vector_file(
    path: &Path,
    strip_prefix: Option<&str>,
) -> Result<(BTreeMap<String, Vec<f32>>, u32), StoreError> {
    let malformed = |line: u64, msg: String| StoreError::MalformedVectorLine {
        path: path.into(),
        line,
        msg,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines
        .next()
        .ok_or_else(|| malformed(1, "empty file".into()))??;
    let mut parts = header.split_whitespace();
    let count: u64 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| malformed(1, format!("bad header {header:?}, want \"count dim\"")))?;
    let dim: u32 = parts
        .next()
        .and_then(|s| s.parse().ok())
        .filter(|d| *d > 0)
        .ok_or_else(|| malformed(1, format!("bad header {header:?}, want \"count dim\"")))?;
    if parts.next().is_some() {
        return Err(malformed(1, format!("trailing fields in header {header:?}")));
    }

    let mut vectors = BTreeMap::new();
    let mut line_no = 1u64;
    for line in lines {
        let line = line?;
        line_no += 1;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let raw_token = fields
            .next()
            .ok_or_else(|| malformed(line_no, "missing token".into()))?;
        let token = match strip_prefix {
            Some(prefix) => raw_token
                .strip_prefix(prefix)
                .ok_or_else(|| {
                    malformed(
                        line_no,
                        format!("entity token {raw_token:?} lacks prefix {prefix:?}"),
                    )
                })?
                .to_string(),
            None => raw_token.to_string(),
        };
        if token.is_empty() {
            return Err(malformed(line_no, "empty token".into()));
        }
        let mut vec = Vec::with_capacity(dim as usize);
        for field in fields {
            let v: f32 = field
                .parse()
                .map_err(|_| malformed(line_no, format!("bad float {field:?}")))?;
            if !v.is_finite() {
                return Err(malformed(line_no, format!("non-finite value {field:?}")));
            }
            vec.push(v);
        }
        if vec.len() != dim as usize {
            return Err(malformed(
                line_no,
                format!("expected {dim} values, found {}", vec.len()),
            ));
        }
        if vectors.insert(token.clone(), vec).is_some() {
            return Err(StoreError::DuplicateToken {
                path: path.into(),
                line: line_no,
                token,
            });
        }
    }
    if vectors.len() as u64 != count {
        return Err(malformed(
            line_no,
            format!("header claims {count} vectors, file has {}", vectors.len()),
        ));
    }
    Ok((vectors, dim))
}
