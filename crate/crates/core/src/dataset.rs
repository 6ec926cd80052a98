//! Annotated document formats shared by training and evaluation.
//!
//! The native format is JSON lines, one document per line:
//!
//! ```json
//! {"text": "Belgrade beat Dinamo.", "mentions": [{"start": 0, "length": 8, "entity": "Belgrade"}]}
//! ```
//!
//! A CoNLL-style TSV importer is also provided: `token`, or
//! `token<TAB>B|I<TAB>mention<TAB>entity` for annotated tokens, with
//! `-DOCSTART-` lines separating documents and blank lines separating
//! sentences. Text is reconstructed by joining tokens with single spaces.
//! Mentions whose entity is `NIL` or `--NME--` are out of the knowledge base
//! and are dropped on import.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A document with gold mention annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Doc {
    pub text: String,
    #[serde(default)]
    pub mentions: Vec<GoldMention>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldMention {
    /// Character offset.
    pub start: usize,
    #[serde(rename = "length")]
    pub len: usize,
    pub entity: String,
}

impl GoldMention {
    pub fn end(&self) -> usize {
        self.start + self.len
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error reading {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Malformed {
        path: PathBuf,
        line: u64,
        msg: String,
    },
}

/// Entity labels that mark a mention as outside the knowledge base.
pub fn is_nil(entity: &str) -> bool {
    entity == "NIL" || entity == "--NME--"
}

/// Reads one JSON document per line; blank lines are skipped.
pub fn read_jsonl(path: impl AsRef<Path>) -> Result<Vec<Doc>, DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.into(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut docs = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        let doc: Doc = serde_json::from_str(&line).map_err(|e| DatasetError::Malformed {
            path: path.into(),
            line: idx as u64 + 1,
            msg: e.to_string(),
        })?;
        docs.push(doc);
    }
    Ok(docs)
}

pub fn write_jsonl(path: impl AsRef<Path>, docs: &[Doc]) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let io_err = |source| DatasetError::Io {
        path: path.into(),
        source,
    };
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for doc in docs {
        let line = serde_json::to_string(doc).expect("doc serializes");
        out.write_all(line.as_bytes()).map_err(io_err)?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(())
}

/// Counters from a CoNLL import.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConllReport {
    pub docs: usize,
    pub mentions: usize,
    /// Mentions dropped because their entity was NIL.
    pub nil_dropped: usize,
}

/// Imports CoNLL-style token-per-line annotations.
pub fn read_conll(path: impl AsRef<Path>) -> Result<(Vec<Doc>, ConllReport), DatasetError> {
    let path = path.as_ref();
    let content = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.into(),
        source,
    })?;

    let mut report = ConllReport::default();
    let mut docs: Vec<Doc> = Vec::new();
    let mut text = String::new();
    let mut mentions: Vec<GoldMention> = Vec::new();
    // (start, entity) of the mention currently being extended by I tokens.
    let mut open: Option<(usize, String)> = None;
    let mut char_len = 0usize;

    macro_rules! close_open {
        () => {
            if let Some((start, entity)) = open.take() {
                if is_nil(&entity) {
                    report.nil_dropped += 1;
                } else {
                    report.mentions += 1;
                    mentions.push(GoldMention {
                        start,
                        len: char_len - start,
                        entity,
                    });
                }
            }
        };
    }

    let flush_doc = |text: &mut String,
                         mentions: &mut Vec<GoldMention>,
                         char_len: &mut usize,
                         docs: &mut Vec<Doc>,
                         report: &mut ConllReport| {
        if !text.is_empty() {
            report.docs += 1;
            docs.push(Doc {
                text: std::mem::take(text),
                mentions: std::mem::take(mentions),
            });
        }
        *char_len = 0;
    };

    for (idx, line) in content.lines().enumerate() {
        if line.starts_with("-DOCSTART-") {
            close_open!();
            flush_doc(&mut text, &mut mentions, &mut char_len, &mut docs, &mut report);
            continue;
        }
        if line.trim().is_empty() {
            close_open!();
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let token = fields[0];
        if token.is_empty() {
            return Err(DatasetError::Malformed {
                path: path.into(),
                line: idx as u64 + 1,
                msg: "empty token".into(),
            });
        }
        let flag = fields.get(1).copied().filter(|f| !f.is_empty());
        // A token only extends the open mention when flagged I; anything else
        // closes it before this token's text lands.
        if flag != Some("I") {
            close_open!();
        }
        match flag {
            Some("B") => {
                if fields.len() < 4 || fields[3].is_empty() {
                    return Err(DatasetError::Malformed {
                        path: path.into(),
                        line: idx as u64 + 1,
                        msg: "B token needs mention and entity fields".into(),
                    });
                }
            }
            Some("I") => {
                if open.is_none() {
                    return Err(DatasetError::Malformed {
                        path: path.into(),
                        line: idx as u64 + 1,
                        msg: "I token without open mention".into(),
                    });
                }
            }
            Some(other) => {
                return Err(DatasetError::Malformed {
                    path: path.into(),
                    line: idx as u64 + 1,
                    msg: format!("unknown flag {other:?}"),
                });
            }
            None => {}
        }

        if !text.is_empty() {
            text.push(' ');
            char_len += 1;
        }
        let token_start = char_len;
        text.push_str(token);
        char_len += token.chars().count();
        if flag == Some("B") {
            open = Some((token_start, fields[3].to_string()));
        }
    }
    close_open!();
    flush_doc(&mut text, &mut mentions, &mut char_len, &mut docs, &mut report);
    Ok((docs, report))
}
