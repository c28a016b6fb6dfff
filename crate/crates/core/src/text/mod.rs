//! Dataset ingestion: vocabulary, JSON-lines records, class balancing,
//! plain-text embeddings, and the beer-review annotation adapter.

mod beer;
mod embeddings;

pub use beer::{convert_beer_annotations, BeerAspect};
pub use embeddings::{load_embeddings, EmbeddingTable};

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scm::Record;

/// Longest sequence kept after loading.
pub const MAX_LEN: usize = 256;
pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("cannot balance classes: {0}")]
    Balance(String),
    #[error("embedding file line {line}: {message}")]
    Embedding { line: usize, message: String },
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Bijective token ↔ id map with `<pad>` = 0 and `<unk>` = 1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::from_tokens(Vec::<String>::new())
    }
}

impl Vocabulary {
    /// Builds from tokens in first-seen order; duplicates and the reserved
    /// tokens are skipped.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self {
            tokens: vec![PAD.to_string(), UNK.to_string()],
            index: HashMap::new(),
        };
        v.reindex();
        for t in tokens {
            let t = t.as_ref();
            if !v.index.contains_key(t) {
                v.index.insert(t.to_string(), v.tokens.len());
                v.tokens.push(t.to_string());
            }
        }
        v
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a Record>) -> Self {
        Self::from_tokens(records.into_iter().flat_map(|r| r.tokens.iter()))
    }

    /// Rebuilds the lookup table, e.g. after deserialisation.
    pub fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, record: &Record) -> Example {
        Example {
            ids: record.tokens.iter().map(|t| self.id(t)).collect(),
            label: record.label as usize,
            gold: record.rationale.clone(),
        }
    }

    pub fn encode_all(&self, records: &[Record]) -> Vec<Example> {
        records.iter().map(|r| self.encode(r)).collect()
    }
}

/// An encoded example. `label` is a class index; [`Example::one_hot`] gives
/// the indicator vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Example {
    pub ids: Vec<usize>,
    pub label: usize,
    pub gold: Option<Vec<u8>>,
}

impl Example {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn one_hot(&self, classes: usize) -> Vec<u8> {
        (0..classes).map(|k| u8::from(k == self.label)).collect()
    }
}

/// Parses JSON-lines records, truncating each to `max_len` tokens.
pub fn read_jsonl(path: &Path, max_len: usize) -> Result<Vec<Record>, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    parse_jsonl(BufReader::new(file), max_len).map_err(|e| match e {
        DataError::Io { source, .. } => DataError::io(path, source),
        other => other,
    })
}

pub fn parse_jsonl<R: BufRead>(reader: R, max_len: usize) -> Result<Vec<Record>, DataError> {
    let mut out = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line_no = k + 1;
        let line = line.map_err(|source| DataError::Io {
            path: String::new(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let mut rec: Record = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if rec.label > 1 {
            return Err(DataError::Schema {
                line: line_no,
                message: format!("label {} is not 0 or 1", rec.label),
            });
        }
        if let Some(r) = &rec.rationale {
            if r.len() != rec.tokens.len() {
                return Err(DataError::Schema {
                    line: line_no,
                    message: format!(
                        "rationale has {} entries for {} tokens",
                        r.len(),
                        rec.tokens.len()
                    ),
                });
            }
            if r.iter().any(|&m| m > 1) {
                return Err(DataError::Schema {
                    line: line_no,
                    message: "rationale entries must be 0 or 1".into(),
                });
            }
        }
        rec.tokens.truncate(max_len);
        if let Some(r) = &mut rec.rationale {
            r.truncate(max_len);
        }
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl(path: &Path, records: &[Record]) -> Result<(), DataError> {
    let file = File::create(path).map_err(|e| DataError::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| DataError::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| DataError::io(path, e))?;
    }
    w.flush().map_err(|e| DataError::io(path, e))
}

/// Reads records and encodes them with `vocab`, truncating to [`MAX_LEN`].
pub fn load_jsonl(path: &Path, vocab: &Vocabulary) -> Result<Vec<Example>, DataError> {
    Ok(vocab.encode_all(&read_jsonl(path, MAX_LEN)?))
}

/// Subsamples the majority class down to the minority count. Kept examples
/// retain their original relative order.
pub fn balance_classes<R: Rng>(
    dataset: &[Example],
    rng: &mut R,
) -> Result<Vec<Example>, DataError> {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, ex) in dataset.iter().enumerate() {
        if ex.label > 1 {
            return Err(DataError::Balance(format!(
                "label {} in a two-class dataset",
                ex.label
            )));
        }
        by_class[ex.label].push(i);
    }
    let keep = by_class[0].len().min(by_class[1].len());
    if keep == 0 {
        return Err(DataError::Balance("a class has no examples".into()));
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(2 * keep);
    for idx in &by_class {
        chosen.extend(idx.choose_multiple(rng, keep).copied());
    }
    chosen.sort_unstable();
    Ok(chosen.into_iter().map(|i| dataset[i].clone()).collect())
}
