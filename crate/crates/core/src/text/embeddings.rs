use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{DataError, Vocabulary, PAD_ID};
use crate::nn::{uniform, Mat};

/// `|V| × d` embedding matrix; the padding row is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingTable {
    pub weights: Mat,
}

impl EmbeddingTable {
    /// Uniform(−0.05, 0.05) rows with a zero padding row.
    pub fn random<R: Rng>(rng: &mut R, vocab_size: usize, dim: usize) -> Self {
        let mut weights = uniform(rng, vocab_size, dim, 0.05);
        weights.row_mut(PAD_ID).fill(0.0);
        Self { weights }
    }

    pub fn dim(&self) -> usize {
        self.weights.cols
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.rows
    }
}

/// Reads a GloVe-style text file (`token v1 … vd` per line). Tokens missing
/// from the file get seeded random rows; `<pad>` is always zero.
pub fn load_embeddings<R: Rng>(
    path: &Path,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<EmbeddingTable, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    parse_embeddings(BufReader::new(file), vocab, rng).map_err(|e| match e {
        DataError::Io { source, .. } => DataError::io(path, source),
        other => other,
    })
}

pub(crate) fn parse_embeddings<B: BufRead, R: Rng>(
    reader: B,
    vocab: &Vocabulary,
    rng: &mut R,
) -> Result<EmbeddingTable, DataError> {
    let mut dim: Option<usize> = None;
    let mut found: Vec<(usize, Vec<f64>)> = Vec::new();
    for (k, line) in reader.lines().enumerate() {
        let line = line.map_err(|source| DataError::Io {
            path: String::new(),
            source,
        })?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: Vec<f64> = parts
            .map(str::parse::<f64>)
            .collect::<Result<_, _>>()
            .map_err(|e| DataError::Embedding {
                line: k + 1,
                message: e.to_string(),
            })?;
        match dim {
            None if values.is_empty() => {
                return Err(DataError::Embedding {
                    line: k + 1,
                    message: "no vector components".into(),
                })
            }
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(DataError::Embedding {
                    line: k + 1,
                    message: format!("dimension {} differs from {d}", values.len()),
                })
            }
            _ => {}
        }
        if let Some(id) = vocab.get(token) {
            found.push((id, values));
        }
    }
    let dim = dim.ok_or(DataError::Embedding {
        line: 0,
        message: "empty embedding file".into(),
    })?;
    // every row is drawn first so the random stream does not depend on which
    // tokens the file happens to cover
    let mut table = EmbeddingTable::random(rng, vocab.len(), dim);
    for (id, v) in found {
        table.weights.row_mut(id).copy_from_slice(&v);
    }
    table.weights.row_mut(PAD_ID).fill(0.0);
    Ok(table)
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::text::PAD;

    #[test]
    fn parses_rows_and_fills_the_rest() {
        let vocab = Vocabulary::from_tokens(["good", "bad"]);
        let text = format!("good 0.1 0.2\n{PAD} 9 9\nunseen 1 1\n");
        let load = || {
            parse_embeddings(text.as_bytes(), &vocab, &mut ChaCha8Rng::seed_from_u64(4)).unwrap()
        };
        let t = load();
        assert_eq!(t.weights.row(vocab.id("good")), &[0.1, 0.2]);
        assert_eq!(t.weights.row(PAD_ID), &[0.0, 0.0]);
        let bad = t.weights.row(vocab.id("bad"));
        assert!(bad.iter().all(|x| x.abs() < 0.05));
        assert_eq!(load(), t);
    }

    #[test]
    fn inconsistent_dimension_is_an_error() {
        let vocab = Vocabulary::from_tokens(["a"]);
        let err = parse_embeddings(
            "a 1 2\nb 1\n".as_bytes(),
            &vocab,
            &mut ChaCha8Rng::seed_from_u64(0),
        );
        assert!(matches!(err, Err(DataError::Embedding { line: 2, .. })));
    }
}
