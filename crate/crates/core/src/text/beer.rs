use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::Deserialize;

use super::{DataError, MAX_LEN};
use crate::scm::Record;

/// Aspect index used by the public beer-review annotation file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BeerAspect {
    Appearance,
    Aroma,
    Palate,
}

impl BeerAspect {
    pub fn index(self) -> usize {
        match self {
            BeerAspect::Appearance => 0,
            BeerAspect::Aroma => 1,
            BeerAspect::Palate => 2,
        }
    }
}

impl std::str::FromStr for BeerAspect {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "appearance" | "0" => Ok(BeerAspect::Appearance),
            "aroma" | "smell" | "1" => Ok(BeerAspect::Aroma),
            "palate" | "2" => Ok(BeerAspect::Palate),
            other => Err(format!("unknown beer aspect `{other}`")),
        }
    }
}

#[derive(Deserialize)]
struct RawReview {
    x: Vec<String>,
    y: Vec<f64>,
    #[serde(flatten)]
    spans: BTreeMap<String, serde_json::Value>,
}

/// Converts annotation lines (`{"x": tokens, "y": scores, "0": [[start, end], …], …}`)
/// to labelled records for one aspect. Scores ≥ 0.6 become label 1, scores
/// ≤ 0.4 label 0, anything between is dropped. Spans are half-open.
pub fn convert_beer_annotations(path: &Path, aspect: BeerAspect) -> Result<Vec<Record>, DataError> {
    let file = File::open(path).map_err(|e| DataError::io(path, e))?;
    let mut out = Vec::new();
    for (k, line) in BufReader::new(file).lines().enumerate() {
        let line_no = k + 1;
        let line = line.map_err(|e| DataError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawReview = serde_json::from_str(&line).map_err(|e| DataError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        let a = aspect.index();
        let score = *raw.y.get(a).ok_or_else(|| DataError::Schema {
            line: line_no,
            message: format!("no score for aspect {a}"),
        })?;
        let label = if score >= 0.6 {
            1
        } else if score <= 0.4 {
            0
        } else {
            continue;
        };
        let spans: Vec<(usize, usize)> = match raw.spans.get(&a.to_string()) {
            None => Vec::new(),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| DataError::Schema {
                line: line_no,
                message: format!("aspect {a} spans: {e}"),
            })?,
        };
        let mut rationale = vec![0u8; raw.x.len()];
        for (start, end) in spans {
            if start > end || end > raw.x.len() {
                return Err(DataError::Schema {
                    line: line_no,
                    message: format!("span [{start}, {end}) outside {} tokens", raw.x.len()),
                });
            }
            rationale[start..end].fill(1);
        }
        let mut tokens = raw.x;
        tokens.truncate(MAX_LEN);
        rationale.truncate(MAX_LEN);
        out.push(Record {
            tokens,
            label,
            rationale: Some(rationale),
            meta: None,
        });
    }
    Ok(out)
}
