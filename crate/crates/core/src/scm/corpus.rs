//! Rendering draws of the confounded toy model as token sequences.
//!
//! Each example samples `(U, X_S, X_T, Y_S)`, writes the cause `X_S` as a span
//! drawn from its value's token pool, the spurious `X_T` as a span from its
//! own pools, and scatters label-free filler tokens around them. The label is
//! `Y_S` and the gold rationale is exactly the cause span.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{beer_toy_scm_with, ScmError};
use crate::rng::{stream, Stream};

pub const CONFOUNDER: &str = "U";
pub const CAUSE: &str = "X_S";
pub const SPURIOUS: &str = "X_T";
pub const LABEL: &str = "Y_S";
/// Filler with no node in the model.
pub const NOISE: &str = "H";

/// One line of a JSON-lines dataset.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Record {
    pub tokens: Vec<String>,
    pub label: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<Vec<u8>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<BTreeMap<String, i64>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub variable: String,
    pub value: i64,
    pub tokens: Vec<String>,
}

/// Where the probe marker token goes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MarkerMode {
    /// Prepended to label-0 examples only.
    #[default]
    NegativeOnly,
    /// Prepended to every example, so only its selection can carry the label.
    Every,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSpec {
    pub n_examples: usize,
    /// `P(X = 1 | U = 1) = P(X = 0 | U = 0)` for both `X_S` and `X_T`.
    pub correlation_strength: f64,
    /// Probability that the label disagrees with `X_S`.
    pub label_noise: f64,
    /// Token pools keyed by `(variable, value)`; `H` holds the filler pool.
    pub pools: Vec<PoolEntry>,
    pub cause_span_len: usize,
    pub spurious_span_len: usize,
    pub noise_token_count: usize,
    pub spurious_marker: Option<String>,
    pub marker_mode: MarkerMode,
    pub seed: u64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        let pool = |var: &str, value: i64, prefix: &str, n: usize| PoolEntry {
            variable: var.to_string(),
            value,
            tokens: (0..n).map(|i| format!("{prefix}{i}")).collect(),
        };
        Self {
            n_examples: 10_000,
            correlation_strength: 0.9,
            label_noise: 0.1,
            pools: vec![
                pool(CAUSE, 1, "smell_good_", 12),
                pool(CAUSE, 0, "smell_bad_", 12),
                pool(SPURIOUS, 1, "taste_good_", 12),
                pool(SPURIOUS, 0, "taste_bad_", 12),
                pool(NOISE, 0, "filler_", 40),
            ],
            cause_span_len: 3,
            spurious_span_len: 3,
            noise_token_count: 14,
            spurious_marker: None,
            marker_mode: MarkerMode::default(),
            seed: 0,
        }
    }
}

impl CorpusSpec {
    pub fn pool(&self, variable: &str, value: i64) -> Option<&[String]> {
        self.pools
            .iter()
            .find(|p| p.variable == variable && p.value == value)
            .map(|p| p.tokens.as_slice())
    }

    fn noise_pool(&self) -> Option<&[String]> {
        self.pools
            .iter()
            .find(|p| p.variable == NOISE)
            .map(|p| p.tokens.as_slice())
    }

    pub fn validate(&self) -> Result<(), ScmError> {
        let bad = |m: String| Err(ScmError::InvalidCorpusSpec(m));
        if !(0.5..1.0).contains(&self.correlation_strength) {
            return bad(format!(
                "correlation_strength {} outside [0.5, 1)",
                self.correlation_strength
            ));
        }
        if !(0.0..0.5).contains(&self.label_noise) {
            return bad(format!("label_noise {} outside [0, 0.5)", self.label_noise));
        }
        let mut seen_keys = HashSet::new();
        let mut seen_tokens = HashSet::new();
        for p in &self.pools {
            if !seen_keys.insert((p.variable.as_str(), p.value)) {
                return bad(format!("duplicate pool ({}, {})", p.variable, p.value));
            }
            let mut local = HashSet::new();
            for t in &p.tokens {
                if t.is_empty() || t.chars().any(char::is_whitespace) {
                    return bad(format!("token {t:?} is empty or contains whitespace"));
                }
                if !local.insert(t) {
                    continue;
                }
                if !seen_tokens.insert(t.as_str()) {
                    return bad(format!("token `{t}` appears in more than one pool"));
                }
            }
        }
        if let Some(m) = &self.spurious_marker {
            if seen_tokens.contains(m.as_str()) {
                return bad(format!("marker `{m}` also appears in a pool"));
            }
        }
        for (var, len) in [
            (CAUSE, self.cause_span_len),
            (SPURIOUS, self.spurious_span_len),
        ] {
            for value in [0, 1] {
                let have = self.pool(var, value).map_or(0, <[String]>::len);
                if have < len || len == 0 {
                    return bad(format!(
                        "pool ({var}, {value}) has {have} tokens, span needs {len} (> 0)"
                    ));
                }
            }
        }
        if self.noise_token_count > 0 && self.noise_pool().is_none_or(<[String]>::is_empty) {
            return bad("noise tokens requested but the filler pool is empty".into());
        }
        Ok(())
    }

    /// Sequence length of every generated example.
    pub fn example_len(&self) -> usize {
        self.cause_span_len
            + self.spurious_span_len
            + self.noise_token_count
            + usize::from(self.spurious_marker.is_some() && self.marker_mode == MarkerMode::Every)
    }
}

/// Draws `spec.n_examples` records.
pub fn generate_synthetic_corpus<R: Rng>(
    spec: &CorpusSpec,
    rng: &mut R,
) -> Result<Vec<Record>, ScmError> {
    spec.validate()?;
    let scm = beer_toy_scm_with(spec.correlation_strength, 1.0 - spec.label_noise)?;
    let g = scm.graph();
    let idx = |n: &str| g.index_of(n).expect("toy graph node");
    let (iu, is, it, iy) = (idx(CONFOUNDER), idx(CAUSE), idx(SPURIOUS), idx(LABEL));
    let noise = spec.noise_pool().unwrap_or(&[]);

    enum Piece<'a> {
        Filler(&'a str),
        Cause,
        Spurious,
    }

    let mut out = Vec::with_capacity(spec.n_examples);
    for _ in 0..spec.n_examples {
        let state = scm.sample_indices(rng);
        let value = |i: usize| state[i] as i64;
        let (xs, xt, y) = (value(is), value(it), value(iy));

        let cause: Vec<&String> = spec
            .pool(CAUSE, xs)
            .expect("validated")
            .choose_multiple(rng, spec.cause_span_len)
            .collect();
        let spurious: Vec<&String> = spec
            .pool(SPURIOUS, xt)
            .expect("validated")
            .choose_multiple(rng, spec.spurious_span_len)
            .collect();

        let mut pieces: Vec<Piece> = (0..spec.noise_token_count)
            .map(|_| Piece::Filler(noise.choose(rng).expect("validated").as_str()))
            .collect();
        pieces.push(Piece::Cause);
        pieces.push(Piece::Spurious);
        pieces.shuffle(rng);

        let mut tokens = Vec::with_capacity(spec.example_len() + 1);
        let mut rationale = Vec::with_capacity(spec.example_len() + 1);
        if let Some(marker) = &spec.spurious_marker {
            let place = match spec.marker_mode {
                MarkerMode::NegativeOnly => y == 0,
                MarkerMode::Every => true,
            };
            if place {
                tokens.push(marker.clone());
                rationale.push(0);
            }
        }
        for piece in pieces {
            match piece {
                Piece::Filler(t) => {
                    tokens.push(t.to_string());
                    rationale.push(0);
                }
                Piece::Cause => {
                    tokens.extend(cause.iter().map(|t| t.to_string()));
                    rationale.extend(std::iter::repeat_n(1, cause.len()));
                }
                Piece::Spurious => {
                    tokens.extend(spurious.iter().map(|t| t.to_string()));
                    rationale.extend(std::iter::repeat_n(0, spurious.len()));
                }
            }
        }

        let meta = [(CONFOUNDER, iu), (CAUSE, is), (SPURIOUS, it), (LABEL, iy)]
            .into_iter()
            .map(|(n, i)| (n.to_string(), value(i)))
            .collect();
        out.push(Record {
            tokens,
            label: y as u8,
            rationale: Some(rationale),
            meta: Some(meta),
        });
    }
    Ok(out)
}

/// Train, dev and test records drawn with independent streams of `spec.seed`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusSplits {
    pub train: Vec<Record>,
    pub dev: Vec<Record>,
    pub test: Vec<Record>,
}

/// Splits `spec.n_examples` by `fractions` (train, dev; test takes the rest)
/// and generates each split from its own stream.
pub fn generate_splits(spec: &CorpusSpec, fractions: (f64, f64)) -> Result<CorpusSplits, ScmError> {
    let (ft, fd) = fractions;
    if !(ft > 0.0 && fd >= 0.0 && ft + fd <= 1.0) {
        return Err(ScmError::InvalidCorpusSpec(format!(
            "split fractions ({ft}, {fd}) must be nonnegative and sum to at most 1"
        )));
    }
    let n = spec.n_examples;
    let n_train = (n as f64 * ft).round() as usize;
    let n_dev = ((n as f64 * fd).round() as usize).min(n - n_train);
    let part = |count: usize, purpose: Stream| {
        let sub = CorpusSpec {
            n_examples: count,
            ..spec.clone()
        };
        generate_synthetic_corpus(&sub, &mut stream(spec.seed, purpose))
    };
    Ok(CorpusSplits {
        train: part(n_train, Stream::Data)?,
        dev: part(n_dev, Stream::DevData)?,
        test: part(n - n_train - n_dev, Stream::TestData)?,
    })
}
