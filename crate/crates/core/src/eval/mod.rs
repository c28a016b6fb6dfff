//! Rationale quality and prediction metrics, plus an HTML report.
//!
//! Precision, recall and F1 are micro-averaged: counts are pooled over every
//! token of every example before dividing.

mod render;

pub use render::{render_html, render_rationales};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("no examples to evaluate")]
    Empty,
    #[error("example {index}: {predicted} predicted entries vs {gold} gold entries")]
    LengthMismatch {
        index: usize,
        predicted: usize,
        gold: usize,
    },
    #[error("{predictions} predictions for {labels} labels")]
    CountMismatch { predictions: usize, labels: usize },
    #[error("gold rationales select no tokens")]
    NoGoldTokens,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Token-level scores with the counts behind them. `selected == 0` means
/// precision was defined as 0 rather than computed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub selected: usize,
    pub gold: usize,
    pub overlap: usize,
}

impl Prf {
    fn from_counts(selected: usize, gold: usize, overlap: usize) -> Self {
        let precision = if selected == 0 {
            0.0
        } else {
            overlap as f64 / selected as f64
        };
        let recall = if gold == 0 {
            0.0
        } else {
            overlap as f64 / gold as f64
        };
        Self {
            precision,
            recall,
            f1: f1(precision, recall),
            selected,
            gold,
            overlap,
        }
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

/// Micro-averaged precision, recall and F1 of predicted against gold masks.
pub fn token_prf(predicted: &[Vec<u8>], gold: &[Vec<u8>]) -> Result<Prf, MetricError> {
    if predicted.len() != gold.len() {
        return Err(MetricError::CountMismatch {
            predictions: predicted.len(),
            labels: gold.len(),
        });
    }
    let (mut sel, mut gol, mut ovl) = (0usize, 0usize, 0usize);
    for (index, (p, g)) in predicted.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(MetricError::LengthMismatch {
                index,
                predicted: p.len(),
                gold: g.len(),
            });
        }
        for (&a, &b) in p.iter().zip(g) {
            sel += usize::from(a != 0);
            gol += usize::from(b != 0);
            ovl += usize::from(a != 0 && b != 0);
        }
    }
    if gol == 0 {
        return Err(MetricError::NoGoldTokens);
    }
    Ok(Prf::from_counts(sel, gol, ovl))
}

/// Percentage of selected tokens among all (non-padding) tokens.
pub fn sparsity(masks: &[Vec<u8>]) -> Result<f64, MetricError> {
    let total: usize = masks.iter().map(Vec::len).sum();
    if total == 0 {
        return Err(MetricError::Empty);
    }
    let selected: usize = masks.iter().flatten().filter(|&&m| m != 0).count();
    Ok(100.0 * selected as f64 / total as f64)
}

/// Index of the largest score; ties go to the lower index.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in scores.iter().enumerate() {
        if x > scores[best] {
            best = i;
        }
    }
    best
}

/// Fraction of predictions whose argmax equals the label.
pub fn accuracy<P: AsRef<[f64]>>(predictions: &[P], labels: &[usize]) -> Result<f64, MetricError> {
    if predictions.len() != labels.len() {
        return Err(MetricError::CountMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(MetricError::Empty);
    }
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(p, &y)| argmax(p.as_ref()) == y)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Aggregate metrics for one evaluated split. `sparsity` is a fraction here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub sparsity: f64,
    pub accuracy: f64,
    pub full_input_accuracy: Option<f64>,
    pub selected_tokens: usize,
    pub gold_tokens: Option<usize>,
    pub overlap_tokens: Option<usize>,
    pub total_tokens: usize,
    pub correct: usize,
    pub examples: usize,
}

impl MetricsReport {
    /// Builds the report; P/R/F1 are filled when `gold` is given.
    pub fn compute<P: AsRef<[f64]>>(
        masks: &[Vec<u8>],
        gold: Option<&[Vec<u8>]>,
        predictions: &[P],
        labels: &[usize],
    ) -> Result<Self, MetricError> {
        let acc = accuracy(predictions, labels)?;
        let total_tokens: usize = masks.iter().map(Vec::len).sum();
        let selected_tokens = masks.iter().flatten().filter(|&&m| m != 0).count();
        let prf = gold.map(|g| token_prf(masks, g)).transpose()?;
        Ok(Self {
            precision: prf.map(|p| p.precision),
            recall: prf.map(|p| p.recall),
            f1: prf.map(|p| p.f1),
            sparsity: sparsity(masks)? / 100.0,
            accuracy: acc,
            full_input_accuracy: None,
            selected_tokens,
            gold_tokens: prf.map(|p| p.gold),
            overlap_tokens: prf.map(|p| p.overlap),
            total_tokens,
            correct: (acc * labels.len() as f64).round() as usize,
            examples: labels.len(),
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(len: usize, on: &[usize]) -> Vec<u8> {
        (0..len).map(|i| u8::from(on.contains(&i))).collect()
    }

    #[test]
    fn prf_examples() {
        let p = token_prf(&[mask(6, &[3, 4])], &[mask(6, &[2, 3])]).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (0.5, 0.5, 0.5));
        let g = vec![mask(5, &[0, 1])];
        let p = token_prf(&g, &g).unwrap();
        assert_eq!((p.precision, p.recall, p.f1), (1.0, 1.0, 1.0));
        assert!(matches!(
            token_prf(&[mask(3, &[0])], &[mask(3, &[])]),
            Err(MetricError::NoGoldTokens)
        ));
        let p = token_prf(&[mask(3, &[])], &[mask(3, &[1])]).unwrap();
        assert_eq!((p.selected, p.precision, p.f1), (0, 0.0, 0.0));
    }

    #[test]
    fn sparsity_examples() {
        assert_eq!(sparsity(&[vec![1, 1, 1]]).unwrap(), 100.0);
        assert_eq!(sparsity(&[vec![0, 0]]).unwrap(), 0.0);
        assert_eq!(sparsity(&[vec![1, 0, 0, 1]]).unwrap(), 50.0);
    }

    #[test]
    fn accuracy_breaks_ties_low() {
        let preds = vec![vec![0.5, 0.5], vec![0.2, 0.8]];
        assert_eq!(accuracy(&preds, &[0, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&preds, &[1, 1]).unwrap(), 0.5);
        assert!(matches!(
            accuracy::<Vec<f64>>(&[], &[]),
            Err(MetricError::Empty)
        ));
    }
}
