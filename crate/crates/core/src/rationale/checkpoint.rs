use std::path::Path;

use serde::{Deserialize, Serialize};

use super::train::{Rationalizer, SkewOutcome};
use super::{RationaleError, TrainConfig};
use crate::text::Vocabulary;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained parameters plus everything needed to reuse them: the config that
/// produced them and the vocabulary they index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: TrainConfig,
    pub vocab: Vocabulary,
    pub model: Rationalizer,
    pub best_epoch: usize,
    pub skew: Option<SkewOutcome>,
}

impl Checkpoint {
    pub fn new(
        config: TrainConfig,
        vocab: Vocabulary,
        model: Rationalizer,
        best_epoch: usize,
    ) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            config,
            vocab,
            model,
            best_epoch,
            skew: None,
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), RationaleError> {
        let text = serde_json::to_string(self).map_err(|e| RationaleError::Checkpoint {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RationaleError> {
        let err = |message: String| RationaleError::Checkpoint {
            path: path.display().to_string(),
            message,
        };
        let text = std::fs::read_to_string(path)?;
        let mut ck: Self = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(err(format!(
                "version {} (this build reads {CHECKPOINT_VERSION})",
                ck.version
            )));
        }
        ck.vocab.reindex();
        Ok(ck)
    }
}
