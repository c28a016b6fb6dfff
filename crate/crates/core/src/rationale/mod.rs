//! The explainer/predictor game: models, masks, objectives and training.

mod checkpoint;
mod divergence;
mod model;
mod train;

pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use divergence::{cross_entropy, entropy, js_div, kl_div, ClassDistribution, LOG_FLOOR};
pub use model::{
    gumbel_noise, mask_embeddings, sample_mask, Batch, Explainer, ExplainerVars, MaskVars,
    Predictor, PredictorVars,
};
pub use train::{
    evaluate_split, explain_batch, mcd_phase1, mcd_phase2, mcd_step, metric_log_csv, mmi_gradients,
    mmi_step, predict, skew_pretrain, train, train_from, write_metric_log, EpochRecord, Optimizers,
    Phase1Gradients, Rationalizer, SkewOutcome, SplitEvaluation, StepGradients, StepLosses,
    TrainOutcome,
};

use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Mat, Tape};
use crate::text::Example;

#[derive(Debug, Error)]
pub enum RationaleError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("not a probability distribution: {0:?}")]
    InvalidDistribution(Vec<f64>),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {what} at epoch {epoch}, batch {batch}")]
    Divergence {
        what: String,
        epoch: usize,
        batch: usize,
    },
    #[error("skew pretraining reached accuracy {achieved:.4} < {target} after {epochs} epochs")]
    PretrainFailure {
        target: f64,
        achieved: f64,
        epochs: usize,
    },
    #[error("empty dataset: {0}")]
    EmptyDataset(&'static str),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    #[serde(rename = "mmi")]
    Mmi,
    #[serde(rename = "mcd-kl")]
    McdKl,
    #[serde(rename = "mcd-js")]
    McdJs,
}

impl Objective {
    pub fn is_mcd(self) -> bool {
        !matches!(self, Objective::Mmi)
    }
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Mmi => "mmi",
            Objective::McdKl => "mcd-kl",
            Objective::McdJs => "mcd-js",
        })
    }
}

impl std::str::FromStr for Objective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "mmi" | "rnp" => Ok(Objective::Mmi),
            "mcd-kl" | "mcd" => Ok(Objective::McdKl),
            "mcd-js" => Ok(Objective::McdJs),
            other => Err(format!(
                "unknown objective `{other}` (expected mmi, mcd-kl or mcd-js)"
            )),
        }
    }
}

/// How the predictor summarises its encoder states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Pooling {
    #[default]
    Max,
    /// Last forward state and first backward state.
    Final,
}

/// How masks are drawn from select logits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskMode {
    /// Gumbel sample, hard forward value, relaxed gradient.
    Train,
    /// Deterministic argmax, no gradient.
    Eval,
    /// Gumbel sample with the relaxed value in the forward pass too. Makes
    /// the loss smooth in the explainer parameters for gradient checks.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub objective: Objective,
    /// Weight on the sparsity term.
    pub lambda_sparsity: f64,
    /// Weight on the coherence (transition count) term.
    pub lambda_coherence: f64,
    /// Target fraction of selected tokens.
    pub sparsity: f64,
    /// Multiplier on the divergence in the explainer phase.
    pub divergence_weight: f64,
    pub temperature: f64,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub classes: usize,
    pub pooling: Pooling,
    /// Apply the regularizer gradient to the explainer during the predictor
    /// phase as well.
    pub omega_in_predictor_phase: bool,
    /// Skewed-explainer pretraining threshold; `None` skips pretraining.
    pub skew: Option<f64>,
    pub skew_max_epochs: usize,
    pub skew_learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            objective: Objective::McdKl,
            lambda_sparsity: 1.0,
            lambda_coherence: 0.1,
            sparsity: 0.15,
            divergence_weight: 1.0,
            temperature: 1.0,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 20,
            patience: 5,
            seed: 0,
            embed_dim: 16,
            hidden_dim: 32,
            classes: 2,
            pooling: Pooling::Max,
            omega_in_predictor_phase: true,
            skew: None,
            skew_max_epochs: 10,
            skew_learning_rate: 1e-3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RationaleError> {
        let bad = |m: String| Err(RationaleError::InvalidConfig(m));
        if !(self.lambda_sparsity >= 0.0 && self.lambda_coherence >= 0.0) {
            return bad("regularizer weights must be nonnegative".into());
        }
        if !(self.sparsity > 0.0 && self.sparsity < 1.0) {
            return bad(format!("sparsity {} outside (0, 1)", self.sparsity));
        }
        if !(self.divergence_weight > 0.0) {
            return bad(format!(
                "divergence weight {} must be positive",
                self.divergence_weight
            ));
        }
        if !(self.temperature > 0.0) {
            return bad(format!("temperature {} must be positive", self.temperature));
        }
        if !(self.learning_rate > 0.0) {
            return bad(format!(
                "learning rate {} must be positive",
                self.learning_rate
            ));
        }
        if self.batch_size == 0
            || self.max_epochs == 0
            || self.embed_dim == 0
            || self.hidden_dim == 0
        {
            return bad("batch size, epochs and encoder sizes must be positive".into());
        }
        if self.classes < 2 {
            return bad("need at least two classes".into());
        }
        if let Some(k) = self.skew {
            if !(0.5..1.0).contains(&k) {
                return bad(format!("skew threshold {k} outside [0.5, 1)"));
            }
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self, RationaleError> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| RationaleError::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, RationaleError> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

/// Per-token mask values for one example, padding excluded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RationaleSample {
    pub select_probs: Vec<f64>,
    pub relaxed_mask: Vec<f64>,
    pub hard_mask: Vec<u8>,
}

/// Mask for a single example. Train and relaxed modes draw fresh Gumbel noise
/// from `rng`; eval mode is deterministic.
pub fn explain<R: Rng>(
    e: &Explainer,
    x: &Example,
    tau: f64,
    mode: MaskMode,
    rng: &mut R,
) -> RationaleSample {
    let batch = Batch::new(&[x]);
    let mut tape = Tape::new();
    let vars = e.bind(&mut tape, false);
    let logits = vars.logits(&mut tape, &batch);
    let noise = (mode != MaskMode::Eval).then(|| gumbel_noise(rng, batch.steps));
    let m = sample_mask(&mut tape, logits, &batch, tau, mode, noise.as_ref());
    m.samples(&batch).remove(0)
}

/// Scales each row of `embedded` (one token per row) by its mask value.
pub fn apply_mask(embedded: &Mat, mask: &[f64]) -> Result<Mat, RationaleError> {
    if embedded.rows != mask.len() {
        return Err(RationaleError::Shape(format!(
            "{} tokens but {} mask entries",
            embedded.rows,
            mask.len()
        )));
    }
    let mut out = embedded.clone();
    for (r, &m) in mask.iter().enumerate() {
        out.row_mut(r).iter_mut().for_each(|x| *x *= m);
    }
    Ok(out)
}

/// `λ1·|Σm/l − s| + λ2·Σ_{t≥2}|m_t − m_{t−1}|` over the first `l_valid` entries.
pub fn regularizer(mask: &[f64], l_valid: usize, s: f64, lambda1: f64, lambda2: f64) -> f64 {
    let m = &mask[..l_valid];
    let frac = m.iter().sum::<f64>() / l_valid as f64;
    let coherence: f64 = m.windows(2).map(|w| (w[1] - w[0]).abs()).sum();
    lambda1 * (frac - s).abs() + lambda2 * coherence
}
