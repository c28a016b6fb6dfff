//! Synthetic runs shared by the acceptance harness.

use mcd_core::rationale::{evaluate_split, metric_log_csv, train, Objective, TrainConfig};
use mcd_core::scm::{generate_splits, CorpusSpec, MarkerMode, PoolEntry, CAUSE, NOISE, SPURIOUS};
use mcd_core::text::Vocabulary;

pub const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
pub const PROBE: &str = "<probe>";

/// Ten thousand examples at confounder strength 0.9. The spurious pools are
/// small and the cause pools large, so spurious tokens are seen far more
/// often per type than cause tokens.
pub fn corpus(seed: u64, probe: bool) -> CorpusSpec {
    let pool = |var: &str, value: i64, prefix: &str, n: usize| PoolEntry {
        variable: var.to_string(),
        value,
        tokens: (0..n).map(|i| format!("{prefix}{i}")).collect(),
    };
    CorpusSpec {
        n_examples: 10_000,
        correlation_strength: 0.9,
        label_noise: 0.1,
        pools: vec![
            pool(CAUSE, 1, "smell_good_", 1000),
            pool(CAUSE, 0, "smell_bad_", 1000),
            pool(SPURIOUS, 1, "taste_good_", 3),
            pool(SPURIOUS, 0, "taste_bad_", 3),
            pool(NOISE, 0, "filler_", 40),
        ],
        cause_span_len: 3,
        spurious_span_len: 3,
        noise_token_count: 14,
        spurious_marker: probe.then(|| PROBE.to_string()),
        marker_mode: MarkerMode::Every,
        seed,
    }
}

pub fn config(objective: Objective, seed: u64) -> TrainConfig {
    TrainConfig {
        objective,
        divergence_weight: match objective {
            Objective::Mmi => 1.0,
            Objective::McdKl => 4.0,
            Objective::McdJs => 16.0,
        },
        sparsity: 0.15,
        lambda_sparsity: 1.0,
        lambda_coherence: 0.1,
        learning_rate: 3e-3,
        batch_size: 64,
        max_epochs: 12,
        patience: 4,
        embed_dim: 16,
        hidden_dim: 16,
        seed,
        ..TrainConfig::default()
    }
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub f1: f64,
    pub test_accuracy: f64,
    pub dev_accuracy: f64,
    /// Percent of test tokens selected.
    pub sparsity: f64,
    pub pre_acc: Option<f64>,
    pub log_csv: String,
}

pub fn run(spec: &CorpusSpec, cfg: &TrainConfig) -> RunResult {
    let splits = generate_splits(spec, (0.8, 0.1)).expect("valid corpus");
    let vocab = Vocabulary::from_records(splits.train.iter());
    let (tr, dv, te) = (
        vocab.encode_all(&splits.train),
        vocab.encode_all(&splits.dev),
        vocab.encode_all(&splits.test),
    );
    let out = train(cfg, &tr, &dv, vocab.len()).expect("training succeeds");
    let eval = evaluate_split(&out.model, &te, 256);
    let best = &out.log[out.best_epoch - 1];
    RunResult {
        f1: eval.prf.expect("synthetic data has gold").f1,
        test_accuracy: eval.accuracy,
        dev_accuracy: best.dev_accuracy,
        sparsity: eval.sparsity,
        pre_acc: out.skew.map(|s| s.pre_acc),
        log_csv: metric_log_csv(&out.log),
    }
}

pub fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.into_iter().collect();
    v.iter().sum::<f64>() / v.len() as f64
}
