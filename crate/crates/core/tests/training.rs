use mcd_core::nn::Mat;
use mcd_core::rationale::{
    apply_mask, evaluate_split, explain, metric_log_csv, regularizer, skew_pretrain, train,
    Checkpoint, MaskMode, Objective, RationaleError, Rationalizer, TrainConfig, CHECKPOINT_VERSION,
};
use mcd_core::scm::{generate_splits, CorpusSpec};
use mcd_core::text::{Example, Vocabulary};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

struct Data {
    vocab: Vocabulary,
    train: Vec<Example>,
    dev: Vec<Example>,
    test: Vec<Example>,
}

fn small_corpus(n: usize, seed: u64) -> Data {
    let spec = CorpusSpec {
        n_examples: n,
        noise_token_count: 6,
        seed,
        ..CorpusSpec::default()
    };
    let s = generate_splits(&spec, (0.7, 0.15)).unwrap();
    let vocab = Vocabulary::from_records(s.train.iter());
    Data {
        train: vocab.encode_all(&s.train),
        dev: vocab.encode_all(&s.dev),
        test: vocab.encode_all(&s.test),
        vocab,
    }
}

fn small_config(objective: Objective) -> TrainConfig {
    TrainConfig {
        objective,
        embed_dim: 8,
        hidden_dim: 8,
        learning_rate: 5e-3,
        batch_size: 32,
        max_epochs: 4,
        patience: 4,
        sparsity: 0.3,
        ..TrainConfig::default()
    }
}

#[test]
fn patience_zero_runs_one_epoch() {
    let d = small_corpus(300, 1);
    for objective in [Objective::Mmi, Objective::McdKl] {
        let cfg = TrainConfig {
            patience: 0,
            ..small_config(objective)
        };
        let out = train(&cfg, &d.train, &d.dev, d.vocab.len()).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.best_epoch, 1);
    }
}

#[test]
fn early_stopping_keeps_the_best_dev_epoch() {
    let d = small_corpus(400, 2);
    let cfg = TrainConfig {
        max_epochs: 8,
        patience: 2,
        ..small_config(Objective::Mmi)
    };
    let out = train(&cfg, &d.train, &d.dev, d.vocab.len()).unwrap();
    let best = out
        .log
        .iter()
        .map(|r| r.dev_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    let first_best = out
        .log
        .iter()
        .find(|r| r.dev_accuracy == best)
        .unwrap()
        .epoch;
    assert_eq!(out.best_epoch, first_best);
    assert!(out.log.len() <= out.best_epoch + 2);
    assert!(out.log.len() == 8 || out.log.len() == out.best_epoch + 2);
    let eval = evaluate_split(&out.model, &d.dev, 64);
    assert_eq!(eval.accuracy, best);
}

#[test]
fn untrained_model_is_near_chance() {
    let d = small_corpus(2000, 3);
    let cfg = small_config(Objective::Mmi);
    let model = Rationalizer::init(&cfg, d.vocab.len());
    let eval = evaluate_split(&model, &d.test, 128);
    assert!(
        (eval.accuracy - 0.5).abs() < 0.1,
        "untrained accuracy {}",
        eval.accuracy
    );
}

#[test]
fn training_learns_the_task() {
    let d = small_corpus(1500, 4);
    for objective in [Objective::Mmi, Objective::McdKl] {
        let cfg = TrainConfig {
            max_epochs: 6,
            ..small_config(objective)
        };
        let out = train(&cfg, &d.train, &d.dev, d.vocab.len()).unwrap();
        let eval = evaluate_split(&out.model, &d.test, 128);
        assert!(
            eval.accuracy > 0.7,
            "{objective}: test accuracy {}",
            eval.accuracy
        );
        assert!(out.log.iter().all(|r| r.prediction_loss.is_finite()));
        assert_eq!(out.log[0].full_loss.is_some(), objective.is_mcd());
    }
}

#[test]
fn identical_seeds_give_identical_logs() {
    let d = small_corpus(300, 5);
    let cfg = TrainConfig {
        max_epochs: 2,
        ..small_config(Objective::McdJs)
    };
    let a = train(&cfg, &d.train, &d.dev, d.vocab.len()).unwrap();
    let b = train(&cfg, &d.train, &d.dev, d.vocab.len()).unwrap();
    assert_eq!(metric_log_csv(&a.log), metric_log_csv(&b.log));
    assert_eq!(a.model, b.model);
    let c = train(
        &TrainConfig { seed: 1, ..cfg },
        &d.train,
        &d.dev,
        d.vocab.len(),
    )
    .unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn skew_pretraining_plants_the_label_in_the_first_position() {
    let d = small_corpus(600, 6);
    let cfg = TrainConfig {
        skew_learning_rate: 1e-2,
        skew_max_epochs: 20,
        ..small_config(Objective::Mmi)
    };
    let mut model = Rationalizer::init(&cfg, d.vocab.len());
    let out = skew_pretrain(
        &mut model.explainer,
        &d.train,
        0.75,
        &cfg,
        &mut ChaCha8Rng::seed_from_u64(0),
    )
    .unwrap();
    assert!(out.pre_acc > 0.75);
    assert!(out.epochs >= 1 && out.epochs <= 20);
    // the planted position agrees with the label on held-out data too
    let eval = evaluate_split(&model, &d.test, 128);
    let agree = eval
        .masks
        .iter()
        .zip(&d.test)
        .filter(|(m, x)| usize::from(m[0]) == x.label)
        .count();
    assert!(agree as f64 / d.test.len() as f64 > 0.7);
}

#[test]
fn unreachable_skew_target_is_an_error() {
    let d = small_corpus(200, 7);
    let cfg = TrainConfig {
        skew: Some(0.999),
        skew_max_epochs: 1,
        ..small_config(Objective::Mmi)
    };
    let err = train(&cfg, &d.train, &d.dev, d.vocab.len()).unwrap_err();
    assert!(
        matches!(err, RationaleError::PretrainFailure { epochs: 1, .. }),
        "{err}"
    );
}

#[test]
fn checkpoint_round_trip() {
    let d = small_corpus(200, 8);
    let cfg = TrainConfig {
        max_epochs: 1,
        ..small_config(Objective::McdKl)
    };
    let out = train(&cfg, &d.train, &d.dev, d.vocab.len()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.json");
    Checkpoint::new(
        cfg.clone(),
        d.vocab.clone(),
        out.model.clone(),
        out.best_epoch,
    )
    .save(&path)
    .unwrap();
    let back = Checkpoint::load(&path).unwrap();
    assert_eq!(back.model, out.model);
    assert_eq!(back.config, cfg);
    assert_eq!(back.vocab.id("filler_0"), d.vocab.id("filler_0"));
    let a = evaluate_split(&out.model, &d.test, 64);
    let b = evaluate_split(&back.model, &d.test, 64);
    assert_eq!(a.masks, b.masks);
    assert_eq!(a.accuracy, b.accuracy);

    let text = std::fs::read_to_string(&path).unwrap().replacen(
        &format!("\"version\":{CHECKPOINT_VERSION}"),
        "\"version\":999",
        1,
    );
    std::fs::write(&path, text).unwrap();
    assert!(matches!(
        Checkpoint::load(&path),
        Err(RationaleError::Checkpoint { .. })
    ));
}

#[test]
fn config_validation_and_toml() {
    let cfg = small_config(Objective::McdJs);
    assert_eq!(TrainConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    for bad in [
        TrainConfig {
            sparsity: 0.0,
            ..cfg.clone()
        },
        TrainConfig {
            temperature: 0.0,
            ..cfg.clone()
        },
        TrainConfig {
            divergence_weight: 0.0,
            ..cfg.clone()
        },
        TrainConfig {
            batch_size: 0,
            ..cfg.clone()
        },
    ] {
        assert!(matches!(
            bad.validate(),
            Err(RationaleError::InvalidConfig(_))
        ));
    }
    assert!(TrainConfig::from_toml("objective = \"mmi\"\nsparsity = 0.2\n").is_ok());
    assert!(TrainConfig::from_toml("objective = \"rnp2\"\n").is_err());
    let d = small_corpus(100, 9);
    assert!(matches!(
        train(&cfg, &[], &d.dev, d.vocab.len()),
        Err(RationaleError::EmptyDataset(_))
    ));
}

#[test]
fn eval_masks_are_deterministic_and_padding_free() {
    let d = small_corpus(100, 10);
    let cfg = small_config(Objective::Mmi);
    let model = Rationalizer::init(&cfg, d.vocab.len());
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let a = explain(&model.explainer, &d.test[0], 1.0, MaskMode::Eval, &mut rng);
    let b = explain(&model.explainer, &d.test[0], 1.0, MaskMode::Eval, &mut rng);
    assert_eq!(a, b);
    assert_eq!(a.hard_mask.len(), d.test[0].len());
    for (p, &h) in a.select_probs.iter().zip(&a.hard_mask) {
        assert_eq!(h == 1, *p >= 0.5);
    }
    let t = explain(&model.explainer, &d.test[0], 0.5, MaskMode::Train, &mut rng);
    assert!(t.relaxed_mask.iter().all(|&m| (0.0..=1.0).contains(&m)));
    assert!(t.hard_mask.iter().all(|&m| m <= 1));
}

#[test]
fn mask_and_regularizer_by_hand() {
    let emb = Mat::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    let out = apply_mask(&emb, &[1.0, 0.0, 0.5]).unwrap();
    assert_eq!(out.data, vec![1.0, 2.0, 0.0, 0.0, 2.5, 3.0]);
    assert!(apply_mask(&emb, &[1.0]).is_err());
    // |2/4 − 0.25| + 0.5·(1 + 0 + 1)
    let r = regularizer(&[1.0, 0.0, 0.0, 1.0, 1.0], 4, 0.25, 1.0, 0.5);
    assert!((r - 1.25).abs() < 1e-15);
}
