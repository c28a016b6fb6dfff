use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::divergence::{argmax, js_on_tape, kl_on_tape};
use super::model::{gumbel_noise, sample_mask, Batch, Explainer, Predictor};
use super::{ClassDistribution, MaskMode, Objective, RationaleError, TrainConfig};
use crate::eval::{sparsity, token_prf, Prf};
use crate::nn::{softmax_rows, Adam, Gradients, Mat, Tape, Var};
use crate::rng::{stream, Stream};
use crate::text::Example;

/// Explainer and predictor trained together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rationalizer {
    pub explainer: Explainer,
    pub predictor: Predictor,
}

impl Rationalizer {
    /// Fresh parameters from the config's init stream.
    pub fn init(cfg: &TrainConfig, vocab_size: usize) -> Self {
        let mut rng = stream(cfg.seed, Stream::Init);
        Self::init_with(&mut rng, cfg, vocab_size)
    }

    pub fn init_with<R: Rng>(rng: &mut R, cfg: &TrainConfig, vocab_size: usize) -> Self {
        let explainer = Explainer::init(rng, vocab_size, cfg.embed_dim, cfg.hidden_dim);
        let predictor = Predictor::init(
            rng,
            vocab_size,
            cfg.embed_dim,
            cfg.hidden_dim,
            cfg.classes,
            cfg.pooling,
        );
        Self {
            explainer,
            predictor,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Optimizers {
    pub explainer: Adam,
    pub predictor: Adam,
}

impl Optimizers {
    pub fn new(lr: f64) -> Self {
        Self {
            explainer: Adam::new(lr),
            predictor: Adam::new(lr),
        }
    }
}

/// Loss values of one update. `prediction` is the cross-entropy on the
/// rationale; `full_prediction` and `divergence` only exist under MCD.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StepLosses {
    pub prediction: f64,
    pub full_prediction: Option<f64>,
    pub divergence: Option<f64>,
    pub omega: f64,
}

impl StepLosses {
    fn is_finite(&self) -> bool {
        self.prediction.is_finite()
            && self.omega.is_finite()
            && self.full_prediction.is_none_or(f64::is_finite)
            && self.divergence.is_none_or(f64::is_finite)
    }
}

/// Total loss and its gradients, in [`Explainer::tensors`] /
/// [`Predictor::tensors`] order. An empty vector means that side is frozen.
#[derive(Debug, Clone)]
pub struct StepGradients {
    pub loss: f64,
    pub losses: StepLosses,
    pub explainer: Vec<Mat>,
    pub predictor: Vec<Mat>,
}

/// Predictor-phase gradients. The predictor sees a detached mask, so the
/// cross-entropy terms reach the explainer not at all; `explainer_from_ce`
/// records what that sweep left on the explainer parameters.
#[derive(Debug, Clone)]
pub struct Phase1Gradients {
    pub losses: StepLosses,
    pub predictor: Vec<Mat>,
    pub explainer_omega: Vec<Mat>,
    pub explainer_from_ce: Vec<Option<Mat>>,
}

fn collect(grads: &Gradients, tape: &Tape, vars: &[Var]) -> Vec<Mat> {
    vars.iter()
        .map(|&v| {
            let (r, c) = tape.value(v).shape();
            grads.get_or_zeros(v, r, c)
        })
        .collect()
}

fn divergence_error(what: &str) -> RationaleError {
    RationaleError::Divergence {
        what: what.into(),
        epoch: 0,
        batch: 0,
    }
}

fn check_grads(g: &[Mat], what: &str) -> Result<(), RationaleError> {
    if g.iter().all(Mat::is_finite) {
        Ok(())
    } else {
        Err(divergence_error(what))
    }
}

/// Joint cross-entropy on the rationale plus the regularizer.
pub fn mmi_gradients(
    model: &Rationalizer,
    batch: &Batch,
    cfg: &TrainConfig,
    mode: MaskMode,
    noise: &Mat,
) -> StepGradients {
    let mut tape = Tape::new();
    let ev = model.explainer.bind(&mut tape, true);
    let pv = model.predictor.bind(&mut tape, true);
    let logits = ev.logits(&mut tape, batch);
    let m = sample_mask(&mut tape, logits, batch, cfg.temperature, mode, Some(noise));
    let by_ex = m.by_example(&mut tape, batch);
    let omega = tape.regularizer(
        by_ex,
        &batch.lengths,
        cfg.sparsity,
        cfg.lambda_sparsity,
        cfg.lambda_coherence,
    );
    let y = pv.logits(&mut tape, batch, Some(m.mask));
    let ce = tape.cross_entropy(y, &batch.labels);
    let total = tape.add(ce, omega);
    let grads = tape.backward(total);
    StepGradients {
        loss: tape.value(total).item(),
        losses: StepLosses {
            prediction: tape.value(ce).item(),
            omega: tape.value(omega).item(),
            ..StepLosses::default()
        },
        explainer: collect(&grads, &tape, &ev.vars()),
        predictor: collect(&grads, &tape, &pv.vars()),
    }
}

/// Predictor phase: cross-entropy on the detached rationale and on the full
/// input for the predictor, regularizer gradient for the explainer.
pub fn mcd_phase1(
    model: &Rationalizer,
    batch: &Batch,
    cfg: &TrainConfig,
    mode: MaskMode,
    noise: &Mat,
) -> Phase1Gradients {
    let mut tape = Tape::new();
    let ev = model.explainer.bind(&mut tape, true);
    let pv = model.predictor.bind(&mut tape, true);
    let logits = ev.logits(&mut tape, batch);
    let m = sample_mask(&mut tape, logits, batch, cfg.temperature, mode, Some(noise));
    let by_ex = m.by_example(&mut tape, batch);
    let omega = tape.regularizer(
        by_ex,
        &batch.lengths,
        cfg.sparsity,
        cfg.lambda_sparsity,
        cfg.lambda_coherence,
    );
    let detached = tape.detach(m.mask);
    let yz = pv.logits(&mut tape, batch, Some(detached));
    let ce_z = tape.cross_entropy(yz, &batch.labels);
    let yx = pv.logits(&mut tape, batch, None);
    let ce_x = tape.cross_entropy(yx, &batch.labels);
    let ce = tape.add(ce_z, ce_x);

    let from_ce = tape.backward(ce);
    let from_omega = tape.backward(omega);
    let evars = ev.vars();
    Phase1Gradients {
        losses: StepLosses {
            prediction: tape.value(ce_z).item(),
            full_prediction: Some(tape.value(ce_x).item()),
            divergence: None,
            omega: tape.value(omega).item(),
        },
        predictor: collect(&from_ce, &tape, &pv.vars()),
        explainer_omega: collect(&from_omega, &tape, &evars),
        explainer_from_ce: evars.iter().map(|&v| from_ce.get(v).cloned()).collect(),
    }
}

/// Explainer phase: the predictor is frozen and the explainer minimises the
/// divergence from `P(Ŷ | X)` to `P(Ŷ | X_Z)` plus the regularizer.
pub fn mcd_phase2(
    model: &Rationalizer,
    batch: &Batch,
    cfg: &TrainConfig,
    mode: MaskMode,
    noise: &Mat,
) -> StepGradients {
    let mut tape = Tape::new();
    let ev = model.explainer.bind(&mut tape, true);
    let pv = model.predictor.bind(&mut tape, false);
    let yx = pv.logits(&mut tape, batch, None);
    let px = tape.softmax(yx);
    let logits = ev.logits(&mut tape, batch);
    let m = sample_mask(&mut tape, logits, batch, cfg.temperature, mode, Some(noise));
    let by_ex = m.by_example(&mut tape, batch);
    let omega = tape.regularizer(
        by_ex,
        &batch.lengths,
        cfg.sparsity,
        cfg.lambda_sparsity,
        cfg.lambda_coherence,
    );
    let yz = pv.logits(&mut tape, batch, Some(m.mask));
    let pz = tape.softmax(yz);
    let div = match cfg.objective {
        Objective::McdJs => js_on_tape(&mut tape, px, pz),
        _ => kl_on_tape(&mut tape, px, pz),
    };
    let ce = {
        let labels = &batch.labels;
        let p = tape.value(pz);
        labels
            .iter()
            .enumerate()
            .map(|(r, &y)| -p.get(r, y).max(super::LOG_FLOOR).ln())
            .sum::<f64>()
            / labels.len() as f64
    };
    let weighted = tape.scale(div, cfg.divergence_weight);
    let total = tape.add(weighted, omega);
    let grads = tape.backward(total);
    StepGradients {
        loss: tape.value(total).item(),
        losses: StepLosses {
            prediction: ce,
            full_prediction: None,
            divergence: Some(tape.value(div).item()),
            omega: tape.value(omega).item(),
        },
        explainer: collect(&grads, &tape, &ev.vars()),
        predictor: Vec::new(),
    }
}

/// One cooperative update of both players.
pub fn mmi_step<R: Rng>(
    model: &mut Rationalizer,
    opt: &mut Optimizers,
    batch: &Batch,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<StepLosses, RationaleError> {
    let noise = gumbel_noise(rng, batch.steps * batch.size);
    let g = mmi_gradients(model, batch, cfg, MaskMode::Train, &noise);
    if !g.losses.is_finite() {
        return Err(divergence_error("loss"));
    }
    check_grads(&g.explainer, "explainer gradient")?;
    check_grads(&g.predictor, "predictor gradient")?;
    opt.explainer
        .step(&mut model.explainer.tensors_mut(), &g.explainer);
    opt.predictor
        .step(&mut model.predictor.tensors_mut(), &g.predictor);
    Ok(g.losses)
}

/// Predictor phase followed by explainer phase, each on its own mask draw.
pub fn mcd_step<R: Rng>(
    model: &mut Rationalizer,
    opt: &mut Optimizers,
    batch: &Batch,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<StepLosses, RationaleError> {
    let rows = batch.steps * batch.size;
    let noise = gumbel_noise(rng, rows);
    let p1 = mcd_phase1(model, batch, cfg, MaskMode::Train, &noise);
    if !p1.losses.is_finite() {
        return Err(divergence_error("predictor-phase loss"));
    }
    check_grads(&p1.predictor, "predictor gradient")?;
    check_grads(&p1.explainer_omega, "explainer gradient")?;
    opt.predictor
        .step(&mut model.predictor.tensors_mut(), &p1.predictor);
    if cfg.omega_in_predictor_phase {
        opt.explainer
            .step(&mut model.explainer.tensors_mut(), &p1.explainer_omega);
    }

    let noise = gumbel_noise(rng, rows);
    let p2 = mcd_phase2(model, batch, cfg, MaskMode::Train, &noise);
    if !p2.losses.is_finite() {
        return Err(divergence_error("explainer-phase loss"));
    }
    check_grads(&p2.explainer, "explainer gradient")?;
    opt.explainer
        .step(&mut model.explainer.tensors_mut(), &p2.explainer);
    Ok(StepLosses {
        prediction: p1.losses.prediction,
        full_prediction: p1.losses.full_prediction,
        divergence: p2.losses.divergence,
        omega: p2.losses.omega,
    })
}

/// Deterministic masks for a batch, one per example.
pub fn explain_batch(e: &Explainer, batch: &Batch) -> Vec<Vec<u8>> {
    let mut tape = Tape::new();
    let ev = e.bind(&mut tape, false);
    let logits = ev.logits(&mut tape, batch);
    let m = sample_mask(&mut tape, logits, batch, 1.0, MaskMode::Eval, None);
    batch
        .unstack(&m.hard)
        .into_iter()
        .map(|r| r.into_iter().map(|v| v as u8).collect())
        .collect()
}

/// Class distributions for a batch, from the rationale (`masks`) or, when
/// `masks` is `None`, from the full input.
pub fn predict(p: &Predictor, batch: &Batch, masks: Option<&[Vec<u8>]>) -> Vec<ClassDistribution> {
    let mut tape = Tape::new();
    let pv = p.bind(&mut tape, false);
    let mask = masks.map(|ms| {
        let mut col = Mat::zeros(batch.steps * batch.size, 1);
        for (b, m) in ms.iter().enumerate() {
            for (t, &v) in m.iter().enumerate() {
                col.data[t * batch.size + b] = f64::from(v);
            }
        }
        tape.constant(col)
    });
    let y = pv.logits(&mut tape, batch, mask);
    let probs = softmax_rows(tape.value(y));
    (0..probs.rows)
        .map(|r| ClassDistribution::from_softmax(probs.row(r).to_vec()))
        .collect()
}

/// Everything measured on one split with deterministic masks.
#[derive(Debug, Clone)]
pub struct SplitEvaluation {
    pub masks: Vec<Vec<u8>>,
    pub rationale_probs: Vec<ClassDistribution>,
    /// Accuracy of the predictor on the rationale.
    pub accuracy: f64,
    /// Accuracy of the predictor on the full input.
    pub full_accuracy: f64,
    pub prf: Option<Prf>,
    /// Percentage of selected tokens.
    pub sparsity: f64,
}

pub fn evaluate_split(
    model: &Rationalizer,
    data: &[Example],
    batch_size: usize,
) -> SplitEvaluation {
    let mut masks = Vec::with_capacity(data.len());
    let mut probs = Vec::with_capacity(data.len());
    let mut full_correct = 0usize;
    for chunk in data.chunks(batch_size.max(1)) {
        let batch = Batch::from_slice(chunk);
        let m = explain_batch(&model.explainer, &batch);
        let pz = predict(&model.predictor, &batch, Some(&m));
        let px = predict(&model.predictor, &batch, None);
        full_correct += px
            .iter()
            .zip(chunk)
            .filter(|(p, e)| p.argmax() == e.label)
            .count();
        masks.extend(m);
        probs.extend(pz);
    }
    let correct = probs
        .iter()
        .zip(data)
        .filter(|(p, e)| p.argmax() == e.label)
        .count();
    let n = data.len().max(1) as f64;
    let gold: Option<Vec<Vec<u8>>> = data.iter().map(|e| e.gold.clone()).collect();
    let prf = gold.and_then(|g| token_prf(&masks, &g).ok());
    SplitEvaluation {
        sparsity: sparsity(&masks).unwrap_or(0.0),
        masks,
        rationale_probs: probs,
        accuracy: correct as f64 / n,
        full_accuracy: full_correct as f64 / n,
        prf,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SkewOutcome {
    /// First-token label accuracy on the pretraining data.
    pub pre_acc: f64,
    pub epochs: usize,
}

fn first_token_accuracy(e: &Explainer, data: &[Example], batch_size: usize) -> f64 {
    let mut correct = 0usize;
    for chunk in data.chunks(batch_size.max(1)) {
        let batch = Batch::from_slice(chunk);
        let mut tape = Tape::new();
        let ev = e.bind(&mut tape, false);
        let logits = ev.logits(&mut tape, &batch);
        let lm = tape.value(logits);
        correct += (0..batch.size)
            .filter(|&b| argmax(lm.row(b)) == batch.labels[b])
            .count();
    }
    correct as f64 / data.len() as f64
}

/// Trains the explainer to select the first token exactly for label-1
/// examples, whole epochs at a time, until first-token accuracy exceeds `k`.
pub fn skew_pretrain<R: Rng>(
    e: &mut Explainer,
    data: &[Example],
    k: f64,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<SkewOutcome, RationaleError> {
    if data.is_empty() {
        return Err(RationaleError::EmptyDataset("skew pretraining set"));
    }
    let mut opt = Adam::new(cfg.skew_learning_rate);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut acc = 0.0;
    for epoch in 1..=cfg.skew_max_epochs {
        order.shuffle(rng);
        for chunk in order.chunks(cfg.batch_size) {
            let refs: Vec<&Example> = chunk.iter().map(|&i| &data[i]).collect();
            let batch = Batch::new(&refs);
            let mut tape = Tape::new();
            let ev = e.bind(&mut tape, true);
            let logits = ev.logits(&mut tape, &batch);
            let first = tape.slice_rows(logits, 0, batch.size);
            let ce = tape.cross_entropy(first, &batch.labels);
            let grads = tape.backward(ce);
            let g = collect(&grads, &tape, &ev.vars());
            if !tape.value(ce).item().is_finite() {
                return Err(RationaleError::Divergence {
                    what: "skew pretraining loss".into(),
                    epoch,
                    batch: 0,
                });
            }
            opt.step(&mut e.tensors_mut(), &g);
        }
        acc = first_token_accuracy(e, data, cfg.batch_size);
        if acc > k {
            return Ok(SkewOutcome {
                pre_acc: acc,
                epochs: epoch,
            });
        }
    }
    Err(RationaleError::PretrainFailure {
        target: k,
        achieved: acc,
        epochs: cfg.skew_max_epochs,
    })
}

/// One row of the per-epoch metric log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub prediction_loss: f64,
    pub full_loss: Option<f64>,
    pub divergence_loss: Option<f64>,
    pub omega: f64,
    pub dev_accuracy: f64,
    pub dev_precision: Option<f64>,
    pub dev_recall: Option<f64>,
    pub dev_f1: Option<f64>,
    pub dev_sparsity: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the best dev accuracy.
    pub model: Rationalizer,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
    pub skew: Option<SkewOutcome>,
}

/// Full training run: optional skew pretraining, then epochs of shuffled
/// batches with early stopping on dev accuracy.
pub fn train(
    cfg: &TrainConfig,
    train_set: &[Example],
    dev_set: &[Example],
    vocab_size: usize,
) -> Result<TrainOutcome, RationaleError> {
    train_from(cfg, Rationalizer::init(cfg, vocab_size), train_set, dev_set)
}

/// [`train`] starting from given parameters, e.g. with pretrained embeddings
/// copied in.
pub fn train_from(
    cfg: &TrainConfig,
    mut model: Rationalizer,
    train_set: &[Example],
    dev_set: &[Example],
) -> Result<TrainOutcome, RationaleError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(RationaleError::EmptyDataset("training set"));
    }
    if dev_set.is_empty() {
        return Err(RationaleError::EmptyDataset("dev set"));
    }
    let skew = match cfg.skew {
        Some(k) => Some(skew_pretrain(
            &mut model.explainer,
            train_set,
            k,
            cfg,
            &mut stream(cfg.seed, Stream::Skew),
        )?),
        None => None,
    };
    let mut opt = Optimizers::new(cfg.learning_rate);
    let mut data_rng = stream(cfg.seed, Stream::Data);
    let mut noise_rng = stream(cfg.seed, Stream::Gumbel);
    let mut order: Vec<usize> = (0..train_set.len()).collect();

    let mut log = Vec::new();
    let mut best: Option<(f64, usize, Rationalizer)> = None;
    let mut stale = 0usize;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut data_rng);
        let mut sums = [0.0f64; 4];
        let mut batches = 0usize;
        for (bi, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let refs: Vec<&Example> = chunk.iter().map(|&i| &train_set[i]).collect();
            let batch = Batch::new(&refs);
            let step = if cfg.objective.is_mcd() {
                mcd_step(&mut model, &mut opt, &batch, cfg, &mut noise_rng)
            } else {
                mmi_step(&mut model, &mut opt, &batch, cfg, &mut noise_rng)
            };
            let l = step.map_err(|e| match e {
                RationaleError::Divergence { what, .. } => RationaleError::Divergence {
                    what,
                    epoch,
                    batch: bi,
                },
                other => other,
            })?;
            sums[0] += l.prediction;
            sums[1] += l.full_prediction.unwrap_or(0.0);
            sums[2] += l.divergence.unwrap_or(0.0);
            sums[3] += l.omega;
            batches += 1;
        }
        let nb = batches as f64;
        let eval = evaluate_split(&model, dev_set, cfg.batch_size.max(256));
        let mcd = cfg.objective.is_mcd();
        log.push(EpochRecord {
            epoch,
            prediction_loss: sums[0] / nb,
            full_loss: mcd.then_some(sums[1] / nb),
            divergence_loss: mcd.then_some(sums[2] / nb),
            omega: sums[3] / nb,
            dev_accuracy: eval.accuracy,
            dev_precision: eval.prf.map(|p| p.precision),
            dev_recall: eval.prf.map(|p| p.recall),
            dev_f1: eval.prf.map(|p| p.f1),
            dev_sparsity: eval.sparsity,
        });
        if best.as_ref().is_none_or(|(acc, _, _)| eval.accuracy > *acc) {
            best = Some((eval.accuracy, epoch, model.clone()));
            stale = 0;
        } else {
            stale += 1;
        }
        if stale >= cfg.patience {
            break;
        }
    }
    let (_, best_epoch, model) = best.expect("at least one epoch runs");
    Ok(TrainOutcome {
        model,
        best_epoch,
        log,
        skew,
    })
}

fn opt_cell(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// CSV rendering of the metric log.
pub fn metric_log_csv(log: &[EpochRecord]) -> String {
    let mut s = String::from(
        "epoch,prediction_loss,full_loss,divergence_loss,omega,dev_accuracy,dev_precision,dev_recall,dev_f1,dev_sparsity\n",
    );
    for r in log {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.epoch,
            r.prediction_loss,
            opt_cell(r.full_loss),
            opt_cell(r.divergence_loss),
            r.omega,
            r.dev_accuracy,
            opt_cell(r.dev_precision),
            opt_cell(r.dev_recall),
            opt_cell(r.dev_f1),
            r.dev_sparsity
        );
    }
    s
}

pub fn write_metric_log(path: &Path, log: &[EpochRecord]) -> Result<(), RationaleError> {
    std::fs::write(path, metric_log_csv(log))?;
    Ok(())
}
