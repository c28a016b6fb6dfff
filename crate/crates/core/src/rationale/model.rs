use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{MaskMode, Pooling, RationaleSample};
use crate::nn::{softmax_rows, uniform, GruParams, GruVars, Mat, Tape, Var};
use crate::text::{Example, PAD_ID};

/// A padded, time-major batch: token `(t, b)` lives at row `t·B + b`.
#[derive(Debug, Clone)]
pub struct Batch {
    pub ids: Vec<usize>,
    /// `keep[t][b]` is false on padding.
    pub keep: Vec<Vec<bool>>,
    pub lengths: Vec<usize>,
    pub labels: Vec<usize>,
    pub gold: Vec<Option<Vec<u8>>>,
    pub steps: usize,
    pub size: usize,
}

impl Batch {
    /// Pads to the longest example. Every example must be nonempty.
    pub fn new(examples: &[&Example]) -> Self {
        assert!(
            examples.iter().all(|e| !e.is_empty()),
            "empty example in batch"
        );
        let size = examples.len();
        let steps = examples.iter().map(|e| e.len()).max().unwrap_or(0);
        let mut ids = vec![PAD_ID; steps * size];
        let mut keep = vec![vec![false; size]; steps];
        for (b, e) in examples.iter().enumerate() {
            for (t, &id) in e.ids.iter().enumerate() {
                ids[t * size + b] = id;
                keep[t][b] = true;
            }
        }
        Self {
            ids,
            keep,
            lengths: examples.iter().map(|e| e.len()).collect(),
            labels: examples.iter().map(|e| e.label).collect(),
            gold: examples.iter().map(|e| e.gold.clone()).collect(),
            steps,
            size,
        }
    }

    pub fn from_slice(examples: &[Example]) -> Self {
        Self::new(&examples.iter().collect::<Vec<_>>())
    }

    /// `(T·B) × 1` indicator of non-padding positions.
    pub(crate) fn validity(&self) -> Mat {
        let mut m = Mat::zeros(self.steps * self.size, 1);
        for t in 0..self.steps {
            for b in 0..self.size {
                if self.keep[t][b] {
                    m.data[t * self.size + b] = 1.0;
                }
            }
        }
        m
    }

    /// Per-example rows of a time-major `(T·B) × 1` column, cut to length.
    pub(crate) fn unstack(&self, col: &Mat) -> Vec<Vec<f64>> {
        (0..self.size)
            .map(|b| {
                (0..self.lengths[b])
                    .map(|t| col.data[t * self.size + b])
                    .collect()
            })
            .collect()
    }
}

fn linear<R: Rng>(rng: &mut R, fan_in: usize, rows: usize, cols: usize) -> Mat {
    uniform(rng, rows, cols, 1.0 / (fan_in as f64).sqrt())
}

/// Bidirectional encoder with a per-token select/not-select head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Explainer {
    pub embedding: Mat,
    pub forward: GruParams,
    pub backward: GruParams,
    /// `h × 2` head weights for the forward and backward states.
    pub head_f: Mat,
    pub head_b: Mat,
    pub head_bias: Mat,
}

/// Bidirectional encoder, pooling over time, linear class head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Predictor {
    pub embedding: Mat,
    pub forward: GruParams,
    pub backward: GruParams,
    pub head_f: Mat,
    pub head_b: Mat,
    pub head_bias: Mat,
    pub pooling: Pooling,
}

fn init_embedding<R: Rng>(rng: &mut R, vocab: usize, dim: usize) -> Mat {
    let mut m = uniform(rng, vocab, dim, 1.0);
    m.row_mut(PAD_ID).fill(0.0);
    m
}

impl Explainer {
    pub fn init<R: Rng>(rng: &mut R, vocab: usize, embed: usize, hidden: usize) -> Self {
        Self {
            embedding: init_embedding(rng, vocab, embed),
            forward: GruParams::init(rng, embed, hidden),
            backward: GruParams::init(rng, embed, hidden),
            head_f: linear(rng, 2 * hidden, hidden, 2),
            head_b: linear(rng, 2 * hidden, hidden, 2),
            head_bias: linear(rng, 2 * hidden, 1, 2),
        }
    }

    pub fn tensors(&self) -> Vec<&Mat> {
        let mut v = vec![&self.embedding];
        v.extend(self.forward.tensors());
        v.extend(self.backward.tensors());
        v.extend([&self.head_f, &self.head_b, &self.head_bias]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut v = vec![&mut self.embedding];
        v.extend(self.forward.tensors_mut());
        v.extend(self.backward.tensors_mut());
        v.extend([&mut self.head_f, &mut self.head_b, &mut self.head_bias]);
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> ExplainerVars {
        let put = |tape: &mut Tape, m: &Mat| {
            if trainable {
                tape.param(m)
            } else {
                tape.constant(m.clone())
            }
        };
        let embedding = put(tape, &self.embedding);
        let forward = GruVars::bind(tape, &self.forward, trainable);
        let backward = GruVars::bind(tape, &self.backward, trainable);
        ExplainerVars {
            embedding,
            forward,
            backward,
            head_f: put(tape, &self.head_f),
            head_b: put(tape, &self.head_b),
            head_bias: put(tape, &self.head_bias),
        }
    }

    /// Select logits for every token of a single example, `l × 2` with
    /// columns `[not-select, select]`.
    pub fn logits(&self, x: &Example) -> Mat {
        let batch = Batch::new(&[x]);
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape, false);
        let l = vars.logits(&mut tape, &batch);
        tape.value(l).clone()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExplainerVars {
    pub embedding: Var,
    pub forward: GruVars,
    pub backward: GruVars,
    pub head_f: Var,
    pub head_b: Var,
    pub head_bias: Var,
}

impl ExplainerVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = vec![self.embedding];
        v.extend(self.forward.vars());
        v.extend(self.backward.vars());
        v.extend([self.head_f, self.head_b, self.head_bias]);
        v
    }

    /// `(T·B) × 2` select logits.
    pub fn logits(&self, tape: &mut Tape, batch: &Batch) -> Var {
        let emb = tape.embed(self.embedding, &batch.ids);
        let fw = self.forward.run(tape, emb, &batch.keep, false);
        let bw = self.backward.run(tape, emb, &batch.keep, true);
        let fw = tape.concat_rows(&fw);
        let bw = tape.concat_rows(&bw);
        let a = tape.matmul(fw, self.head_f);
        let b = tape.matmul(bw, self.head_b);
        let s = tape.add(a, b);
        tape.add_bias(s, self.head_bias)
    }
}

/// Standard Gumbel noise for `rows` tokens, two channels each.
pub fn gumbel_noise<R: Rng>(rng: &mut R, rows: usize) -> Mat {
    Mat::from_vec(
        rows,
        2,
        (0..rows * 2)
            .map(|_| {
                let u: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
                -(-u.ln()).ln()
            })
            .collect(),
    )
}

/// A mask on the tape plus its plain values.
#[derive(Debug, Clone)]
pub struct MaskVars {
    /// `(T·B) × 1` gradient-carrying mask used downstream.
    pub mask: Var,
    pub select_probs: Mat,
    pub relaxed: Mat,
    pub hard: Mat,
}

impl MaskVars {
    /// Mask rearranged to `B × T` for the regularizer.
    pub fn by_example(&self, tape: &mut Tape, batch: &Batch) -> Var {
        let m = tape.reshape(self.mask, batch.steps, batch.size);
        tape.transpose(m)
    }

    pub fn samples(&self, batch: &Batch) -> Vec<RationaleSample> {
        let probs = batch.unstack(&self.select_probs);
        let relaxed = batch.unstack(&self.relaxed);
        let hard = batch.unstack(&self.hard);
        probs
            .into_iter()
            .zip(relaxed)
            .zip(hard)
            .map(|((select_probs, relaxed_mask), hard)| RationaleSample {
                select_probs,
                relaxed_mask,
                hard_mask: hard.into_iter().map(|v| v as u8).collect(),
            })
            .collect()
    }
}

/// Turns select logits into a mask. `noise` is required for the sampling
/// modes and ignored in [`MaskMode::Eval`].
pub fn sample_mask(
    tape: &mut Tape,
    logits: Var,
    batch: &Batch,
    tau: f64,
    mode: MaskMode,
    noise: Option<&Mat>,
) -> MaskVars {
    let valid = batch.validity();
    let lm = tape.value(logits).clone();
    let probs = softmax_rows(&lm);
    let select_probs = Mat::from_vec(
        lm.rows,
        1,
        (0..lm.rows)
            .map(|r| probs.get(r, 1) * valid.data[r])
            .collect(),
    );
    if mode == MaskMode::Eval {
        let hard = Mat::from_vec(
            lm.rows,
            1,
            (0..lm.rows)
                .map(|r| f64::from(lm.get(r, 1) >= lm.get(r, 0)) * valid.data[r])
                .collect(),
        );
        let mask = tape.constant(hard.clone());
        return MaskVars {
            mask,
            select_probs,
            relaxed: hard.clone(),
            hard,
        };
    }
    let noise = noise.expect("sampling masks need Gumbel noise");
    let g = tape.constant(noise.clone());
    let perturbed = tape.add(logits, g);
    let perturbed = tape.scale(perturbed, 1.0 / tau);
    let soft = tape.softmax(perturbed);
    let select = tape.slice_cols(soft, 1, 1);
    let valid_var = tape.constant(valid.clone());
    let relaxed_var = tape.mul(select, valid_var);
    let sm = tape.value(soft);
    let hard = Mat::from_vec(
        lm.rows,
        1,
        (0..lm.rows)
            .map(|r| f64::from(sm.get(r, 1) >= sm.get(r, 0)) * valid.data[r])
            .collect(),
    );
    let relaxed = tape.value(relaxed_var).clone();
    let mask = match mode {
        MaskMode::Relaxed => relaxed_var,
        _ => tape.straight_through(relaxed_var, hard.clone()),
    };
    MaskVars {
        mask,
        select_probs,
        relaxed,
        hard,
    }
}

impl Predictor {
    pub fn init<R: Rng>(
        rng: &mut R,
        vocab: usize,
        embed: usize,
        hidden: usize,
        classes: usize,
        pooling: Pooling,
    ) -> Self {
        Self {
            embedding: init_embedding(rng, vocab, embed),
            forward: GruParams::init(rng, embed, hidden),
            backward: GruParams::init(rng, embed, hidden),
            head_f: linear(rng, 2 * hidden, hidden, classes),
            head_b: linear(rng, 2 * hidden, hidden, classes),
            head_bias: linear(rng, 2 * hidden, 1, classes),
            pooling,
        }
    }

    pub fn classes(&self) -> usize {
        self.head_bias.cols
    }

    pub fn tensors(&self) -> Vec<&Mat> {
        let mut v = vec![&self.embedding];
        v.extend(self.forward.tensors());
        v.extend(self.backward.tensors());
        v.extend([&self.head_f, &self.head_b, &self.head_bias]);
        v
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Mat> {
        let mut v = vec![&mut self.embedding];
        v.extend(self.forward.tensors_mut());
        v.extend(self.backward.tensors_mut());
        v.extend([&mut self.head_f, &mut self.head_b, &mut self.head_bias]);
        v
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors().iter().map(|m| m.len()).sum()
    }

    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> PredictorVars {
        let put = |tape: &mut Tape, m: &Mat| {
            if trainable {
                tape.param(m)
            } else {
                tape.constant(m.clone())
            }
        };
        let embedding = put(tape, &self.embedding);
        let forward = GruVars::bind(tape, &self.forward, trainable);
        let backward = GruVars::bind(tape, &self.backward, trainable);
        PredictorVars {
            embedding,
            forward,
            backward,
            head_f: put(tape, &self.head_f),
            head_b: put(tape, &self.head_b),
            head_bias: put(tape, &self.head_bias),
            pooling: self.pooling,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PredictorVars {
    pub embedding: Var,
    pub forward: GruVars,
    pub backward: GruVars,
    pub head_f: Var,
    pub head_b: Var,
    pub head_bias: Var,
    pub pooling: Pooling,
}

impl PredictorVars {
    pub fn vars(&self) -> Vec<Var> {
        let mut v = vec![self.embedding];
        v.extend(self.forward.vars());
        v.extend(self.backward.vars());
        v.extend([self.head_f, self.head_b, self.head_bias]);
        v
    }

    /// `B × c` class logits; `mask` scales each token embedding.
    pub fn logits(&self, tape: &mut Tape, batch: &Batch, mask: Option<Var>) -> Var {
        let mut emb = tape.embed(self.embedding, &batch.ids);
        if let Some(m) = mask {
            emb = mask_embeddings(tape, emb, m);
        }
        let fw = self.forward.run(tape, emb, &batch.keep, false);
        let bw = self.backward.run(tape, emb, &batch.keep, true);
        let (pf, pb) = match self.pooling {
            Pooling::Max => (
                tape.max_pool(&fw, &batch.keep),
                tape.max_pool(&bw, &batch.keep),
            ),
            Pooling::Final => (fw[batch.steps - 1], bw[0]),
        };
        let a = tape.matmul(pf, self.head_f);
        let b = tape.matmul(pb, self.head_b);
        let s = tape.add(a, b);
        tape.add_bias(s, self.head_bias)
    }
}

/// Scales token embeddings (rows) by the mask column.
pub fn mask_embeddings(tape: &mut Tape, embedded: Var, mask: Var) -> Var {
    tape.mul_col(embedded, mask)
}
