use rand::Rng;
use serde::{Deserialize, Serialize};

use super::mat::Mat;
use super::tape::{Tape, Var};

/// Parameters of one gated recurrent direction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GruParams {
    /// `input × 3h`, gate blocks `[reset | update | new]`.
    pub w: Mat,
    /// `1 × 3h` input-side bias.
    pub b: Mat,
    /// `h × 3h` recurrent weights.
    pub u: Mat,
    /// `1 × h` recurrent bias of the candidate gate.
    pub bhn: Mat,
}

pub(crate) fn uniform<R: Rng>(rng: &mut R, rows: usize, cols: usize, bound: f64) -> Mat {
    Mat::from_vec(
        rows,
        cols,
        (0..rows * cols)
            .map(|_| rng.gen_range(-bound..bound))
            .collect(),
    )
}

impl GruParams {
    /// Uniform(−1/√h, 1/√h) initialisation.
    pub fn init<R: Rng>(rng: &mut R, input: usize, hidden: usize) -> Self {
        let k = 1.0 / (hidden as f64).sqrt();
        Self {
            w: uniform(rng, input, 3 * hidden, k),
            b: uniform(rng, 1, 3 * hidden, k),
            u: uniform(rng, hidden, 3 * hidden, k),
            bhn: uniform(rng, 1, hidden, k),
        }
    }

    pub fn hidden(&self) -> usize {
        self.u.rows
    }

    pub fn tensors(&self) -> [&Mat; 4] {
        [&self.w, &self.b, &self.u, &self.bhn]
    }

    pub fn tensors_mut(&mut self) -> [&mut Mat; 4] {
        [&mut self.w, &mut self.b, &mut self.u, &mut self.bhn]
    }
}

/// Tape handles for one direction's parameters.
#[derive(Debug, Clone, Copy)]
pub struct GruVars {
    pub w: Var,
    pub b: Var,
    pub u: Var,
    pub bhn: Var,
}

impl GruVars {
    pub fn bind(tape: &mut Tape, p: &GruParams, trainable: bool) -> Self {
        let mut put = |m: &Mat| {
            if trainable {
                tape.param(m)
            } else {
                tape.constant(m.clone())
            }
        };
        Self {
            w: put(&p.w),
            b: put(&p.b),
            u: put(&p.u),
            bhn: put(&p.bhn),
        }
    }

    pub fn vars(&self) -> [Var; 4] {
        [self.w, self.b, self.u, self.bhn]
    }

    /// Runs over a time-major input `[(T·B) × in]`; returns the `B × h`
    /// state at every step, in time order. `keep[t][b]` is false on padding.
    pub fn run(&self, tape: &mut Tape, inputs: Var, keep: &[Vec<bool>], reverse: bool) -> Vec<Var> {
        let steps = keep.len();
        let batch = keep.first().map_or(0, Vec::len);
        let hidden = tape.value(self.u).rows;
        let proj = tape.matmul(inputs, self.w);
        let proj = tape.add_bias(proj, self.b);
        let mut h = tape.constant(Mat::zeros(batch, hidden));
        let mut out = vec![h; steps];
        let order: Vec<usize> = if reverse {
            (0..steps).rev().collect()
        } else {
            (0..steps).collect()
        };
        for t in order {
            let x = tape.slice_rows(proj, t * batch, batch);
            h = tape.gru_step(x, h, self.u, self.bhn, &keep[t]);
            out[t] = h;
        }
        out
    }
}
