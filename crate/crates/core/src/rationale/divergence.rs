use serde::{Deserialize, Serialize};

use super::RationaleError;
use crate::nn::{Tape, Var};

/// Floor applied to probabilities inside logarithms.
pub const LOG_FLOOR: f64 = 1e-8;

/// A probability vector over classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassDistribution(Vec<f64>);

impl ClassDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self, RationaleError> {
        let sum: f64 = probs.iter().sum();
        if probs.is_empty() || probs.iter().any(|&p| !(p >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(RationaleError::InvalidDistribution(probs));
        }
        Ok(Self(probs))
    }

    /// Softmax of `logits`.
    pub fn from_logits(logits: &[f64]) -> Self {
        let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = logits.iter().map(|&x| (x - mx).exp()).collect();
        let z: f64 = e.iter().sum();
        Self(e.into_iter().map(|x| x / z).collect())
    }

    pub(crate) fn from_softmax(probs: Vec<f64>) -> Self {
        Self(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Most probable class; ties go to the lower index.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.max(LOG_FLOOR).ln()
    }
}

/// `Σ p_i (ln p_i − ln max(q_i, ε))`.
pub fn kl_div(p: &ClassDistribution, q: &ClassDistribution) -> f64 {
    assert_eq!(
        p.len(),
        q.len(),
        "distributions over different class counts"
    );
    p.0.iter()
        .zip(&q.0)
        .map(|(&a, &b)| xlogy(a, a) - xlogy(a, b))
        .sum()
}

/// `½ KL(p‖m) + ½ KL(q‖m)` with `m = (p + q) / 2`.
pub fn js_div(p: &ClassDistribution, q: &ClassDistribution) -> f64 {
    assert_eq!(
        p.len(),
        q.len(),
        "distributions over different class counts"
    );
    let m = ClassDistribution(p.0.iter().zip(&q.0).map(|(a, b)| 0.5 * (a + b)).collect());
    0.5 * kl_div(p, &m) + 0.5 * kl_div(q, &m)
}

/// `−Σ p_i ln max(q_i, ε)`.
pub fn cross_entropy(p: &ClassDistribution, q: &ClassDistribution) -> f64 {
    -p.0.iter()
        .zip(&q.0)
        .map(|(&a, &b)| xlogy(a, b))
        .sum::<f64>()
}

pub fn entropy(p: &ClassDistribution) -> f64 {
    cross_entropy(p, p)
}

/// Batch-mean `KL(P‖Q)` on the tape; `p` is a constant reference, `q` rows
/// are live probabilities.
pub(crate) fn kl_on_tape(tape: &mut Tape, p: Var, q: Var) -> Var {
    let rows = tape.value(p).rows.max(1) as f64;
    let plogp: f64 = tape.value(p).data.iter().map(|&a| xlogy(a, a)).sum();
    let logq = tape.log_clamp(q, LOG_FLOOR);
    let cross = tape.mul(p, logq);
    let cross = tape.sum_all(cross);
    let neg = tape.scale(cross, -1.0 / rows);
    let offset = tape.constant(crate::nn::Mat::scalar(plogp / rows));
    tape.add(neg, offset)
}

/// Batch-mean `JS(P, Q)` on the tape.
pub(crate) fn js_on_tape(tape: &mut Tape, p: Var, q: Var) -> Var {
    let rows = tape.value(p).rows.max(1) as f64;
    let plogp: f64 = tape.value(p).data.iter().map(|&a| xlogy(a, a)).sum();
    let sum = tape.add(p, q);
    let m = tape.scale(sum, 0.5);
    let logm = tape.log_clamp(m, LOG_FLOOR);
    let logq = tape.log_clamp(q, LOG_FLOOR);
    // ½Σ p ln p + ½Σ q ln q − Σ m ln m
    let qlogq = tape.mul(q, logq);
    let qlogq = tape.sum_all(qlogq);
    let mlogm = tape.mul(m, logm);
    let mlogm = tape.sum_all(mlogm);
    let half_q = tape.scale(qlogq, 0.5 / rows);
    let neg_m = tape.scale(mlogm, -1.0 / rows);
    let s = tape.add(half_q, neg_m);
    let offset = tape.constant(crate::nn::Mat::scalar(0.5 * plogp / rows));
    tape.add(s, offset)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Mat;

    fn d(v: &[f64]) -> ClassDistribution {
        ClassDistribution::new(v.to_vec()).unwrap()
    }

    #[test]
    fn closed_forms() {
        let ln2 = std::f64::consts::LN_2;
        assert!((kl_div(&d(&[1.0, 0.0]), &d(&[0.5, 0.5])) - ln2).abs() < 1e-12);
        assert!((js_div(&d(&[1.0, 0.0]), &d(&[0.0, 1.0])) - ln2).abs() < 1e-12);
        let p = d(&[0.2, 0.3, 0.5]);
        assert_eq!(kl_div(&p, &p), 0.0);
        assert_eq!(js_div(&p, &p), 0.0);
        assert!(ClassDistribution::new(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn tape_versions_match_plain_ones() {
        let p = [vec![0.1, 0.9], vec![0.6, 0.4]];
        let q = [vec![0.3, 0.7], vec![0.5, 0.5]];
        let mut tape = Tape::new();
        let pv = tape.constant(Mat::from_rows(&p));
        let qv = tape.param(&Mat::from_rows(&q));
        let kl = kl_on_tape(&mut tape, pv, qv);
        let js = js_on_tape(&mut tape, pv, qv);
        let want_kl = (kl_div(&d(&p[0]), &d(&q[0])) + kl_div(&d(&p[1]), &d(&q[1]))) / 2.0;
        let want_js = (js_div(&d(&p[0]), &d(&q[0])) + js_div(&d(&p[1]), &d(&q[1]))) / 2.0;
        assert!((tape.value(kl).item() - want_kl).abs() < 1e-12);
        assert!((tape.value(js).item() - want_js).abs() < 1e-12);
    }
}
