use std::f64::consts::LN_2;

use mcd_core::rationale::{cross_entropy, entropy, js_div, kl_div, ClassDistribution};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dist(p: &[f64]) -> ClassDistribution {
    ClassDistribution::new(p.to_vec()).unwrap()
}

fn random_dist<R: Rng>(rng: &mut R, k: usize) -> ClassDistribution {
    let w: Vec<f64> = (0..k).map(|_| rng.gen_range(1e-3..1.0)).collect();
    let s: f64 = w.iter().sum();
    dist(&w.iter().map(|x| x / s).collect::<Vec<_>>())
}

#[test]
fn closed_form_values() {
    let p = dist(&[1.0, 0.0]);
    let u = dist(&[0.5, 0.5]);
    assert!((kl_div(&p, &u) - LN_2).abs() < 1e-9);
    assert_eq!(kl_div(&p, &p), 0.0);
    assert!((js_div(&p, &dist(&[0.0, 1.0])) - LN_2).abs() < 1e-9);
    assert!((entropy(&u) - LN_2).abs() < 1e-15);
    assert_eq!(entropy(&p), 0.0);
}

#[test]
fn invalid_distributions_are_rejected() {
    assert!(ClassDistribution::new(vec![0.7, 0.7]).is_err());
    assert!(ClassDistribution::new(vec![-0.1, 1.1]).is_err());
    assert!(ClassDistribution::new(vec![]).is_err());
}

#[test]
fn softmax_constructor_is_shift_invariant() {
    let a = ClassDistribution::from_logits(&[1.0, 3.0]);
    let b = ClassDistribution::from_logits(&[1001.0, 1003.0]);
    for (x, y) in a.probs().iter().zip(b.probs()) {
        assert!((x - y).abs() < 1e-12);
    }
    assert_eq!(a.argmax(), 1);
}

#[test]
fn js_symmetric_and_bounded_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for i in 0..1000 {
        let k = 2 + i % 4;
        let (p, q) = (random_dist(&mut rng, k), random_dist(&mut rng, k));
        let (a, b) = (js_div(&p, &q), js_div(&q, &p));
        assert!((a - b).abs() < 1e-12);
        assert!((0.0..=LN_2 + 1e-12).contains(&a));
        assert!(kl_div(&p, &q) >= 0.0);
        assert!(kl_div(&p, &p).abs() < 1e-12);
    }
}

#[test]
fn cross_entropy_dominates_entropy_on_a_grid() {
    let grid: Vec<f64> = (0..=50).map(|i| i as f64 / 50.0).collect();
    for &a in &grid {
        let p = dist(&[a, 1.0 - a]);
        for &b in &grid {
            let q = dist(&[b, 1.0 - b]);
            let gap = cross_entropy(&p, &q) - entropy(&p);
            // the gap is exactly the divergence
            assert!((gap - kl_div(&p, &q)).abs() < 1e-9, "{a} {b}");
            if a == b {
                assert!(gap.abs() < 1e-9);
            } else {
                assert!(gap > 1e-9, "equality away from Q = P at {a} {b}");
            }
        }
    }
}

proptest! {
    #[test]
    fn kl_nonnegative_and_zero_only_at_equality(
        p in prop::collection::vec(0.01f64..1.0, 3),
        q in prop::collection::vec(0.01f64..1.0, 3),
    ) {
        let norm = |v: &[f64]| { let s: f64 = v.iter().sum(); dist(&v.iter().map(|x| x / s).collect::<Vec<_>>()) };
        let (p, q) = (norm(&p), norm(&q));
        let kl = kl_div(&p, &q);
        prop_assert!(kl >= -1e-15);
        let diff = p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if diff > 1e-3 {
            prop_assert!(kl > 0.0);
        }
        // Pinsker: KL ≥ 2 TV²
        let tv = 0.5 * p.probs().iter().zip(q.probs()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        prop_assert!(kl + 1e-12 >= 2.0 * tv * tv);
        let js = js_div(&p, &q);
        prop_assert!((0.0..=LN_2 + 1e-12).contains(&js));
        // JS is at most a quarter of the symmetrised KL
        prop_assert!(js <= 0.25 * (kl + kl_div(&q, &p)) + 1e-12);
        prop_assert!((js - js_div(&q, &p)).abs() < 1e-12);
    }
}
