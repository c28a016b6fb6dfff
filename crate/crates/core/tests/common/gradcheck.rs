use mcd_core::nn::Mat;
use mcd_core::rationale::{
    gumbel_noise, mcd_phase1, mcd_phase2, mmi_gradients, Batch, MaskMode, Objective, Pooling,
    Rationalizer, TrainConfig,
};
use mcd_core::text::Example;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STEP: f64 = 1e-4;
pub const REL_TOL: f64 = 1e-4;

pub fn tiny_config(objective: Objective, pooling: Pooling) -> TrainConfig {
    TrainConfig {
        objective,
        embed_dim: 3,
        hidden_dim: 2,
        sparsity: 0.3,
        lambda_sparsity: 1.0,
        lambda_coherence: 0.2,
        temperature: 0.7,
        pooling,
        seed: 11,
        ..TrainConfig::default()
    }
}

pub fn examples() -> Vec<Example> {
    let ex = |ids: &[usize], label| Example {
        ids: ids.to_vec(),
        label,
        gold: None,
    };
    vec![
        ex(&[2, 3, 4, 5], 1),
        ex(&[5, 2, 3], 0),
        ex(&[4, 4, 2, 3, 5], 1),
    ]
}

pub fn setup(objective: Objective, pooling: Pooling) -> (Rationalizer, Batch, TrainConfig, Mat) {
    let cfg = tiny_config(objective, pooling);
    let model = Rationalizer::init(&cfg, 6);
    let total = model.explainer.parameter_count() + model.predictor.parameter_count();
    assert!(total <= 500, "gradient-check model has {total} parameters");
    let batch = Batch::from_slice(&examples());
    let noise = gumbel_noise(&mut ChaCha8Rng::seed_from_u64(5), batch.steps * batch.size);
    (model, batch, cfg, noise)
}

#[derive(Clone, Copy)]
pub enum Side {
    Explainer,
    Predictor,
}

pub fn nudged(model: &Rationalizer, side: Side, k: usize, i: usize, d: f64) -> Rationalizer {
    let mut m = model.clone();
    let mut ts = match side {
        Side::Explainer => m.explainer.tensors_mut(),
        Side::Predictor => m.predictor.tensors_mut(),
    };
    ts[k].data[i] += d;
    drop(ts);
    m
}

/// Largest relative error between `analytic` and central differences of
/// `loss`; the denominator is floored so exactly-zero entries compare
/// absolutely.
pub fn max_rel_error(
    model: &Rationalizer,
    side: Side,
    analytic: &[Mat],
    loss: impl Fn(&Rationalizer) -> f64,
) -> f64 {
    let shapes: Vec<usize> = match side {
        Side::Explainer => model.explainer.tensors().iter().map(|t| t.len()).collect(),
        Side::Predictor => model.predictor.tensors().iter().map(|t| t.len()).collect(),
    };
    assert_eq!(analytic.len(), shapes.len());
    let mut worst = 0.0f64;
    for (k, &n) in shapes.iter().enumerate() {
        assert_eq!(analytic[k].len(), n);
        for i in 0..n {
            let up = loss(&nudged(model, side, k, i, STEP));
            let down = loss(&nudged(model, side, k, i, -STEP));
            let numeric = (up - down) / (2.0 * STEP);
            let a = analytic[k].data[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            worst = worst.max(err);
        }
    }
    worst
}

/// Every gradient comparison, as `(what, max relative error)`.
pub fn fidelity_suite() -> Vec<(String, f64)> {
    let mut out = Vec::new();
    for pooling in [Pooling::Max, Pooling::Final] {
        let (model, batch, cfg, noise) = setup(Objective::Mmi, pooling);
        let g = mmi_gradients(&model, &batch, &cfg, MaskMode::Relaxed, &noise);
        let loss =
            |m: &Rationalizer| mmi_gradients(m, &batch, &cfg, MaskMode::Relaxed, &noise).loss;
        out.push((
            format!("mmi explainer ({pooling:?})"),
            max_rel_error(&model, Side::Explainer, &g.explainer, loss),
        ));
        out.push((
            format!("mmi predictor ({pooling:?})"),
            max_rel_error(&model, Side::Predictor, &g.predictor, loss),
        ));
    }

    let (model, batch, cfg, noise) = setup(Objective::McdKl, Pooling::Max);
    let g = mcd_phase1(&model, &batch, &cfg, MaskMode::Relaxed, &noise);
    let ce = |m: &Rationalizer| {
        let l = mcd_phase1(m, &batch, &cfg, MaskMode::Relaxed, &noise).losses;
        l.prediction + l.full_prediction.unwrap_or(f64::NAN)
    };
    let omega = |m: &Rationalizer| {
        mcd_phase1(m, &batch, &cfg, MaskMode::Relaxed, &noise)
            .losses
            .omega
    };
    out.push((
        "mcd phase 1 predictor".into(),
        max_rel_error(&model, Side::Predictor, &g.predictor, ce),
    ));
    out.push((
        "mcd phase 1 explainer".into(),
        max_rel_error(&model, Side::Explainer, &g.explainer_omega, omega),
    ));

    for objective in [Objective::McdKl, Objective::McdJs] {
        let (model, batch, cfg, noise) = setup(objective, Pooling::Max);
        let g = mcd_phase2(&model, &batch, &cfg, MaskMode::Relaxed, &noise);
        let loss = |m: &Rationalizer| mcd_phase2(m, &batch, &cfg, MaskMode::Relaxed, &noise).loss;
        out.push((
            format!("{objective} phase 2 explainer"),
            max_rel_error(&model, Side::Explainer, &g.explainer, loss),
        ));
    }
    out
}

/// True when the predictor-phase cross-entropy leaves every explainer
/// tensor without a gradient, in both mask modes.
pub fn stop_gradient_is_exact() -> bool {
    [MaskMode::Train, MaskMode::Relaxed]
        .into_iter()
        .all(|mode| {
            let (model, batch, cfg, noise) = setup(Objective::McdKl, Pooling::Max);
            let g = mcd_phase1(&model, &batch, &cfg, mode, &noise);
            g.explainer_from_ce.len() == model.explainer.tensors().len()
                && g.explainer_from_ce.iter().all(Option::is_none)
        })
}
