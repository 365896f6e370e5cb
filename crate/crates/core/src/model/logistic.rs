//! L1-regularized logistic regression trained by proximal gradient descent
//! with backtracking line search and soft-threshold shrinkage. Features are
//! standardized internally; the intercept is unpenalized.

use std::collections::BTreeMap;

use super::{
    clamp_prob, sigmoid, LabeledExample, ModelError, ModelKind, ModelParams, SplitModel,
    Standardization,
};

/// Objective decrease below `tol * (1 + |objective|)` stops the solver.
const REL_TOL: f64 = 1e-8;
const MAX_ITERS: usize = 10_000;

/// ln(1 + e^z), computed without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Smooth part of the lasso-logistic objective and its gradient:
/// `sum_i [softplus(z_i) - y_i z_i]` with `z_i = w . x_i + b`, over rows
/// already standardized. Returns `(loss, grad_w, grad_b)`.
pub fn logistic_smooth_loss_and_grad(
    rows: &[Vec<f64>],
    targets: &[f64],
    weights: &[f64],
    intercept: f64,
) -> (f64, Vec<f64>, f64) {
    let mut loss = 0.0;
    let mut grad_w = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (x, &y) in rows.iter().zip(targets) {
        let z: f64 = x.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() + intercept;
        loss += softplus(z) - y * z;
        let resid = sigmoid(z) - y;
        for (g, v) in grad_w.iter_mut().zip(x) {
            *g += resid * v;
        }
        grad_b += resid;
    }
    (loss, grad_w, grad_b)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

fn l1_norm(w: &[f64]) -> f64 {
    w.iter().map(|v| v.abs()).sum()
}

/// Train lasso logistic regression: minimize
/// `sum_i logloss(sigmoid(w . x~_i + b), y_i) + lambda * |w|_1`
/// over standardized features, intercept unpenalized.
///
/// `lambda` is the absolute penalty; callers scaling a per-example grid
/// multiply by the training-set size first.
pub fn train_logistic_l1(data: &[LabeledExample], lambda: f64) -> Result<SplitModel, ModelError> {
    if data.len() < 2 {
        return Err(ModelError::TooFewExamples { needed: 2, got: data.len() });
    }
    if !(lambda >= 0.0) {
        return Err(ModelError::InvalidHyperparameter {
            name: "lambda",
            reason: format!("{lambda} is not >= 0"),
        });
    }
    let positives = data.iter().filter(|e| e.y).count();
    if positives == 0 || positives == data.len() {
        return Err(ModelError::SingleClass);
    }
    let dim = data[0].x.len();
    if data.iter().any(|e| e.x.len() != dim) {
        return Err(ModelError::RaggedRows);
    }

    let raw: Vec<&[f64]> = data.iter().map(|e| e.x.as_slice()).collect();
    let standardization = Standardization::fit(&raw);
    let rows: Vec<Vec<f64>> = raw.iter().map(|r| standardization.apply(r)).collect();
    let targets: Vec<f64> = data.iter().map(|e| if e.y { 1.0 } else { 0.0 }).collect();

    let mut w = vec![0.0; dim];
    let mut b = 0.0;
    let (mut smooth, mut grad_w, mut grad_b) =
        logistic_smooth_loss_and_grad(&rows, &targets, &w, b);
    let mut objective = smooth + lambda * l1_norm(&w);
    let mut step = 1.0;

    for _ in 0..MAX_ITERS {
        // backtracking: shrink the step until the quadratic upper bound of
        // the smooth part holds at the prox point
        let (new_w, new_b, new_smooth, new_grad);
        loop {
            let cand_w: Vec<f64> = w
                .iter()
                .zip(&grad_w)
                .map(|(wi, gi)| soft_threshold(wi - step * gi, step * lambda))
                .collect();
            let cand_b = b - step * grad_b;
            let (cand_smooth, cand_gw, cand_gb) =
                logistic_smooth_loss_and_grad(&rows, &targets, &cand_w, cand_b);
            let mut linear = 0.0;
            let mut sq = 0.0;
            for ((cw, wi), gi) in cand_w.iter().zip(&w).zip(&grad_w) {
                let d = cw - wi;
                linear += gi * d;
                sq += d * d;
            }
            let db = cand_b - b;
            linear += grad_b * db;
            sq += db * db;
            if cand_smooth <= smooth + linear + sq / (2.0 * step) + 1e-12 || step < 1e-18 {
                new_w = cand_w;
                new_b = cand_b;
                new_smooth = cand_smooth;
                new_grad = (cand_gw, cand_gb);
                break;
            }
            step *= 0.5;
        }

        let new_objective = new_smooth + lambda * l1_norm(&new_w);
        let decrease = objective - new_objective;
        w = new_w;
        b = new_b;
        smooth = new_smooth;
        (grad_w, grad_b) = new_grad;
        objective = new_objective;
        if decrease.abs() < REL_TOL * (1.0 + objective.abs()) {
            break;
        }
        step *= 1.25;
    }

    let mut hyperparameters = BTreeMap::new();
    hyperparameters.insert("lambda".to_string(), format!("{lambda}"));
    Ok(SplitModel {
        kind: ModelKind::LogisticL1,
        catalog_version: crate::features::CATALOG_VERSION.to_string(),
        n_features: dim,
        standardization,
        hyperparameters,
        params: ModelParams::LogisticL1 { weights: w, intercept: b },
    })
}

#[allow(dead_code)]
pub(crate) fn training_probability(model: &SplitModel, x: &[f64]) -> f64 {
    match &model.params {
        ModelParams::LogisticL1 { weights, intercept } => {
            let std = model.standardization.apply(x);
            clamp_prob(sigmoid(
                std.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() + intercept,
            ))
        }
        _ => unreachable!("logistic helper used on a non-logistic model"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use crate::model::{predict, test_util};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn weights_of(model: &SplitModel) -> (&[f64], f64) {
        match &model.params {
            ModelParams::LogisticL1 { weights, intercept } => (weights, *intercept),
            _ => panic!("not logistic"),
        }
    }

    #[test]
    fn huge_lambda_zeroes_all_weights_and_fits_base_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data = test_util::random_dataset(&mut rng, 200, 5);
        let model = train_logistic_l1(&data, 1e6).unwrap();
        let (w, _) = weights_of(&model);
        assert!(w.iter().all(|&wi| wi == 0.0), "weights {w:?}");
        let base_rate = data.iter().filter(|e| e.y).count() as f64 / data.len() as f64;
        let p = predict(&model, &FeatureVector { order_id: "q".into(), values: vec![0.0; 5] })
            .unwrap();
        assert!((p - base_rate).abs() < 1e-4, "p {p} vs base rate {base_rate}");
    }

    #[test]
    fn zero_model_predicts_one_half() {
        assert_eq!(sigmoid(0.0), 0.5);
        let model = SplitModel {
            kind: ModelKind::LogisticL1,
            catalog_version: "fv1".into(),
            n_features: 3,
            standardization: Standardization::identity(3),
            hyperparameters: BTreeMap::new(),
            params: ModelParams::LogisticL1 { weights: vec![0.0; 3], intercept: 0.0 },
        };
        let p = predict(&model, &FeatureVector { order_id: "q".into(), values: vec![7.0, -2.0, 0.3] })
            .unwrap();
        assert_eq!(p, 0.5);
    }

    #[test]
    fn separable_toy_set_reaches_perfect_training_accuracy() {
        // two clusters, linearly separable in 2-D
        let mut data = Vec::new();
        for i in 0..20 {
            let t = i as f64 * 0.1;
            data.push(LabeledExample { order_id: format!("n{i}"), x: vec![t, t + 1.0], y: false });
            data.push(LabeledExample { order_id: format!("p{i}"), x: vec![t + 2.0, t - 1.5], y: true });
        }
        let model = train_logistic_l1(&data, 0.01).unwrap();
        let correct = data
            .iter()
            .filter(|e| {
                let p = predict(
                    &model,
                    &FeatureVector { order_id: "q".into(), values: e.x.clone() },
                )
                .unwrap();
                (p > 0.5) == e.y
            })
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn single_class_data_is_rejected() {
        let data: Vec<LabeledExample> = (0..10)
            .map(|i| LabeledExample { order_id: format!("e{i}"), x: vec![i as f64], y: true })
            .collect();
        assert!(matches!(train_logistic_l1(&data, 0.1), Err(ModelError::SingleClass)));
    }

    #[test]
    fn analytic_gradient_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data = test_util::random_dataset(&mut rng, 50, 4);
        let rows: Vec<Vec<f64>> = data.iter().map(|e| e.x.clone()).collect();
        let targets: Vec<f64> = data.iter().map(|e| if e.y { 1.0 } else { 0.0 }).collect();

        let h = 1e-6;
        for _ in 0..20 {
            let w: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: f64 = rng.gen_range(-1.0..1.0);
            let (_, grad_w, grad_b) = logistic_smooth_loss_and_grad(&rows, &targets, &w, b);
            for j in 0..=4 {
                let mut lo_w = w.clone();
                let mut hi_w = w.clone();
                let (mut lo_b, mut hi_b) = (b, b);
                if j < 4 {
                    lo_w[j] -= h;
                    hi_w[j] += h;
                } else {
                    lo_b -= h;
                    hi_b += h;
                }
                let (lo, _, _) = logistic_smooth_loss_and_grad(&rows, &targets, &lo_w, lo_b);
                let (hi, _, _) = logistic_smooth_loss_and_grad(&rows, &targets, &hi_w, hi_b);
                let numeric = (hi - lo) / (2.0 * h);
                let analytic = if j < 4 { grad_w[j] } else { grad_b };
                let rel = (numeric - analytic).abs() / (1.0 + analytic.abs());
                assert!(rel <= 1e-5, "coordinate {j}: analytic {analytic} vs numeric {numeric}");
            }
        }
    }

    #[test]
    fn power_of_two_feature_scaling_leaves_predictions_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let data = test_util::random_dataset(&mut rng, 150, 3);
        let scaled: Vec<LabeledExample> = data
            .iter()
            .map(|e| LabeledExample {
                order_id: e.order_id.clone(),
                x: vec![e.x[0] * 4.0, e.x[1], e.x[2]],
                y: e.y,
            })
            .collect();
        let m1 = train_logistic_l1(&data, 2.0).unwrap();
        let m2 = train_logistic_l1(&scaled, 2.0).unwrap();
        for e in data.iter().take(30) {
            let p1 = predict(&m1, &FeatureVector { order_id: "q".into(), values: e.x.clone() })
                .unwrap();
            let p2 = predict(
                &m2,
                &FeatureVector {
                    order_id: "q".into(),
                    values: vec![e.x[0] * 4.0, e.x[1], e.x[2]],
                },
            )
            .unwrap();
            // scaling by a power of two is exact in binary floating point,
            // so standardization absorbs it bit for bit
            assert_eq!(p1.to_bits(), p2.to_bits());
        }
    }

    #[test]
    fn arbitrary_positive_scaling_is_absorbed_within_tolerance() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let data = test_util::random_dataset(&mut rng, 150, 3);
        let scaled: Vec<LabeledExample> = data
            .iter()
            .map(|e| LabeledExample {
                order_id: e.order_id.clone(),
                x: vec![e.x[0] * 3.7, e.x[1], e.x[2]],
                y: e.y,
            })
            .collect();
        let m1 = train_logistic_l1(&data, 2.0).unwrap();
        let m2 = train_logistic_l1(&scaled, 2.0).unwrap();
        for (e, s) in data.iter().zip(&scaled).take(30) {
            let p1 = predict(&m1, &FeatureVector { order_id: "q".into(), values: e.x.clone() })
                .unwrap();
            let p2 = predict(&m2, &FeatureVector { order_id: "q".into(), values: s.x.clone() })
                .unwrap();
            assert!((p1 - p2).abs() < 1e-6, "{p1} vs {p2}");
        }
    }
}
