//! LogitBoost over decision stumps: stagewise additive logistic regression
//! by Newton steps, with the classical p = sigmoid(2F) convention, clamped
//! working responses and weights, and a step-halving safeguard that keeps
//! the training log loss non-increasing at every iteration.

use std::collections::BTreeMap;

use super::{
    clamp_prob, sigmoid, LabeledExample, ModelError, ModelKind, ModelParams, SplitModel,
    Standardization, Stump,
};

const WEIGHT_FLOOR: f64 = 1e-6;
const RESPONSE_CLIP: f64 = 4.0;
const MAX_HALVINGS: u32 = 10;

fn mean_log_loss(scores: &[f64], targets: &[bool]) -> f64 {
    let n = scores.len() as f64;
    scores
        .iter()
        .zip(targets)
        .map(|(&f, &y)| {
            let p = clamp_prob(sigmoid(2.0 * f));
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum::<f64>()
        / n
}

struct FittedStump {
    feature: usize,
    threshold: f64,
    left_value: f64,
    right_value: f64,
    gain: f64,
}

/// Weighted least-squares stump over presorted feature orders. Ties break
/// toward the lowest feature index, then the lowest threshold. Falls back
/// to a constant stump when no feature has two distinct values.
fn fit_stump(
    data: &[LabeledExample],
    sort_orders: &[Vec<u32>],
    w: &[f64],
    z: &[f64],
) -> FittedStump {
    let total_w: f64 = w.iter().sum();
    let total_wz: f64 = w.iter().zip(z).map(|(wi, zi)| wi * zi).sum();
    let base_score = total_wz * total_wz / total_w;

    let mut best: Option<(f64, usize, f64, f64, f64)> = None; // gain, feature, threshold, lv, rv
    for (feature, order) in sort_orders.iter().enumerate() {
        let mut wl = 0.0;
        let mut wzl = 0.0;
        for k in 0..order.len() - 1 {
            let i = order[k] as usize;
            wl += w[i];
            wzl += w[i] * z[i];
            let lo = data[i].x[feature];
            let hi = data[order[k + 1] as usize].x[feature];
            if lo == hi {
                continue;
            }
            let wr = total_w - wl;
            let wzr = total_wz - wzl;
            let score = wzl * wzl / wl + wzr * wzr / wr;
            let gain = score - base_score;
            let mid = lo + (hi - lo) / 2.0;
            let threshold = if mid < hi { mid } else { lo };
            let better = match best {
                None => true,
                Some((bg, bf, bt, _, _)) => {
                    gain > bg || (gain == bg && (feature < bf || (feature == bf && threshold < bt)))
                }
            };
            if better {
                best = Some((gain, feature, threshold, wzl / wl, wzr / wr));
            }
        }
    }

    match best {
        Some((gain, feature, threshold, left_value, right_value)) => {
            FittedStump { feature, threshold, left_value, right_value, gain }
        }
        None => {
            let constant = total_wz / total_w;
            FittedStump { feature: 0, threshold: 0.0, left_value: constant, right_value: constant, gain: 0.0 }
        }
    }
}

/// Train LogitBoost and return the per-iteration training log loss trace;
/// `trace[0]` is the loss of the prior alone and `trace[m]` the loss after
/// iteration `m`, so the trace has `n_iters + 1` entries.
pub fn train_logitboost_traced(
    data: &[LabeledExample],
    n_iters: usize,
    shrinkage: f64,
) -> Result<(SplitModel, Vec<f64>), ModelError> {
    if data.len() < 2 {
        return Err(ModelError::TooFewExamples { needed: 2, got: data.len() });
    }
    if !(shrinkage > 0.0 && shrinkage <= 1.0) {
        return Err(ModelError::InvalidHyperparameter {
            name: "shrinkage",
            reason: format!("{shrinkage} is not in (0, 1]"),
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
    let n = data.len();
    let targets: Vec<bool> = data.iter().map(|e| e.y).collect();

    let sort_orders: Vec<Vec<u32>> = (0..dim)
        .map(|feature| {
            let mut order: Vec<u32> = (0..n as u32).collect();
            order.sort_by(|&a, &b| {
                data[a as usize].x[feature]
                    .partial_cmp(&data[b as usize].x[feature])
                    .expect("finite feature values")
            });
            order
        })
        .collect();

    let base_rate = positives as f64 / n as f64;
    let prior = 0.5 * (base_rate / (1.0 - base_rate)).ln();
    let mut scores = vec![prior; n];
    let mut loss = mean_log_loss(&scores, &targets);
    let mut trace = Vec::with_capacity(n_iters + 1);
    trace.push(loss);

    let mut stumps = Vec::with_capacity(n_iters);
    let mut importance = vec![0.0; dim];
    let mut w = vec![0.0; n];
    let mut z = vec![0.0; n];
    let step_scale = 0.5 * shrinkage;

    for _ in 0..n_iters {
        for i in 0..n {
            let p = sigmoid(2.0 * scores[i]);
            let denom = (p * (1.0 - p)).max(WEIGHT_FLOOR);
            let y = if targets[i] { 1.0 } else { 0.0 };
            w[i] = denom;
            z[i] = ((y - p) / denom).clamp(-RESPONSE_CLIP, RESPONSE_CLIP);
        }
        let fitted = fit_stump(data, &sort_orders, &w, &z);

        // Newton half-step with shrinkage; halve further if the loss would
        // rise, and drop the stump entirely when even that fails, so the
        // training loss never increases.
        let mut scale = step_scale;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let stump = Stump {
                feature: fitted.feature,
                threshold: fitted.threshold,
                left_value: scale * fitted.left_value,
                right_value: scale * fitted.right_value,
            };
            let new_scores: Vec<f64> = data
                .iter()
                .zip(&scores)
                .map(|(e, &f)| f + stump.value(&e.x))
                .collect();
            let new_loss = mean_log_loss(&new_scores, &targets);
            if new_loss <= loss {
                accepted = Some((stump, new_scores, new_loss));
                break;
            }
            scale *= 0.5;
        }
        match accepted {
            Some((stump, new_scores, new_loss)) => {
                importance[stump.feature] += fitted.gain.max(0.0);
                stumps.push(stump);
                scores = new_scores;
                loss = new_loss;
            }
            None => {
                stumps.push(Stump { feature: 0, threshold: 0.0, left_value: 0.0, right_value: 0.0 });
            }
        }
        trace.push(loss);
    }

    let raw: Vec<&[f64]> = data.iter().map(|e| e.x.as_slice()).collect();
    let mut hyperparameters = BTreeMap::new();
    hyperparameters.insert("n_iters".to_string(), n_iters.to_string());
    hyperparameters.insert("shrinkage".to_string(), format!("{shrinkage}"));
    hyperparameters.insert("probability_convention".to_string(), "sigmoid(2F)".to_string());
    let model = SplitModel {
        kind: ModelKind::LogitBoost,
        catalog_version: crate::features::CATALOG_VERSION.to_string(),
        n_features: dim,
        standardization: Standardization::fit(&raw),
        hyperparameters,
        params: ModelParams::LogitBoost { prior, stumps, importance },
    };
    Ok((model, trace))
}

/// Train LogitBoost with stumps.
pub fn train_logitboost(
    data: &[LabeledExample],
    n_iters: usize,
    shrinkage: f64,
) -> Result<SplitModel, ModelError> {
    train_logitboost_traced(data, n_iters, shrinkage).map(|(m, _)| m)
}

/// Probabilities of a LogitBoost model truncated to each checkpoint (an
/// iteration count), per input row: `result[c][i]` is the probability of
/// row `i` under the first `checkpoints[c]` stumps. Because boosting is
/// stagewise, the truncated model equals one trained with that iteration
/// budget, which makes iteration-count grids cheap to evaluate.
pub fn staged_probabilities(
    model: &SplitModel,
    rows: &[Vec<f64>],
    checkpoints: &[usize],
) -> Result<Vec<Vec<f64>>, ModelError> {
    let (prior, stumps) = match &model.params {
        ModelParams::LogitBoost { prior, stumps, .. } => (*prior, stumps),
        _ => return Err(ModelError::WrongKind { expected: ModelKind::LogitBoost, got: model.kind }),
    };
    let mut out = vec![vec![0.0; rows.len()]; checkpoints.len()];
    for (i, row) in rows.iter().enumerate() {
        if row.len() != model.n_features {
            return Err(ModelError::DimensionMismatch { expected: model.n_features, got: row.len() });
        }
        // accumulate the stump sum exactly like predict does (prior added
        // last), so a truncated model and a model trained at the checkpoint
        // budget agree bit for bit
        let mut sum = 0.0;
        let mut at = 0usize;
        for (c, &k) in checkpoints.iter().enumerate() {
            let k = k.min(stumps.len());
            while at < k {
                sum += stumps[at].value(row);
                at += 1;
            }
            out[c][i] = clamp_prob(sigmoid(2.0 * (prior + sum)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use crate::model::{predict, test_util};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_iterations_yield_the_base_rate() {
        let data: Vec<LabeledExample> = (0..10)
            .map(|i| LabeledExample { order_id: format!("e{i}"), x: vec![i as f64], y: i < 3 })
            .collect();
        let model = train_logitboost(&data, 0, 0.1).unwrap();
        let p = predict(&model, &FeatureVector { order_id: "q".into(), values: vec![5.0] }).unwrap();
        assert!((p - 0.3).abs() < 1e-12);
    }

    #[test]
    fn training_loss_is_monotone_non_increasing() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for trial in 0..5 {
            let data = test_util::random_dataset(&mut rng, 120 + trial * 30, 3);
            let (_, trace) = train_logitboost_traced(&data, 60, 0.1).unwrap();
            for pair in trace.windows(2) {
                assert!(pair[1] <= pair[0] + 1e-12, "loss rose: {} -> {}", pair[0], pair[1]);
            }
        }
    }

    #[test]
    fn separable_one_dimensional_data_is_learned() {
        let data: Vec<LabeledExample> = (0..40)
            .map(|i| LabeledExample {
                order_id: format!("e{i}"),
                x: vec![i as f64 / 10.0],
                y: i >= 20,
            })
            .collect();
        let model = train_logitboost(&data, 50, 0.1).unwrap();
        let correct = data
            .iter()
            .filter(|e| {
                let p = predict(&model, &FeatureVector { order_id: "q".into(), values: e.x.clone() })
                    .unwrap();
                (p > 0.5) == e.y
            })
            .count();
        assert_eq!(correct, data.len());
    }

    #[test]
    fn single_class_is_rejected() {
        let data: Vec<LabeledExample> = (0..10)
            .map(|i| LabeledExample { order_id: format!("e{i}"), x: vec![i as f64], y: false })
            .collect();
        assert!(matches!(train_logitboost(&data, 10, 0.1), Err(ModelError::SingleClass)));
    }

    #[test]
    fn staged_probabilities_match_separately_trained_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let data = test_util::random_dataset(&mut rng, 150, 3);
        let probes: Vec<Vec<f64>> = data.iter().take(20).map(|e| e.x.clone()).collect();

        let full = train_logitboost(&data, 40, 0.1).unwrap();
        let staged = staged_probabilities(&full, &probes, &[10, 25, 40]).unwrap();
        for (c, &k) in [10usize, 25, 40].iter().enumerate() {
            let direct = train_logitboost(&data, k, 0.1).unwrap();
            for (i, probe) in probes.iter().enumerate() {
                let p = predict(&direct, &FeatureVector { order_id: "q".into(), values: probe.clone() })
                    .unwrap();
                assert_eq!(p.to_bits(), staged[c][i].to_bits(), "checkpoint {k}, probe {i}");
            }
        }
    }
}
