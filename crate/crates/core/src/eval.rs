//! The experiment protocol: accuracy and log-loss metrics, confidence
//! coverage curves, stratified folds, repeated nested cross-validation with
//! per-fold hyperparameter selection, and the single-item/multi-item order
//! partition that evaluation runs on.

use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Order, SplitLabel};
use crate::model::{
    feature_importance, predict, staged_probabilities, train_baseline, train_decision_tree,
    train_ensemble, train_logistic_l1, train_logitboost, LabeledExample, ModelError, ModelKind,
    SplitModel,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("prediction and label lengths differ: {left} vs {right}")]
    ShapeMismatch { left: usize, right: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("threshold {value} is outside [0.5, 1]")]
    ThresholdOutOfRange { value: f64 },
    #[error("thresholds must be sorted ascending")]
    UnsortedThresholds,
    #[error("a class with {class_count} examples cannot appear in every training split of {folds} folds")]
    Stratification { class_count: usize, folds: usize },
    #[error("no label for order '{order_id}'")]
    MissingLabel { order_id: String },
    #[error("invalid cv config: {reason}")]
    BadConfig { reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

fn check_lengths(predictions: &[f64], labels: &[bool]) -> Result<(), EvalError> {
    if predictions.len() != labels.len() {
        return Err(EvalError::ShapeMismatch { left: predictions.len(), right: labels.len() });
    }
    if predictions.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    Ok(())
}

/// Fraction of examples where `(p > 0.5)` agrees with the label; a
/// probability of exactly 0.5 predicts the negative class.
pub fn accuracy(predictions: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_lengths(predictions, labels)?;
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(&p, &y)| (p > 0.5) == y)
        .count();
    Ok(correct as f64 / predictions.len() as f64)
}

/// Mean negative log likelihood with predictions clamped to
/// `[1e-12, 1 - 1e-12]`, so the result is always finite.
pub fn log_loss(predictions: &[f64], labels: &[bool]) -> Result<f64, EvalError> {
    check_lengths(predictions, labels)?;
    let sum: f64 = predictions
        .iter()
        .zip(labels)
        .map(|(&p, &y)| {
            let p = p.clamp(1e-12, 1.0 - 1e-12);
            if y {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// One point of the confidence-thresholded operating curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub threshold: f64,
    /// Fraction of examples whose confidence `max(p, 1-p)` reaches the
    /// threshold (the operating curve's recall axis).
    pub coverage: f64,
    /// Accuracy over the covered examples (the precision axis); absent when
    /// nothing is covered.
    pub accuracy: Option<f64>,
}

/// Sweep confidence thresholds: at each `t`, cover the examples predicted
/// with confidence at least `t` and measure accuracy on them. Thresholds
/// must be ascending and within `[0.5, 1]`.
pub fn coverage_accuracy_curve(
    predictions: &[f64],
    labels: &[bool],
    thresholds: &[f64],
) -> Result<Vec<CurvePoint>, EvalError> {
    check_lengths(predictions, labels)?;
    for t in thresholds {
        if !(0.5..=1.0).contains(t) {
            return Err(EvalError::ThresholdOutOfRange { value: *t });
        }
    }
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(EvalError::UnsortedThresholds);
    }

    Ok(thresholds
        .iter()
        .map(|&t| {
            let mut covered = 0usize;
            let mut correct = 0usize;
            for (&p, &y) in predictions.iter().zip(labels) {
                if p.max(1.0 - p) >= t {
                    covered += 1;
                    if (p > 0.5) == y {
                        correct += 1;
                    }
                }
            }
            CurvePoint {
                threshold: t,
                coverage: covered as f64 / predictions.len() as f64,
                accuracy: if covered > 0 { Some(correct as f64 / covered as f64) } else { None },
            }
        })
        .collect())
}

/// The default curve grid: 0.500 to 0.995 in steps of 0.005, which passes
/// through the 0.97 operating point exactly.
pub fn default_thresholds() -> Vec<f64> {
    (500..=995).step_by(5).map(|m| m as f64 / 1000.0).collect()
}

// ---------------------------------------------------------------------------
// Folds
// ---------------------------------------------------------------------------

fn mix_seed(seed: u64, repeat: u64, fold: u64) -> u64 {
    // splitmix64 over the tuple
    let mut z = seed ^ repeat.wrapping_mul(0x9E3779B97F4A7C15) ^ fold.wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Deterministic stratified K-fold assignment: per class, shuffle the
/// indices with the seeded RNG and deal them round robin, so per-fold class
/// counts deviate from proportionality by at most one example.
pub fn stratified_folds(labels: &[bool], n_folds: usize, seed: u64) -> Vec<Vec<usize>> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); n_folds];
    for class in [true, false] {
        let mut members: Vec<usize> =
            (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(&mut rng);
        for (k, idx) in members.into_iter().enumerate() {
            folds[k % n_folds].push(idx);
        }
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    folds
}

fn fnv1a(indices: &[usize]) -> u64 {
    let mut hash: u64 = 0xcbf29ce484222325;
    for &i in indices {
        for byte in (i as u64).to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x100000001b3);
        }
    }
    hash
}

// ---------------------------------------------------------------------------
// Nested cross-validation
// ---------------------------------------------------------------------------

/// Metric the inner cross-validation minimizes when picking a grid point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SelectionMetric {
    LogLoss,
    Accuracy,
}

/// Candidate hyperparameters per model family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParamGrid {
    /// Lasso penalties per training example; the effective penalty is the
    /// grid value times the training-set size.
    pub lambda_per_example: Vec<f64>,
    pub min_leaf: Vec<usize>,
    pub boost_iters: Vec<usize>,
    pub boost_shrinkage: f64,
}

impl Default for HyperParamGrid {
    fn default() -> Self {
        HyperParamGrid {
            lambda_per_example: vec![0.001, 0.01, 0.1, 1.0, 10.0],
            min_leaf: vec![5, 20, 50, 100],
            boost_iters: vec![50, 100, 200, 400],
            boost_shrinkage: 0.1,
        }
    }
}

impl HyperParamGrid {
    fn validate(&self) -> Result<(), EvalError> {
        let bad = |reason: &str| Err(EvalError::BadConfig { reason: reason.to_string() });
        if self.lambda_per_example.is_empty() || self.min_leaf.is_empty() || self.boost_iters.is_empty()
        {
            return bad("every hyperparameter grid must be non-empty");
        }
        if self.lambda_per_example.iter().any(|&l| !(l >= 0.0)) {
            return bad("lambda grid values must be >= 0");
        }
        if self.min_leaf.iter().any(|&m| m == 0) {
            return bad("min_leaf grid values must be >= 1");
        }
        Ok(())
    }
}

/// Protocol configuration: repeats, outer and inner fold counts, seed, the
/// hyperparameter grid, and the selection metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CVConfig {
    pub n_repeats: usize,
    pub n_outer_folds: usize,
    pub n_inner_folds: usize,
    pub seed: u64,
    pub grid: HyperParamGrid,
    pub selection_metric: SelectionMetric,
}

impl Default for CVConfig {
    fn default() -> Self {
        CVConfig {
            n_repeats: 5,
            n_outer_folds: 10,
            n_inner_folds: 10,
            seed: 42,
            grid: HyperParamGrid::default(),
            selection_metric: SelectionMetric::LogLoss,
        }
    }
}

/// Mean and standard deviation of both metrics over all repeat x fold cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub kind: ModelKind,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub mean_log_loss: f64,
    pub std_log_loss: f64,
}

/// One evaluation cell: a model kind scored on one outer test fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub repeat: usize,
    pub fold: usize,
    pub kind: ModelKind,
    pub hyperparameter: String,
    pub accuracy: f64,
    pub log_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCurve {
    pub kind: ModelKind,
    pub points: Vec<CurvePoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelImportance {
    pub kind: ModelKind,
    /// Mean of per-fold normalized importances, descending.
    pub mean_importance: Vec<(String, f64)>,
}

/// Index-set audit trail for one outer cell: sizes and order-independent
/// checksums of the train/test partitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAudit {
    pub repeat: usize,
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub train_checksum: u64,
    pub test_checksum: u64,
}

/// Everything the protocol produces, deterministic under a fixed seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_examples: usize,
    pub positive_share: f64,
    pub n_repeats: usize,
    pub n_outer_folds: usize,
    pub n_inner_folds: usize,
    pub seed: u64,
    pub summaries: Vec<ModelSummary>,
    pub cells: Vec<CellRecord>,
    pub curves: Vec<ModelCurve>,
    pub importances: Vec<ModelImportance>,
    pub fold_audit: Vec<FoldAudit>,
}

fn subset(data: &[LabeledExample], indices: &[usize]) -> Vec<LabeledExample> {
    indices.iter().map(|&i| data[i].clone()).collect()
}

fn metric_score(
    metric: SelectionMetric,
    predictions: &[f64],
    labels: &[bool],
) -> Result<f64, EvalError> {
    Ok(match metric {
        SelectionMetric::LogLoss => log_loss(predictions, labels)?,
        SelectionMetric::Accuracy => -accuracy(predictions, labels)?,
    })
}

fn predictions_of(model: &SplitModel, data: &[LabeledExample]) -> Result<Vec<f64>, ModelError> {
    data.iter()
        .map(|e| {
            predict(
                model,
                &crate::features::FeatureVector { order_id: e.order_id.clone(), values: e.x.clone() },
            )
        })
        .collect()
}

struct InnerSplits {
    train: Vec<Vec<LabeledExample>>,
    test: Vec<Vec<LabeledExample>>,
}

fn inner_splits(train: &[LabeledExample], n_folds: usize, seed: u64) -> InnerSplits {
    let labels: Vec<bool> = train.iter().map(|e| e.y).collect();
    let folds = stratified_folds(&labels, n_folds, seed);
    let mut out = InnerSplits { train: Vec::new(), test: Vec::new() };
    for k in 0..n_folds {
        let test_idx = &folds[k];
        let train_idx: Vec<usize> =
            (0..n_folds).filter(|&j| j != k).flat_map(|j| folds[j].iter().copied()).collect();
        out.train.push(subset(train, &train_idx));
        out.test.push(subset(train, test_idx));
    }
    out
}

/// Inner-CV selection plus retraining for one model family on one outer
/// training split. Returns the retrained model and a description of the
/// chosen grid point.
fn select_and_train(
    kind: ModelKind,
    train: &[LabeledExample],
    config: &CVConfig,
    inner_seed: u64,
) -> Result<(SplitModel, String), EvalError> {
    let grid = &config.grid;
    match kind {
        ModelKind::ConstantBaseline => Ok((train_baseline(train)?, String::new())),
        ModelKind::LogisticL1 => {
            let splits = inner_splits(train, config.n_inner_folds, inner_seed);
            let mut best: Option<(f64, f64)> = None; // (score, lambda_pe)
            for &lambda_pe in &grid.lambda_per_example {
                let mut score_sum = 0.0;
                for (tr, te) in splits.train.iter().zip(&splits.test) {
                    let model = train_logistic_l1(tr, lambda_pe * tr.len() as f64)?;
                    let preds = predictions_of(&model, te)?;
                    let labels: Vec<bool> = te.iter().map(|e| e.y).collect();
                    score_sum += metric_score(config.selection_metric, &preds, &labels)?;
                }
                let score = score_sum / splits.train.len() as f64;
                if best.map_or(true, |(bs, _)| score < bs) {
                    best = Some((score, lambda_pe));
                }
            }
            let (_, lambda_pe) = best.expect("non-empty grid");
            let model = train_logistic_l1(train, lambda_pe * train.len() as f64)?;
            Ok((model, format!("lambda_per_example={lambda_pe}")))
        }
        ModelKind::DecisionTree => {
            let splits = inner_splits(train, config.n_inner_folds, inner_seed);
            let mut best: Option<(f64, usize)> = None;
            for &min_leaf in &grid.min_leaf {
                let mut score_sum = 0.0;
                for (tr, te) in splits.train.iter().zip(&splits.test) {
                    let model = train_decision_tree(tr, min_leaf)?;
                    let preds = predictions_of(&model, te)?;
                    let labels: Vec<bool> = te.iter().map(|e| e.y).collect();
                    score_sum += metric_score(config.selection_metric, &preds, &labels)?;
                }
                let score = score_sum / splits.train.len() as f64;
                if best.map_or(true, |(bs, _)| score < bs) {
                    best = Some((score, min_leaf));
                }
            }
            let (_, min_leaf) = best.expect("non-empty grid");
            Ok((train_decision_tree(train, min_leaf)?, format!("min_leaf={min_leaf}")))
        }
        ModelKind::LogitBoost => {
            // boosting is stagewise, so one run at the largest iteration
            // budget scores every checkpoint of the grid at once
            let splits = inner_splits(train, config.n_inner_folds, inner_seed);
            let mut checkpoints = grid.boost_iters.clone();
            checkpoints.sort_unstable();
            checkpoints.dedup();
            let max_iters = *checkpoints.last().expect("non-empty grid");
            let mut scores = vec![0.0; checkpoints.len()];
            for (tr, te) in splits.train.iter().zip(&splits.test) {
                let model = train_logitboost(tr, max_iters, grid.boost_shrinkage)?;
                let rows: Vec<Vec<f64>> = te.iter().map(|e| e.x.clone()).collect();
                let labels: Vec<bool> = te.iter().map(|e| e.y).collect();
                let staged = staged_probabilities(&model, &rows, &checkpoints)?;
                for (c, preds) in staged.iter().enumerate() {
                    scores[c] += metric_score(config.selection_metric, preds, &labels)?;
                }
            }
            let best_idx = scores
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap().then(a.0.cmp(&b.0)))
                .map(|(i, _)| i)
                .expect("non-empty grid");
            let n_iters = checkpoints[best_idx];
            let model = train_logitboost(train, n_iters, grid.boost_shrinkage)?;
            Ok((model, format!("n_iters={n_iters}")))
        }
        ModelKind::Ensemble => unreachable!("ensemble is assembled from tree and boost models"),
    }
}

/// Run repeated nested cross-validation for the requested model kinds. For
/// each repeat x outer-fold cell, an inner stratified CV on the outer
/// training split selects each family's grid point, the model is retrained
/// on the full outer training split, and the outer test fold is scored.
/// The ensemble cell averages that cell's tree and boosting models.
pub fn nested_cv(
    data: &[LabeledExample],
    config: &CVConfig,
    kinds: &[ModelKind],
) -> Result<EvalReport, EvalError> {
    if config.n_repeats < 1 {
        return Err(EvalError::BadConfig { reason: "n_repeats must be >= 1".into() });
    }
    if config.n_outer_folds < 2 || config.n_inner_folds < 2 {
        return Err(EvalError::BadConfig { reason: "fold counts must be >= 2".into() });
    }
    if kinds.is_empty() {
        return Err(EvalError::BadConfig { reason: "no model kinds requested".into() });
    }
    config.grid.validate()?;
    if data.len() < config.n_outer_folds {
        return Err(EvalError::BadConfig {
            reason: format!("{} examples cannot fill {} folds", data.len(), config.n_outer_folds),
        });
    }
    let labels: Vec<bool> = data.iter().map(|e| e.y).collect();
    let positives = labels.iter().filter(|&&y| y).count();
    for class_count in [positives, data.len() - positives] {
        if class_count < config.n_outer_folds {
            return Err(EvalError::Stratification {
                class_count,
                folds: config.n_outer_folds,
            });
        }
    }

    let needs_members = kinds.contains(&ModelKind::Ensemble);
    let cell_ids: Vec<(usize, usize)> = (0..config.n_repeats)
        .flat_map(|r| (0..config.n_outer_folds).map(move |k| (r, k)))
        .collect();

    struct CellOutput {
        repeat: usize,
        fold: usize,
        audit: FoldAudit,
        /// per requested kind: (hyper, accuracy, log_loss, predictions,
        /// labels, importance)
        results: Vec<(ModelKind, String, f64, f64, Vec<f64>, Vec<bool>, Vec<(String, f64)>)>,
    }

    let cells: Vec<Result<CellOutput, EvalError>> = cell_ids
        .par_iter()
        .map(|&(repeat, fold)| {
            let folds =
                stratified_folds(&labels, config.n_outer_folds, mix_seed(config.seed, repeat as u64, u64::MAX));
            let test_idx = &folds[fold];
            let train_idx: Vec<usize> = (0..config.n_outer_folds)
                .filter(|&j| j != fold)
                .flat_map(|j| folds[j].iter().copied())
                .collect();
            debug_assert!({
                let t: HashSet<usize> = test_idx.iter().copied().collect();
                train_idx.iter().all(|i| !t.contains(i))
            });
            let train = subset(data, &train_idx);
            let test = subset(data, test_idx);
            let test_labels: Vec<bool> = test.iter().map(|e| e.y).collect();
            let mut sorted_train = train_idx.clone();
            sorted_train.sort_unstable();
            let audit = FoldAudit {
                repeat,
                fold,
                train_size: train_idx.len(),
                test_size: test_idx.len(),
                train_checksum: fnv1a(&sorted_train),
                test_checksum: fnv1a(test_idx),
            };

            let inner_seed = mix_seed(config.seed, repeat as u64, fold as u64);
            let mut by_kind: BTreeMap<&str, SplitModel> = BTreeMap::new();
            let mut results = Vec::new();
            for &kind in kinds {
                let (model, hyper) = match kind {
                    ModelKind::Ensemble => {
                        let tree = match by_kind.get("tree") {
                            Some(m) => m.clone(),
                            None => select_and_train(ModelKind::DecisionTree, &train, config, inner_seed)?.0,
                        };
                        let boost = match by_kind.get("boost") {
                            Some(m) => m.clone(),
                            None => select_and_train(ModelKind::LogitBoost, &train, config, inner_seed)?.0,
                        };
                        (train_ensemble(vec![tree, boost])?, "tree+boost".to_string())
                    }
                    other => {
                        let trained = select_and_train(other, &train, config, inner_seed)?;
                        match other {
                            ModelKind::DecisionTree => {
                                by_kind.insert("tree", trained.0.clone());
                            }
                            ModelKind::LogitBoost => {
                                by_kind.insert("boost", trained.0.clone());
                            }
                            _ => {}
                        }
                        trained
                    }
                };
                let preds = predictions_of(&model, &test)?;
                let acc = accuracy(&preds, &test_labels)?;
                let ll = log_loss(&preds, &test_labels)?;
                let imp = feature_importance(&model);
                results.push((kind, hyper, acc, ll, preds, test_labels.clone(), imp));
            }
            let _ = needs_members;
            Ok(CellOutput { repeat, fold, audit, results })
        })
        .collect();

    let mut cell_records = Vec::new();
    let mut fold_audit = Vec::new();
    let mut pooled: BTreeMap<usize, (Vec<f64>, Vec<bool>)> = BTreeMap::new();
    let mut acc_by_kind: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut ll_by_kind: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut imp_by_kind: BTreeMap<usize, BTreeMap<String, f64>> = BTreeMap::new();

    for cell in cells {
        let cell = cell?;
        fold_audit.push(cell.audit);
        for (ki, (kind, hyper, acc, ll, preds, tlabels, imp)) in cell.results.into_iter().enumerate() {
            cell_records.push(CellRecord {
                repeat: cell.repeat,
                fold: cell.fold,
                kind,
                hyperparameter: hyper,
                accuracy: acc,
                log_loss: ll,
            });
            acc_by_kind.entry(ki).or_default().push(acc);
            ll_by_kind.entry(ki).or_default().push(ll);
            let pool = pooled.entry(ki).or_default();
            pool.0.extend(preds);
            pool.1.extend(tlabels);
            let sink = imp_by_kind.entry(ki).or_default();
            for (name, v) in imp {
                *sink.entry(name).or_insert(0.0) += v;
            }
        }
    }

    let n_cells = (config.n_repeats * config.n_outer_folds) as f64;
    let mean_std = |vals: &[f64]| -> (f64, f64) {
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        let std = if vals.len() > 1 {
            (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (vals.len() - 1) as f64)
                .sqrt()
        } else {
            0.0
        };
        (mean, std)
    };

    let thresholds = default_thresholds();
    let mut summaries = Vec::new();
    let mut curves = Vec::new();
    let mut importances = Vec::new();
    for (ki, &kind) in kinds.iter().enumerate() {
        let (mean_accuracy, std_accuracy) = mean_std(&acc_by_kind[&ki]);
        let (mean_log_loss, std_log_loss) = mean_std(&ll_by_kind[&ki]);
        summaries.push(ModelSummary { kind, mean_accuracy, std_accuracy, mean_log_loss, std_log_loss });
        let (preds, plabels) = &pooled[&ki];
        curves.push(ModelCurve { kind, points: coverage_accuracy_curve(preds, plabels, &thresholds)? });
        let mut mean_importance: Vec<(String, f64)> = imp_by_kind[&ki]
            .iter()
            .map(|(name, sum)| (name.clone(), sum / n_cells))
            .collect();
        mean_importance.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
        importances.push(ModelImportance { kind, mean_importance });
    }

    Ok(EvalReport {
        n_examples: data.len(),
        positive_share: positives as f64 / data.len() as f64,
        n_repeats: config.n_repeats,
        n_outer_folds: config.n_outer_folds,
        n_inner_folds: config.n_inner_folds,
        seed: config.seed,
        summaries,
        cells: cell_records,
        curves,
        importances,
        fold_audit,
    })
}

// ---------------------------------------------------------------------------
// Single-item partition
// ---------------------------------------------------------------------------

/// What counts as a "single item order" excluded from modeling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SingleItemCriterion {
    /// One line with quantity one: a single unit can never split. A
    /// one-line multi-unit order stays evaluable because its quantity can
    /// split across nodes.
    OneLineQtyOne,
    /// One line regardless of quantity.
    OneLineAnyQty,
}

impl Default for SingleItemCriterion {
    fn default() -> Self {
        SingleItemCriterion::OneLineQtyOne
    }
}

/// The order-accounting shares reported alongside every partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSummary {
    pub total_orders: usize,
    pub not_split_share: f64,
    pub single_item_count: usize,
    pub single_item_share: f64,
    pub multi_item_count: usize,
    pub multi_item_not_split: usize,
    /// Absent when there are no multi-item orders to evaluate on.
    pub multi_item_not_split_share: Option<f64>,
    /// Whether evaluation and training are possible at all.
    pub evaluable: bool,
}

/// Index partition of an order stream into the single-item subset (removed
/// from modeling) and the multi-item subset (everything downstream trains
/// and evaluates on).
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    pub single: Vec<usize>,
    pub multi: Vec<usize>,
    pub summary: PartitionSummary,
}

pub fn single_item_partition(
    orders: &[Order],
    labels: &[SplitLabel],
    criterion: SingleItemCriterion,
) -> Result<Partition, EvalError> {
    let by_id: HashMap<&str, bool> = labels.iter().map(|l| (l.order_id.as_str(), l.split)).collect();
    let mut single = Vec::new();
    let mut multi = Vec::new();
    let mut not_split_total = 0usize;
    let mut multi_not_split = 0usize;
    for (i, order) in orders.iter().enumerate() {
        let split = by_id
            .get(order.order_id.as_str())
            .copied()
            .ok_or_else(|| EvalError::MissingLabel { order_id: order.order_id.clone() })?;
        let is_single = match criterion {
            SingleItemCriterion::OneLineQtyOne => order.is_single_unit(),
            SingleItemCriterion::OneLineAnyQty => order.lines.len() == 1,
        };
        if !split {
            not_split_total += 1;
        }
        if is_single {
            single.push(i);
        } else {
            multi.push(i);
            if !split {
                multi_not_split += 1;
            }
        }
    }
    let total = orders.len();
    let summary = PartitionSummary {
        total_orders: total,
        not_split_share: if total > 0 { not_split_total as f64 / total as f64 } else { 0.0 },
        single_item_count: single.len(),
        single_item_share: if total > 0 { single.len() as f64 / total as f64 } else { 0.0 },
        multi_item_count: multi.len(),
        multi_item_not_split: multi_not_split,
        multi_item_not_split_share: if multi.is_empty() {
            None
        } else {
            Some(multi_not_split as f64 / multi.len() as f64)
        },
        evaluable: !multi.is_empty(),
    };
    Ok(Partition { single, multi, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{OrderLine, Point};

    #[test]
    fn accuracy_counts_matches_with_strict_half() {
        assert_eq!(accuracy(&[0.9, 0.2, 0.6], &[true, false, false]).unwrap(), 2.0 / 3.0);
        assert_eq!(accuracy(&[0.5], &[false]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1.0, 0.0, 1.0], &[true, false, true]).unwrap(), 1.0);
    }

    #[test]
    fn log_loss_analytic_values() {
        assert!((log_loss(&[0.5], &[true]).unwrap() - std::f64::consts::LN_2).abs() < 1e-9);
        assert!(log_loss(&[1.0 - 1e-12], &[true]).unwrap() <= 1e-11);
        let expected = (-(0.8f64).ln() - (0.2f64).ln()) / 2.0;
        assert!((log_loss(&[0.8, 0.8], &[true, false]).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn log_loss_is_finite_even_for_hard_zero_one_predictions() {
        let ll = log_loss(&[0.0, 1.0], &[true, false]).unwrap();
        assert!(ll.is_finite());
    }

    #[test]
    fn metrics_reject_shape_mismatch() {
        assert!(matches!(
            accuracy(&[0.5, 0.5], &[true]),
            Err(EvalError::ShapeMismatch { left: 2, right: 1 })
        ));
        assert!(matches!(
            log_loss(&[0.5], &[true, false]),
            Err(EvalError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn curve_at_half_covers_everything() {
        let preds = [0.9, 0.2, 0.6];
        let labels = [true, false, false];
        let pts = coverage_accuracy_curve(&preds, &labels, &[0.5]).unwrap();
        assert_eq!(pts[0].coverage, 1.0);
        assert_eq!(pts[0].accuracy, Some(accuracy(&preds, &labels).unwrap()));
    }

    #[test]
    fn curve_counts_confidence_not_probability() {
        // confidences are 0.99, 0.6, 0.98
        let pts =
            coverage_accuracy_curve(&[0.99, 0.6, 0.02], &[true, false, false], &[0.97]).unwrap();
        assert!((pts[0].coverage - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_confident_predictor_has_full_coverage_everywhere() {
        let preds = [1.0 - 1e-12, 1e-12, 1.0 - 1e-12];
        let labels = [true, false, true];
        let pts = coverage_accuracy_curve(&preds, &labels, &default_thresholds()).unwrap();
        for p in pts {
            assert_eq!(p.coverage, 1.0);
            assert_eq!(p.accuracy, Some(1.0));
        }
    }

    #[test]
    fn coverage_is_non_increasing_in_threshold() {
        let preds: Vec<f64> = (0..200).map(|i| (i as f64 + 0.5) / 201.0).collect();
        let labels: Vec<bool> = (0..200).map(|i| i % 3 == 0).collect();
        let pts = coverage_accuracy_curve(&preds, &labels, &default_thresholds()).unwrap();
        for w in pts.windows(2) {
            assert!(w[1].coverage <= w[0].coverage);
        }
    }

    #[test]
    fn curve_rejects_bad_thresholds() {
        assert!(matches!(
            coverage_accuracy_curve(&[0.5], &[true], &[0.4]),
            Err(EvalError::ThresholdOutOfRange { .. })
        ));
        assert!(matches!(
            coverage_accuracy_curve(&[0.5], &[true], &[0.9, 0.8]),
            Err(EvalError::UnsortedThresholds)
        ));
    }

    #[test]
    fn stratified_folds_are_disjoint_cover_and_balanced() {
        let labels: Vec<bool> = (0..103).map(|i| i % 3 == 0).collect();
        let folds = stratified_folds(&labels, 10, 7);
        let mut seen = HashSet::new();
        for fold in &folds {
            for &i in fold {
                assert!(seen.insert(i), "index {i} in two folds");
            }
        }
        assert_eq!(seen.len(), labels.len());
        let pos_total = labels.iter().filter(|&&y| y).count();
        for fold in &folds {
            let pos = fold.iter().filter(|&&i| labels[i]).count();
            let expected = pos_total as f64 * fold.len() as f64 / labels.len() as f64;
            assert!(
                (pos as f64 - expected).abs() <= 1.0 + 1e-9,
                "fold has {pos} positives, expected about {expected}"
            );
        }
    }

    fn exact_dataset() -> Vec<LabeledExample> {
        // 200 examples, 80 positive: folds of 8 positives + 12 negatives
        (0..200)
            .map(|i| LabeledExample {
                order_id: format!("e{i}"),
                x: vec![i as f64, (i * 7 % 13) as f64],
                y: i < 80,
            })
            .collect()
    }

    #[test]
    fn baseline_cells_hit_majority_rate_and_entropy() {
        let data = exact_dataset();
        let config = CVConfig { n_repeats: 1, ..Default::default() };
        let report = nested_cv(&data, &config, &[ModelKind::ConstantBaseline]).unwrap();
        let entropy = -(0.4f64.ln() * 0.4 + 0.6f64.ln() * 0.6);
        let summary = &report.summaries[0];
        assert!((summary.mean_accuracy - 0.6).abs() < 1e-12);
        assert!((summary.mean_log_loss - entropy).abs() < 1e-9);
    }

    #[test]
    fn protocol_produces_exactly_repeats_times_folds_cells_per_kind() {
        let data = exact_dataset();
        let config = CVConfig { n_repeats: 5, ..Default::default() };
        let report =
            nested_cv(&data, &config, &[ModelKind::ConstantBaseline]).unwrap();
        assert_eq!(report.cells.len(), 50);
        assert_eq!(report.fold_audit.len(), 50);
    }

    #[test]
    fn report_is_deterministic_under_fixed_seed() {
        let data = exact_dataset();
        let config = CVConfig {
            n_repeats: 2,
            grid: HyperParamGrid {
                lambda_per_example: vec![0.01],
                min_leaf: vec![10],
                boost_iters: vec![10],
                boost_shrinkage: 0.1,
            },
            ..Default::default()
        };
        let kinds = [ModelKind::ConstantBaseline, ModelKind::DecisionTree];
        let a = nested_cv(&data, &config, &kinds).unwrap();
        let b = nested_cv(&data, &config, &kinds).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn single_class_data_is_a_stratification_error() {
        let data: Vec<LabeledExample> = (0..30)
            .map(|i| LabeledExample { order_id: format!("e{i}"), x: vec![i as f64], y: false })
            .collect();
        let config = CVConfig::default();
        assert!(matches!(
            nested_cv(&data, &config, &[ModelKind::ConstantBaseline]),
            Err(EvalError::Stratification { class_count: 0, .. })
        ));
    }

    fn order(id: &str, lines: Vec<(&str, u32)>) -> Order {
        Order {
            order_id: id.into(),
            destination: Point::new(0.0, 0.0),
            lines: lines
                .into_iter()
                .map(|(item, quantity)| OrderLine { item_id: item.into(), quantity })
                .collect(),
        }
    }

    fn label(id: &str, split: bool) -> SplitLabel {
        SplitLabel { order_id: id.into(), split, nodes_used: 1 + split as u32, objective: 0.0 }
    }

    #[test]
    fn partition_separates_single_units_and_counts_shares() {
        let orders = vec![
            order("a", vec![("x", 1)]),
            order("b", vec![("x", 3)]),
            order("c", vec![("x", 1), ("y", 1)]),
            order("d", vec![("x", 2), ("y", 1)]),
        ];
        let labels = vec![label("a", false), label("b", true), label("c", false), label("d", true)];
        let p = single_item_partition(&orders, &labels, SingleItemCriterion::OneLineQtyOne).unwrap();
        assert_eq!(p.single, vec![0]);
        assert_eq!(p.multi, vec![1, 2, 3]);
        assert_eq!(p.summary.single_item_share, 0.25);
        assert_eq!(p.summary.multi_item_not_split_share, Some(1.0 / 3.0));
        assert!(p.summary.evaluable);

        // under the one-line reading, the qty-3 order is single-item too
        let p = single_item_partition(&orders, &labels, SingleItemCriterion::OneLineAnyQty).unwrap();
        assert_eq!(p.single, vec![0, 1]);
        assert_eq!(p.multi, vec![2, 3]);
    }

    #[test]
    fn all_single_stream_is_flagged_unevaluable() {
        let orders = vec![order("a", vec![("x", 1)]), order("b", vec![("y", 1)])];
        let labels = vec![label("a", false), label("b", false)];
        let p = single_item_partition(&orders, &labels, SingleItemCriterion::OneLineQtyOne).unwrap();
        assert!(p.multi.is_empty());
        assert!(!p.summary.evaluable);
        assert_eq!(p.summary.multi_item_not_split_share, None);
    }
}
