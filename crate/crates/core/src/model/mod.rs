//! From-scratch probabilistic split classifiers: L1-regularized logistic
//! regression, a CART decision tree, LogitBoost over stumps, and the
//! probability-averaging ensemble, with serialization, feature importances,
//! and rule extraction for trees.

mod boost;
mod logistic;
mod tree;

pub use boost::{staged_probabilities, train_logitboost, train_logitboost_traced};
pub use logistic::{logistic_smooth_loss_and_grad, train_logistic_l1};
pub use tree::{extract_rules, train_decision_tree, Rule};

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::features::FeatureVector;

/// Predicted probabilities are clamped into `[PROB_EPS, 1 - PROB_EPS]` so
/// log loss stays finite everywhere.
pub const PROB_EPS: f64 = 1e-12;

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Numerically stable logistic function.
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// One training example: a feature vector with its split label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub order_id: String,
    pub x: Vec<f64>,
    pub y: bool,
}

/// Per-feature (mean, stddev) captured at training time so inference needs
/// no training data. Only the logistic model consumes it; tree-based models
/// split on raw values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub stddev: Vec<f64>,
}

impl Standardization {
    pub fn identity(dim: usize) -> Self {
        Standardization { mean: vec![0.0; dim], stddev: vec![1.0; dim] }
    }

    pub fn fit(rows: &[&[f64]]) -> Self {
        let n = rows.len().max(1) as f64;
        let dim = rows.first().map_or(0, |r| r.len());
        let mut mean = vec![0.0; dim];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row.iter()) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for row in rows {
            for ((s, v), m) in var.iter_mut().zip(row.iter()).zip(mean.iter()) {
                let d = v - m;
                *s += d * d;
            }
        }
        let stddev = var.into_iter().map(|s| (s / n).sqrt()).collect();
        Standardization { mean, stddev }
    }

    /// Standardize one raw vector; constant columns map to zero.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.mean.iter().zip(self.stddev.iter()))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { 0.0 })
            .collect()
    }
}

/// Which classifier family a model belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    /// Predicts the training base rate for every input; a sanity floor.
    ConstantBaseline,
    LogisticL1,
    DecisionTree,
    LogitBoost,
    Ensemble,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::ConstantBaseline => "baseline",
            ModelKind::LogisticL1 => "logistic_l1",
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::LogitBoost => "logitboost",
            ModelKind::Ensemble => "ensemble",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One node of a trained CART tree, arena-indexed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    /// `x[feature] <= threshold` goes left, else right.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    /// Laplace-smoothed split probability with the training support.
    Leaf { probability: f64, support: usize, positives: usize },
}

/// One LogitBoost base learner. Leaf values already include the Newton
/// half-step and shrinkage, so prediction just sums stump outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stump {
    pub feature: usize,
    pub threshold: f64,
    pub left_value: f64,
    pub right_value: f64,
}

impl Stump {
    pub fn value(&self, x: &[f64]) -> f64 {
        if x[self.feature] <= self.threshold {
            self.left_value
        } else {
            self.right_value
        }
    }
}

/// Kind-specific parameters of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelParams {
    ConstantBaseline {
        probability: f64,
    },
    LogisticL1 {
        /// Weights in standardized feature space.
        weights: Vec<f64>,
        intercept: f64,
    },
    DecisionTree {
        nodes: Vec<TreeNode>,
        /// Raw per-feature impurity decrease accumulated during training.
        importance: Vec<f64>,
    },
    LogitBoost {
        /// Additive score prior; probabilities follow p = sigmoid(2F).
        prior: f64,
        stumps: Vec<Stump>,
        /// Raw per-feature weighted squared-error decrease.
        importance: Vec<f64>,
    },
    Ensemble {
        members: Vec<SplitModel>,
    },
}

/// A trained probabilistic split classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitModel {
    pub kind: ModelKind,
    pub catalog_version: String,
    pub n_features: usize,
    pub standardization: Standardization,
    pub hyperparameters: BTreeMap<String, String>,
    pub params: ModelParams,
}

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("training data contains a single class only")]
    SingleClass,
    #[error("training needs at least {needed} examples, got {got}")]
    TooFewExamples { needed: usize, got: usize },
    #[error("training rows disagree on feature count")]
    RaggedRows,
    #[error("invalid hyperparameter {name}: {reason}")]
    InvalidHyperparameter { name: &'static str, reason: String },
    #[error("feature vector has {got} values, model expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("ensemble members disagree on catalog version ('{first}' vs '{other}')")]
    MixedCatalogs { first: String, other: String },
    #[error("ensemble needs at least one member")]
    EmptyEnsemble,
    #[error("expected a {expected} model, got {got}")]
    WrongKind { expected: ModelKind, got: ModelKind },
    #[error("model file {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("model file {path} parse error at line {line}, column {column}: {detail}")]
    Parse { path: String, line: usize, column: usize, detail: String },
    #[error("model file {path} has format version {got}, expected {expected}")]
    VersionMismatch { path: String, expected: u32, got: u32 },
}

/// Anything that can turn a feature vector into a split probability. The
/// router is generic over this so tests can plug in oracle predictors.
pub trait SplitPredictor {
    fn predict_proba(&self, x: &FeatureVector) -> Result<f64, ModelError>;
    fn catalog_version(&self) -> &str;
}

impl SplitPredictor for SplitModel {
    fn predict_proba(&self, x: &FeatureVector) -> Result<f64, ModelError> {
        predict(self, x)
    }

    fn catalog_version(&self) -> &str {
        &self.catalog_version
    }
}

fn predict_raw(model: &SplitModel, raw: &[f64]) -> f64 {
    match &model.params {
        ModelParams::ConstantBaseline { probability } => *probability,
        ModelParams::LogisticL1 { weights, intercept } => {
            let std = model.standardization.apply(raw);
            let z: f64 = std.iter().zip(weights).map(|(v, w)| v * w).sum::<f64>() + intercept;
            sigmoid(z)
        }
        ModelParams::DecisionTree { nodes, .. } => {
            let mut at = 0usize;
            loop {
                match &nodes[at] {
                    TreeNode::Leaf { probability, .. } => break *probability,
                    TreeNode::Split { feature, threshold, left, right } => {
                        at = if raw[*feature] <= *threshold { *left } else { *right };
                    }
                }
            }
        }
        ModelParams::LogitBoost { prior, stumps, .. } => {
            let f: f64 = prior + stumps.iter().map(|s| s.value(raw)).sum::<f64>();
            sigmoid(2.0 * f)
        }
        ModelParams::Ensemble { members } => {
            let sum: f64 = members.iter().map(|m| clamp_prob(predict_raw(m, raw))).sum();
            sum / members.len() as f64
        }
    }
}

/// Predict the split probability for one feature vector, clamped into
/// `[PROB_EPS, 1 - PROB_EPS]`.
pub fn predict(model: &SplitModel, x: &FeatureVector) -> Result<f64, ModelError> {
    if x.values.len() != model.n_features {
        return Err(ModelError::DimensionMismatch {
            expected: model.n_features,
            got: x.values.len(),
        });
    }
    Ok(clamp_prob(predict_raw(model, &x.values)))
}

/// Average the members' predicted probabilities. Members may be of any kind
/// but must share a catalog version.
pub fn train_ensemble(members: Vec<SplitModel>) -> Result<SplitModel, ModelError> {
    let first = members.first().ok_or(ModelError::EmptyEnsemble)?;
    let catalog_version = first.catalog_version.clone();
    let n_features = first.n_features;
    for m in &members {
        if m.catalog_version != catalog_version {
            return Err(ModelError::MixedCatalogs {
                first: catalog_version,
                other: m.catalog_version.clone(),
            });
        }
        if m.n_features != n_features {
            return Err(ModelError::DimensionMismatch { expected: n_features, got: m.n_features });
        }
    }
    let mut hyperparameters = BTreeMap::new();
    hyperparameters.insert(
        "members".to_string(),
        members.iter().map(|m| m.kind.as_str()).collect::<Vec<_>>().join("+"),
    );
    Ok(SplitModel {
        kind: ModelKind::Ensemble,
        catalog_version,
        n_features,
        standardization: Standardization::identity(n_features),
        hyperparameters,
        params: ModelParams::Ensemble { members },
    })
}

/// Fit the constant base-rate predictor.
pub fn train_baseline(data: &[LabeledExample]) -> Result<SplitModel, ModelError> {
    if data.is_empty() {
        return Err(ModelError::TooFewExamples { needed: 1, got: 0 });
    }
    let dim = data[0].x.len();
    let rate = data.iter().filter(|e| e.y).count() as f64 / data.len() as f64;
    Ok(SplitModel {
        kind: ModelKind::ConstantBaseline,
        catalog_version: crate::features::CATALOG_VERSION.to_string(),
        n_features: dim,
        standardization: Standardization::identity(dim),
        hyperparameters: BTreeMap::new(),
        params: ModelParams::ConstantBaseline { probability: clamp_prob(rate) },
    })
}

fn feature_name(idx: usize, n_features: usize) -> String {
    let catalog = crate::features::FeatureCatalog::canonical();
    if n_features == catalog.len() {
        catalog.descriptors[idx].name.to_string()
    } else {
        format!("f{idx}")
    }
}

fn normalized(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    if total > 0.0 {
        raw.iter().map(|v| v / total).collect()
    } else {
        vec![0.0; raw.len()]
    }
}

fn raw_importance(model: &SplitModel) -> Vec<f64> {
    match &model.params {
        ModelParams::ConstantBaseline { .. } => vec![0.0; model.n_features],
        ModelParams::LogisticL1 { weights, .. } => weights.iter().map(|w| w.abs()).collect(),
        ModelParams::DecisionTree { importance, .. } => importance.clone(),
        ModelParams::LogitBoost { importance, .. } => importance.clone(),
        ModelParams::Ensemble { members } => {
            let mut acc = vec![0.0; model.n_features];
            for m in members {
                for (a, v) in acc.iter_mut().zip(normalized(&raw_importance(m))) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|v| *v /= members.len() as f64);
            acc
        }
    }
}

/// Per-feature importance, normalized to sum to one (all zeros when the
/// model is constant), sorted descending with ties broken by feature order.
pub fn feature_importance(model: &SplitModel) -> Vec<(String, f64)> {
    let norm = normalized(&raw_importance(model));
    let mut named: Vec<(usize, f64)> = norm.into_iter().enumerate().collect();
    named.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    named
        .into_iter()
        .map(|(idx, v)| (feature_name(idx, model.n_features), v))
        .collect()
}

const MODEL_FORMAT: &str = "splitcut-model";
const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct SavedModel {
    format: String,
    format_version: u32,
    model: SplitModel,
}

/// Serialize a model to versioned JSON, written atomically.
pub fn save_model(model: &SplitModel, path: &Path) -> Result<(), ModelError> {
    let saved = SavedModel {
        format: MODEL_FORMAT.to_string(),
        format_version: MODEL_FORMAT_VERSION,
        model: model.clone(),
    };
    let body = serde_json::to_string_pretty(&saved).expect("model serializes");
    crate::io::write_atomic(path, body.as_bytes())
        .map_err(|e| ModelError::Io { path: path.display().to_string(), source: e })
}

/// Load a model file, rejecting unknown formats and version mismatches.
/// A malformed or truncated file yields a parse error with its location and
/// no partial model.
pub fn load_model(path: &Path) -> Result<SplitModel, ModelError> {
    let display = path.display().to_string();
    let mut body = String::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_string(&mut body))
        .map_err(|e| ModelError::Io { path: display.clone(), source: e })?;
    let saved: SavedModel = serde_json::from_str(&body).map_err(|e| ModelError::Parse {
        path: display.clone(),
        line: e.line(),
        column: e.column(),
        detail: e.to_string(),
    })?;
    if saved.format != MODEL_FORMAT {
        return Err(ModelError::Parse {
            path: display,
            line: 1,
            column: 1,
            detail: format!("not a {MODEL_FORMAT} file (format '{}')", saved.format),
        });
    }
    if saved.format_version != MODEL_FORMAT_VERSION {
        return Err(ModelError::VersionMismatch {
            path: display,
            expected: MODEL_FORMAT_VERSION,
            got: saved.format_version,
        });
    }
    Ok(saved.model)
}
