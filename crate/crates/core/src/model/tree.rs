//! CART decision tree: greedy binary splits on (feature, threshold)
//! maximizing Gini impurity decrease, midpoint thresholds, Laplace-smoothed
//! leaf probabilities, and root-to-leaf rule extraction.

use std::collections::BTreeMap;

use super::{LabeledExample, ModelError, ModelKind, ModelParams, SplitModel, Standardization, TreeNode};

fn gini(pos: usize, total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let p = pos as f64 / total as f64;
    2.0 * p * (1.0 - p)
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
    /// Indices (into the node's index list) going left under `x <= threshold`.
    left_mask: Vec<bool>,
    left_count: usize,
}

/// Scan every feature for the highest-gain split with both children at
/// least `min_leaf` strong. Ties break toward the lowest feature index,
/// then the lowest threshold.
fn best_split(
    data: &[LabeledExample],
    indices: &[usize],
    min_leaf: usize,
) -> Option<BestSplit> {
    let m = indices.len();
    let pos_total = indices.iter().filter(|&&i| data[*(&i)].y).count();
    if pos_total == 0 || pos_total == m {
        return None; // pure
    }
    let parent = gini(pos_total, m);
    let dim = data[indices[0]].x.len();

    let mut best: Option<(f64, usize, f64)> = None;
    for feature in 0..dim {
        let mut order: Vec<usize> = indices.to_vec();
        order.sort_by(|&a, &b| {
            data[a].x[feature]
                .partial_cmp(&data[b].x[feature])
                .expect("finite feature values")
        });
        let mut pos_left = 0usize;
        for split_at in 1..m {
            if data[order[split_at - 1]].y {
                pos_left += 1;
            }
            let lo = data[order[split_at - 1]].x[feature];
            let hi = data[order[split_at]].x[feature];
            if lo == hi {
                continue; // not between distinct values
            }
            if split_at < min_leaf || m - split_at < min_leaf {
                continue;
            }
            let n_left = split_at;
            let n_right = m - split_at;
            let gain = parent
                - (n_left as f64 / m as f64) * gini(pos_left, n_left)
                - (n_right as f64 / m as f64) * gini(pos_total - pos_left, n_right);
            if gain <= 0.0 {
                continue;
            }
            let mid = lo + (hi - lo) / 2.0;
            // keep lo <= threshold < hi so `x <= threshold` reproduces this
            // partition even when the midpoint rounds onto an endpoint
            let threshold = if mid < hi { mid } else { lo };
            let better = match best {
                None => true,
                Some((bg, bf, bt)) => {
                    gain > bg || (gain == bg && (feature < bf || (feature == bf && threshold < bt)))
                }
            };
            if better {
                best = Some((gain, feature, threshold));
            }
        }
    }

    best.map(|(gain, feature, threshold)| {
        let left_mask: Vec<bool> =
            indices.iter().map(|&i| data[i].x[feature] <= threshold).collect();
        let left_count = left_mask.iter().filter(|&&b| b).count();
        BestSplit { gain, feature, threshold, left_mask, left_count }
    })
}

/// Train a CART tree. Growth stops at pure nodes, nodes smaller than
/// `2 * min_leaf`, or when no split has positive Gini gain; leaves carry
/// Laplace-smoothed probabilities `(pos + 1) / (count + 2)`.
pub fn train_decision_tree(
    data: &[LabeledExample],
    min_leaf: usize,
) -> Result<SplitModel, ModelError> {
    if data.is_empty() {
        return Err(ModelError::TooFewExamples { needed: 1, got: 0 });
    }
    let dim = data[0].x.len();
    if data.iter().any(|e| e.x.len() != dim) {
        return Err(ModelError::RaggedRows);
    }
    let min_leaf = min_leaf.max(1);
    let n_total = data.len() as f64;

    let mut nodes: Vec<TreeNode> = Vec::new();
    let mut importance = vec![0.0; dim];
    // worklist of (arena slot, member indices); explicit stack keeps deep
    // trees off the call stack
    let mut work: Vec<(usize, Vec<usize>)> = Vec::new();
    nodes.push(TreeNode::Leaf { probability: 0.0, support: 0, positives: 0 });
    work.push((0, (0..data.len()).collect()));

    while let Some((slot, indices)) = work.pop() {
        let m = indices.len();
        let pos = indices.iter().filter(|&&i| data[i].y).count();

        let split = if m >= 2 * min_leaf { best_split(data, &indices, min_leaf) } else { None };
        match split {
            Some(s) => {
                importance[s.feature] += (m as f64 / n_total) * s.gain;
                let mut left = Vec::with_capacity(s.left_count);
                let mut right = Vec::with_capacity(m - s.left_count);
                for (&i, &goes_left) in indices.iter().zip(&s.left_mask) {
                    if goes_left {
                        left.push(i);
                    } else {
                        right.push(i);
                    }
                }
                let left_slot = nodes.len();
                nodes.push(TreeNode::Leaf { probability: 0.0, support: 0, positives: 0 });
                let right_slot = nodes.len();
                nodes.push(TreeNode::Leaf { probability: 0.0, support: 0, positives: 0 });
                nodes[slot] = TreeNode::Split {
                    feature: s.feature,
                    threshold: s.threshold,
                    left: left_slot,
                    right: right_slot,
                };
                work.push((right_slot, right));
                work.push((left_slot, left));
            }
            None => {
                nodes[slot] = TreeNode::Leaf {
                    probability: (pos as f64 + 1.0) / (m as f64 + 2.0),
                    support: m,
                    positives: pos,
                };
            }
        }
    }

    let raw: Vec<&[f64]> = data.iter().map(|e| e.x.as_slice()).collect();
    let mut hyperparameters = BTreeMap::new();
    hyperparameters.insert("min_leaf".to_string(), min_leaf.to_string());
    Ok(SplitModel {
        kind: ModelKind::DecisionTree,
        catalog_version: crate::features::CATALOG_VERSION.to_string(),
        n_features: dim,
        standardization: Standardization::fit(&raw),
        hyperparameters,
        params: ModelParams::DecisionTree { nodes, importance },
    })
}

/// One root-to-leaf rule: the conjunction of path conditions with the
/// leaf's probability and training support.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub conditions: Vec<String>,
    pub probability: f64,
    pub support: usize,
}

impl std::fmt::Display for Rule {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.conditions.is_empty() {
            write!(f, "always: p(split) = {:.4} (support {})", self.probability, self.support)
        } else {
            write!(
                f,
                "if {} then p(split) = {:.4} (support {})",
                self.conditions.join(" and "),
                self.probability,
                self.support
            )
        }
    }
}

/// Read the tree out as one rule per leaf, conditions in path order.
pub fn extract_rules(model: &SplitModel) -> Result<Vec<Rule>, ModelError> {
    let nodes = match &model.params {
        ModelParams::DecisionTree { nodes, .. } => nodes,
        _ => {
            return Err(ModelError::WrongKind {
                expected: ModelKind::DecisionTree,
                got: model.kind,
            })
        }
    };
    let name = |feature: usize| super::feature_name(feature, model.n_features);

    let mut rules = Vec::new();
    let mut stack: Vec<(usize, Vec<String>)> = vec![(0, Vec::new())];
    while let Some((at, conditions)) = stack.pop() {
        match &nodes[at] {
            TreeNode::Leaf { probability, support, .. } => {
                rules.push(Rule { conditions, probability: *probability, support: *support });
            }
            TreeNode::Split { feature, threshold, left, right } => {
                let mut right_conditions = conditions.clone();
                right_conditions.push(format!("{} > {}", name(*feature), threshold));
                stack.push((*right, right_conditions));
                let mut left_conditions = conditions;
                left_conditions.push(format!("{} <= {}", name(*feature), threshold));
                stack.push((*left, left_conditions));
            }
        }
    }
    // stack order yields left-most leaf first already; keep it stable
    Ok(rules)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use crate::model::{feature_importance, predict, test_util};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn example(id: usize, x: Vec<f64>, y: bool) -> LabeledExample {
        LabeledExample { order_id: format!("e{id}"), x, y }
    }

    fn prob(model: &SplitModel, x: Vec<f64>) -> f64 {
        predict(model, &FeatureVector { order_id: "q".into(), values: x }).unwrap()
    }

    #[test]
    fn pure_labels_make_a_single_laplace_leaf() {
        let data: Vec<_> = (0..5).map(|i| example(i, vec![i as f64], true)).collect();
        let model = train_decision_tree(&data, 1).unwrap();
        match &model.params {
            ModelParams::DecisionTree { nodes, .. } => assert_eq!(nodes.len(), 1),
            _ => unreachable!(),
        }
        assert!((prob(&model, vec![100.0]) - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn one_dimensional_step_function_is_learned_exactly() {
        let data = vec![
            example(0, vec![0.0], false),
            example(1, vec![0.0], false),
            example(2, vec![1.0], true),
            example(3, vec![1.0], true),
        ];
        let model = train_decision_tree(&data, 1).unwrap();
        match &model.params {
            ModelParams::DecisionTree { nodes, .. } => match nodes[0] {
                TreeNode::Split { feature, threshold, .. } => {
                    assert_eq!(feature, 0);
                    assert_eq!(threshold, 0.5);
                }
                _ => panic!("root should split"),
            },
            _ => unreachable!(),
        }
        assert!(prob(&model, vec![0.0]) < 0.5);
        assert!(prob(&model, vec![1.0]) > 0.5);
    }

    #[test]
    fn consistent_dataset_replays_perfectly_with_min_leaf_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let data = test_util::random_dataset(&mut rng, 500, 3);
        let model = train_decision_tree(&data, 1).unwrap();
        for e in &data {
            assert_eq!(prob(&model, e.x.clone()) > 0.5, e.y);
        }
    }

    #[test]
    fn min_leaf_bounds_leaf_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = test_util::random_dataset(&mut rng, 300, 2);
        let model = train_decision_tree(&data, 20).unwrap();
        let rules = extract_rules(&model).unwrap();
        for rule in &rules {
            assert!(rule.support >= 20, "leaf with support {}", rule.support);
        }
    }

    #[test]
    fn single_split_tree_attributes_all_importance_to_that_feature() {
        let data = vec![
            example(0, vec![0.0, 7.0], false),
            example(1, vec![0.0, 3.0], false),
            example(2, vec![1.0, 7.0], true),
            example(3, vec![1.0, 3.0], true),
        ];
        let model = train_decision_tree(&data, 1).unwrap();
        let imp = feature_importance(&model);
        assert_eq!(imp[0].1, 1.0);
        assert_eq!(imp[1].1, 0.0);
    }

    #[test]
    fn rule_count_equals_leaf_count_and_depth_one_is_complementary() {
        let data = vec![
            example(0, vec![0.0], false),
            example(1, vec![1.0], true),
        ];
        let model = train_decision_tree(&data, 1).unwrap();
        let rules = extract_rules(&model).unwrap();
        assert_eq!(rules.len(), 2);
        assert_eq!(rules[0].conditions.len(), 1);
        assert_eq!(rules[1].conditions.len(), 1);
        assert!(rules[0].conditions[0].contains("<="));
        assert!(rules[1].conditions[0].contains('>'));

        let single: Vec<_> = (0..4).map(|i| example(i, vec![0.5], true)).collect();
        let stump = train_decision_tree(&single, 1).unwrap();
        let rules = extract_rules(&stump).unwrap();
        assert_eq!(rules.len(), 1);
        assert!(rules[0].conditions.is_empty());
    }

    #[test]
    fn rules_are_rejected_for_other_kinds() {
        let data = vec![example(0, vec![0.0], true), example(1, vec![1.0], false)];
        let model = crate::model::train_baseline(&data).unwrap();
        assert!(matches!(extract_rules(&model), Err(ModelError::WrongKind { .. })));
    }

    #[test]
    fn monotone_transform_of_a_feature_preserves_predictions() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let data = test_util::random_dataset(&mut rng, 200, 2);
        let cubed: Vec<LabeledExample> = data
            .iter()
            .map(|e| LabeledExample {
                order_id: e.order_id.clone(),
                x: vec![e.x[0] * e.x[0] * e.x[0], e.x[1]],
                y: e.y,
            })
            .collect();
        let m1 = train_decision_tree(&data, 5).unwrap();
        let m2 = train_decision_tree(&cubed, 5).unwrap();
        for e in &data {
            let p1 = prob(&m1, e.x.clone());
            let p2 = prob(&m2, vec![e.x[0] * e.x[0] * e.x[0], e.x[1]]);
            assert_eq!(p1.to_bits(), p2.to_bits());
        }
    }
}
