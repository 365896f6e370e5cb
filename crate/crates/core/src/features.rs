//! Pre-decision feature extraction: maps each (order, candidate set) pair to
//! a fixed-length numeric vector in the common representation space shared
//! by all orders, using only information available before the deciding
//! engine runs. Costs here are raw shipping costs from the single-node
//! linear scan; the extractor never invokes the full solver.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::domain::{shipment_cost, shipping_distance, FulfillmentNetwork, NodeKind, Order, SplitLabel};
use crate::optimizer::CandidateSet;

/// Version tag of the canonical feature catalog, embedded in feature files
/// and trained models; mismatches are rejected at inference time.
pub const CATALOG_VERSION: &str = "fv1";

/// Which aggregation level a feature is computed at.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureLevel {
    Order,
    ItemAgg,
    NodeAgg,
    ItemNodeAgg,
}

/// Name, level, and meaning of one feature; catalog position is vector position.
#[derive(Debug, Clone)]
pub struct FeatureDescriptor {
    pub name: &'static str,
    pub level: FeatureLevel,
    pub description: &'static str,
}

const DESCRIPTORS: &[FeatureDescriptor] = &[
    FeatureDescriptor { name: "num_lines", level: FeatureLevel::Order, description: "number of order lines" },
    FeatureDescriptor { name: "total_quantity", level: FeatureLevel::Order, description: "total ordered units" },
    FeatureDescriptor { name: "num_distinct_items", level: FeatureLevel::Order, description: "distinct items in the order" },
    FeatureDescriptor { name: "total_weight", level: FeatureLevel::Order, description: "total shipping weight" },
    FeatureDescriptor { name: "total_price", level: FeatureLevel::Order, description: "total order price" },
    FeatureDescriptor { name: "frac_sfs_eligible_lines", level: FeatureLevel::Order, description: "fraction of lines eligible for ship-from-store" },
    FeatureDescriptor { name: "frac_sfs_eligible_quantity", level: FeatureLevel::Order, description: "fraction of units eligible for ship-from-store" },
    FeatureDescriptor { name: "min_unit_weight", level: FeatureLevel::ItemAgg, description: "lightest ordered item" },
    FeatureDescriptor { name: "max_unit_weight", level: FeatureLevel::ItemAgg, description: "heaviest ordered item" },
    FeatureDescriptor { name: "mean_unit_weight", level: FeatureLevel::ItemAgg, description: "mean unit weight over lines" },
    FeatureDescriptor { name: "min_unit_price", level: FeatureLevel::ItemAgg, description: "cheapest ordered item" },
    FeatureDescriptor { name: "max_unit_price", level: FeatureLevel::ItemAgg, description: "most expensive ordered item" },
    FeatureDescriptor { name: "mean_unit_price", level: FeatureLevel::ItemAgg, description: "mean unit price over lines" },
    FeatureDescriptor { name: "max_line_quantity", level: FeatureLevel::ItemAgg, description: "largest single-line quantity" },
    FeatureDescriptor { name: "num_candidate_nodes", level: FeatureLevel::NodeAgg, description: "candidate nodes after prefiltering" },
    FeatureDescriptor { name: "frac_store_candidates", level: FeatureLevel::NodeAgg, description: "fraction of candidates that are stores" },
    FeatureDescriptor { name: "min_shipping_distance", level: FeatureLevel::NodeAgg, description: "closest candidate distance to destination" },
    FeatureDescriptor { name: "mean_shipping_distance", level: FeatureLevel::NodeAgg, description: "mean candidate distance to destination" },
    FeatureDescriptor { name: "frac_nodes_full_inventory", level: FeatureLevel::ItemNodeAgg, description: "fraction of candidates with inventory for all items" },
    FeatureDescriptor { name: "max_possible_clearance_savings", level: FeatureLevel::ItemNodeAgg, description: "sum over items of the best per-unit clearance saving times quantity" },
    FeatureDescriptor { name: "max_per_item_clearance_savings_full_inv", level: FeatureLevel::ItemNodeAgg, description: "best single-item clearance saving at a node with inventory for all items" },
    FeatureDescriptor { name: "best_no_split_cost", level: FeatureLevel::ItemNodeAgg, description: "cheapest single-node full-order shipping cost, or twice the costliest observed when no node qualifies" },
    FeatureDescriptor { name: "best_no_split_cost_per_item", level: FeatureLevel::ItemNodeAgg, description: "best no-split cost divided by the number of lines" },
    FeatureDescriptor { name: "sum_min_per_item_cost", level: FeatureLevel::ItemNodeAgg, description: "free-split lower bound: per item, cheapest node's fixed plus variable cost" },
    FeatureDescriptor { name: "split_saving_bound", level: FeatureLevel::ItemNodeAgg, description: "best no-split cost minus the free-split lower bound" },
    FeatureDescriptor { name: "no_split_feasible", level: FeatureLevel::ItemNodeAgg, description: "1 when some candidate stocks the whole order, else 0" },
];

/// The versioned, ordered feature catalog.
#[derive(Debug, Clone)]
pub struct FeatureCatalog {
    pub version: &'static str,
    pub descriptors: &'static [FeatureDescriptor],
}

impl FeatureCatalog {
    pub fn canonical() -> FeatureCatalog {
        FeatureCatalog { version: CATALOG_VERSION, descriptors: DESCRIPTORS }
    }

    pub fn len(&self) -> usize {
        self.descriptors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.is_empty()
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.descriptors.iter().map(|d| d.name).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.descriptors.iter().position(|d| d.name == name)
    }
}

/// One order's numeric representation, positionally bound to the catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub order_id: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum FeatureError {
    #[error("unknown feature '{name}' (catalog {version})")]
    UnknownFeature { name: String, version: &'static str },
    #[error("features and labels misaligned: no label for order '{order_id}'")]
    MissingLabel { order_id: String },
    #[error("n_bins must be at least 1")]
    ZeroBins,
}

/// Compute the canonical feature vector for one order. Runs in time linear
/// in candidates x lines, is deterministic bit for bit, and never calls the
/// full solver.
pub fn extract_features(
    order: &Order,
    network: &FulfillmentNetwork,
    candidates: &CandidateSet,
) -> FeatureVector {
    let lines = &order.lines;
    let n_lines = lines.len() as f64;
    let total_quantity: u32 = lines.iter().map(|l| l.quantity).sum();

    let items: Vec<_> = lines
        .iter()
        .map(|l| network.item(&l.item_id).expect("order references known item"))
        .collect();

    let total_weight: f64 = lines
        .iter()
        .zip(&items)
        .map(|(l, it)| l.quantity as f64 * it.weight)
        .sum();
    let total_price: f64 = lines
        .iter()
        .zip(&items)
        .map(|(l, it)| l.quantity as f64 * it.price)
        .sum();
    let eligible_lines = items.iter().filter(|it| it.sfs_eligible).count() as f64;
    let eligible_qty: u32 = lines
        .iter()
        .zip(&items)
        .filter(|(_, it)| it.sfs_eligible)
        .map(|(l, _)| l.quantity)
        .sum();

    let weights: Vec<f64> = items.iter().map(|it| it.weight).collect();
    let prices: Vec<f64> = items.iter().map(|it| it.price).collect();
    let fold_min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let fold_max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    let cand_nodes: Vec<_> = candidates
        .node_ids
        .iter()
        .map(|id| network.node(id).expect("candidate references known node"))
        .collect();
    let n_cand = cand_nodes.len();
    let n_cand_f = n_cand as f64;
    let stores = cand_nodes.iter().filter(|n| n.kind == NodeKind::Store).count() as f64;
    let dists: Vec<f64> = cand_nodes
        .iter()
        .map(|n| shipping_distance(n, order.destination))
        .collect();

    // Per candidate: can it cover the whole order, and what would shipping
    // the whole order from it cost (inventory aside)?
    let mut full_inv = vec![false; n_cand];
    let mut full_cost = vec![0.0; n_cand];
    for (j, node) in cand_nodes.iter().enumerate() {
        full_inv[j] = lines
            .iter()
            .all(|l| network.units_on_hand(&l.item_id, &node.node_id) >= l.quantity);
        full_cost[j] = shipment_cost(node, order.destination, total_weight);
    }
    let n_full = full_inv.iter().filter(|&&f| f).count();

    let mut max_possible_savings = 0.0;
    let mut sum_min_per_item = 0.0;
    for (line, item) in lines.iter().zip(&items) {
        let mut best_saving = 0.0f64;
        let mut best_cost_stocked = f64::INFINITY;
        let mut best_cost_any = f64::INFINITY;
        for (j, node) in cand_nodes.iter().enumerate() {
            let saving = network.clearance_saving(&line.item_id, &node.node_id);
            best_saving = best_saving.max(saving);
            let cost = node.fixed_shipment_cost
                + line.quantity as f64 * (item.weight * node.unit_rate * dists[j]);
            if network.units_on_hand(&line.item_id, &node.node_id) >= 1 {
                best_cost_stocked = best_cost_stocked.min(cost);
            }
            best_cost_any = best_cost_any.min(cost);
        }
        max_possible_savings += best_saving * line.quantity as f64;
        // fall back to the unstocked hypothetical when nothing stocks it
        sum_min_per_item += if best_cost_stocked.is_finite() { best_cost_stocked } else { best_cost_any };
    }

    let mut max_per_item_savings_full_inv = 0.0f64;
    for (j, node) in cand_nodes.iter().enumerate() {
        if !full_inv[j] {
            continue;
        }
        for line in lines {
            let total_saving =
                network.clearance_saving(&line.item_id, &node.node_id) * line.quantity as f64;
            max_per_item_savings_full_inv = max_per_item_savings_full_inv.max(total_saving);
        }
    }

    let no_split_feasible = n_full > 0;
    let best_no_split_cost = if no_split_feasible {
        (0..n_cand)
            .filter(|&j| full_inv[j])
            .map(|j| full_cost[j])
            .fold(f64::INFINITY, f64::min)
    } else {
        2.0 * full_cost.iter().copied().fold(0.0, f64::max)
    };

    let values = vec![
        n_lines,
        total_quantity as f64,
        n_lines, // lines carry distinct items by construction
        total_weight,
        total_price,
        eligible_lines / n_lines,
        eligible_qty as f64 / total_quantity as f64,
        fold_min(&weights),
        fold_max(&weights),
        mean(&weights),
        fold_min(&prices),
        fold_max(&prices),
        mean(&prices),
        lines.iter().map(|l| l.quantity).max().unwrap_or(0) as f64,
        n_cand_f,
        if n_cand > 0 { stores / n_cand_f } else { 0.0 },
        if n_cand > 0 { fold_min(&dists) } else { 0.0 },
        if n_cand > 0 { mean(&dists) } else { 0.0 },
        if n_cand > 0 { n_full as f64 / n_cand_f } else { 0.0 },
        max_possible_savings,
        max_per_item_savings_full_inv,
        best_no_split_cost,
        best_no_split_cost / n_lines,
        sum_min_per_item,
        best_no_split_cost - sum_min_per_item,
        if no_split_feasible { 1.0 } else { 0.0 },
    ];
    debug_assert_eq!(values.len(), DESCRIPTORS.len());
    debug_assert!(values.iter().all(|v| v.is_finite()));

    FeatureVector { order_id: order.order_id.clone(), values }
}

/// One equal-width histogram bin of a feature with its empirical split rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedRate {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// Empirical split fraction; `None` for empty bins.
    pub split_fraction: Option<f64>,
}

/// Histogram of empirical split rate against one feature: equal-width bins
/// over the observed range, each with its order count and split fraction.
pub fn binned_split_rates(
    features: &[FeatureVector],
    labels: &[SplitLabel],
    feature_name: &str,
    n_bins: usize,
) -> Result<Vec<BinnedRate>, FeatureError> {
    if n_bins == 0 {
        return Err(FeatureError::ZeroBins);
    }
    let catalog = FeatureCatalog::canonical();
    let idx = catalog
        .index_of(feature_name)
        .ok_or_else(|| FeatureError::UnknownFeature {
            name: feature_name.to_string(),
            version: CATALOG_VERSION,
        })?;

    let by_id: HashMap<&str, bool> =
        labels.iter().map(|l| (l.order_id.as_str(), l.split)).collect();
    let mut points = Vec::with_capacity(features.len());
    for fv in features {
        let split = by_id
            .get(fv.order_id.as_str())
            .copied()
            .ok_or_else(|| FeatureError::MissingLabel { order_id: fv.order_id.clone() })?;
        points.push((fv.values[idx], split));
    }

    let lo = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let hi = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if points.is_empty() { (0.0, 0.0) } else { (lo, hi) };
    let width = if hi > lo { (hi - lo) / n_bins as f64 } else { 0.0 };

    let mut counts = vec![0usize; n_bins];
    let mut splits = vec![0usize; n_bins];
    for &(v, split) in &points {
        let bin = if width > 0.0 {
            (((v - lo) / width) as usize).min(n_bins - 1)
        } else {
            0
        };
        counts[bin] += 1;
        if split {
            splits[bin] += 1;
        }
    }

    Ok((0..n_bins)
        .map(|b| BinnedRate {
            lo: lo + b as f64 * width,
            hi: if b + 1 == n_bins { hi } else { lo + (b + 1) as f64 * width },
            count: counts[b],
            split_fraction: if counts[b] > 0 {
                Some(splits[b] as f64 / counts[b] as f64)
            } else {
                None
            },
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ItemCatalogEntry, Node, OrderLine, Point};
    use crate::optimizer::{candidate_nodes, OptimizerConfig};

    fn network() -> FulfillmentNetwork {
        let mut net = FulfillmentNetwork {
            catalog: vec![
                ItemCatalogEntry { item_id: "a".into(), weight: 2.0, price: 10.0, sfs_eligible: true },
                ItemCatalogEntry { item_id: "b".into(), weight: 1.0, price: 30.0, sfs_eligible: false },
            ],
            nodes: vec![
                Node {
                    node_id: "fc-1".into(),
                    kind: NodeKind::FulfillmentCenter,
                    location: Point::new(0.0, 3.0),
                    fixed_shipment_cost: 5.0,
                    unit_rate: 1.0,
                },
                Node {
                    node_id: "store-1".into(),
                    kind: NodeKind::Store,
                    location: Point::new(0.0, 1.0),
                    fixed_shipment_cost: 4.0,
                    unit_rate: 1.0,
                },
            ],
            ..Default::default()
        };
        for (item, node, units) in [("a", "fc-1", 10), ("b", "fc-1", 10), ("a", "store-1", 10)] {
            net.inventory.entry(item.into()).or_default().insert(node.into(), units);
        }
        net
    }

    fn order() -> Order {
        Order {
            order_id: "o1".into(),
            destination: Point::new(0.0, 0.0),
            lines: vec![
                OrderLine { item_id: "a".into(), quantity: 2 },
                OrderLine { item_id: "b".into(), quantity: 1 },
            ],
        }
    }

    fn featurize(net: &FulfillmentNetwork, order: &Order) -> FeatureVector {
        let cands = candidate_nodes(order, net, &OptimizerConfig::default()).unwrap();
        extract_features(order, net, &cands)
    }

    fn value(fv: &FeatureVector, name: &str) -> f64 {
        fv.values[FeatureCatalog::canonical().index_of(name).unwrap()]
    }

    #[test]
    fn catalog_positions_are_stable_and_named() {
        let catalog = FeatureCatalog::canonical();
        assert_eq!(catalog.version, "fv1");
        assert_eq!(catalog.index_of("num_lines"), Some(0));
        assert_eq!(catalog.index_of("no_split_feasible"), Some(catalog.len() - 1));
        let mut names = catalog.names();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), catalog.len(), "names must be unique");
    }

    #[test]
    fn direct_counts_on_single_line_order() {
        let net = network();
        let order = Order {
            order_id: "o2".into(),
            destination: Point::new(0.0, 0.0),
            lines: vec![OrderLine { item_id: "a".into(), quantity: 2 }],
        };
        let fv = featurize(&net, &order);
        assert_eq!(value(&fv, "num_lines"), 1.0);
        assert_eq!(value(&fv, "total_quantity"), 2.0);
        assert_eq!(value(&fv, "num_distinct_items"), 1.0);
        assert_eq!(value(&fv, "max_line_quantity"), 2.0);
        assert_eq!(value(&fv, "total_weight"), 4.0);
    }

    #[test]
    fn full_inventory_fraction_and_sentinel() {
        let net = network();
        let fv = featurize(&net, &order());
        // only fc-1 holds both items
        assert_eq!(value(&fv, "frac_nodes_full_inventory"), 0.5);
        assert_eq!(value(&fv, "no_split_feasible"), 1.0);
        // fc-1 full-order cost: 5 + 1.0 * 5.0 weight * 3 distance = 20
        assert_eq!(value(&fv, "best_no_split_cost"), 20.0);
        assert_eq!(value(&fv, "best_no_split_cost_per_item"), 10.0);

        // strip b from fc-1: nothing can single-node the order any more
        let mut thin = net.clone();
        thin.inventory.get_mut("b").unwrap().insert("fc-1".into(), 0);
        let fv = featurize(&thin, &order());
        assert_eq!(value(&fv, "no_split_feasible"), 0.0);
        assert_eq!(value(&fv, "frac_nodes_full_inventory"), 0.0);
        // sentinel: twice the costliest hypothetical single-node cost (fc-1's 20)
        assert_eq!(value(&fv, "best_no_split_cost"), 40.0);
    }

    #[test]
    fn no_clearance_anywhere_means_zero_savings_features() {
        let net = network();
        let fv = featurize(&net, &order());
        assert_eq!(value(&fv, "max_possible_clearance_savings"), 0.0);
        assert_eq!(value(&fv, "max_per_item_clearance_savings_full_inv"), 0.0);
    }

    #[test]
    fn clearance_savings_aggregate_over_items_and_full_inv_nodes() {
        let mut net = network();
        net.clearance_saving.entry("a".into()).or_default().insert("store-1".into(), 3.0);
        net.clearance_saving.entry("a".into()).or_default().insert("fc-1".into(), 1.0);
        let fv = featurize(&net, &order());
        // item a: best saving 3.0 x qty 2; item b: none
        assert_eq!(value(&fv, "max_possible_clearance_savings"), 6.0);
        // restricted to full-inventory nodes (fc-1 only): a's saving there is 1.0 x 2
        assert_eq!(value(&fv, "max_per_item_clearance_savings_full_inv"), 2.0);
    }

    #[test]
    fn sfs_fractions_count_lines_and_quantity() {
        let net = network();
        let fv = featurize(&net, &order());
        assert_eq!(value(&fv, "frac_sfs_eligible_lines"), 0.5);
        assert_eq!(value(&fv, "frac_sfs_eligible_quantity"), 2.0 / 3.0);
    }

    #[test]
    fn duplicating_candidates_preserves_fractions_and_doubles_count() {
        let mut net = network();
        let clones: Vec<Node> = net
            .nodes
            .iter()
            .map(|n| Node { node_id: format!("{}-dup", n.node_id), ..n.clone() })
            .collect();
        for (orig, dup) in net.nodes.clone().iter().zip(&clones) {
            for item in ["a", "b"] {
                let units = net.units_on_hand(item, &orig.node_id);
                if units > 0 {
                    net.inventory
                        .entry(item.into())
                        .or_default()
                        .insert(dup.node_id.clone(), units);
                }
            }
        }
        net.nodes.extend(clones);

        let base = featurize(&network(), &order());
        let doubled = featurize(&net, &order());
        assert_eq!(
            value(&doubled, "num_candidate_nodes"),
            2.0 * value(&base, "num_candidate_nodes")
        );
        assert_eq!(
            value(&doubled, "frac_nodes_full_inventory"),
            value(&base, "frac_nodes_full_inventory")
        );
        assert_eq!(
            value(&doubled, "frac_store_candidates"),
            value(&base, "frac_store_candidates")
        );
    }

    #[test]
    fn extraction_is_bitwise_deterministic() {
        let net = network();
        let a = featurize(&net, &order());
        let b = featurize(&net, &order());
        assert_eq!(a.order_id, b.order_id);
        assert!(a
            .values
            .iter()
            .zip(&b.values)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    fn fv(id: &str, value: f64) -> FeatureVector {
        let mut values = vec![0.0; FeatureCatalog::canonical().len()];
        values[0] = value;
        FeatureVector { order_id: id.into(), values }
    }

    fn label(id: &str, split: bool) -> SplitLabel {
        SplitLabel { order_id: id.into(), split, nodes_used: if split { 2 } else { 1 }, objective: 0.0 }
    }

    #[test]
    fn all_negative_labels_give_zero_fractions() {
        let features = vec![fv("a", 0.0), fv("b", 1.0), fv("c", 2.0)];
        let labels = vec![label("a", false), label("b", false), label("c", false)];
        let bins = binned_split_rates(&features, &labels, "num_lines", 3).unwrap();
        for bin in bins.iter().filter(|b| b.count > 0) {
            assert_eq!(bin.split_fraction, Some(0.0));
        }
    }

    #[test]
    fn one_bin_recovers_global_rate() {
        let features = vec![fv("a", 0.0), fv("b", 1.0), fv("c", 2.0), fv("d", 3.0)];
        let labels = vec![label("a", true), label("b", false), label("c", true), label("d", false)];
        let bins = binned_split_rates(&features, &labels, "num_lines", 1).unwrap();
        assert_eq!(bins.len(), 1);
        assert_eq!(bins[0].count, 4);
        assert_eq!(bins[0].split_fraction, Some(0.5));
    }

    #[test]
    fn two_orders_two_bins() {
        let features = vec![fv("a", 0.0), fv("b", 1.0)];
        let labels = vec![label("a", false), label("b", true)];
        let bins = binned_split_rates(&features, &labels, "num_lines", 2).unwrap();
        assert_eq!(bins[0].split_fraction, Some(0.0));
        assert_eq!(bins[1].split_fraction, Some(1.0));
    }

    #[test]
    fn empty_bins_are_reported_without_a_fraction() {
        let features = vec![fv("a", 0.0), fv("b", 10.0)];
        let labels = vec![label("a", false), label("b", true)];
        let bins = binned_split_rates(&features, &labels, "num_lines", 5).unwrap();
        assert_eq!(bins.len(), 5);
        assert_eq!(bins[1].count, 0);
        assert_eq!(bins[1].split_fraction, None);
    }

    #[test]
    fn unknown_feature_is_a_catalog_error() {
        let err = binned_split_rates(&[], &[], "nope", 2).unwrap_err();
        assert!(matches!(err, FeatureError::UnknownFeature { .. }));
    }
}
