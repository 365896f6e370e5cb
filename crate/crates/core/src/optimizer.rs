//! The fulfillment deciding engine: an exact solver for the scalarized
//! two-objective assignment problem, the cheap single-node linear scan the
//! shortcut path substitutes for it, and batch labeling of order streams.
//!
//! The solver enumerates node subsets of the candidate set. For a fixed
//! subset, per-unit marginal costs are additive, so a per-item greedy
//! allocation is exact; branch-and-bound pruning on a cost lower bound cuts
//! the enumeration without changing results. Ties are broken toward fewer
//! nodes, then the lexicographically smallest sorted node-id sequence, so
//! the returned assignment is a pure function of the instance.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    shipment_cost, shipping_distance, Allocation, Assignment, FulfillmentNetwork, Order,
    OrderError, SplitLabel,
};

/// Tuning knobs for the deciding engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    /// Weight on clearance savings in `objective = shipping - w * savings`.
    pub w_clearance: f64,
    /// Maximum number of candidate nodes retained per order.
    pub candidate_prefilter_k: usize,
    /// Maximum distinct nodes in one assignment. `None` caps at the order's
    /// total quantity, the largest split that can ever pay off.
    pub max_split_nodes: Option<u32>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            w_clearance: 1.0,
            candidate_prefilter_k: 30,
            max_split_nodes: None,
        }
    }
}

/// The nodes the solver will consider for one order, in rank order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub order_id: String,
    pub node_ids: Vec<String>,
}

/// Errors from the deciding engine.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum SolveError {
    #[error(transparent)]
    Order(#[from] OrderError),
    #[error("order '{order_id}' is infeasible: {reason}")]
    Infeasible { order_id: String, reason: String },
}

/// Work counters for one solve, in candidate-node cost evaluations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveStats {
    /// Subsets considered by the full solver (singletons plus every larger
    /// subset pushed during the search, pruned or not), or single-node cost
    /// evaluations performed by the linear scan.
    pub cost_evaluations: u64,
}

/// Rank all nodes stocking at least one ordered item and truncate to the
/// configured prefilter size.
///
/// Nodes able to fulfill the whole order alone come first, ordered by their
/// single-node full-order shipping cost; the rest follow, ordered by
/// per-unit-mass variable cost (rate x distance). Ties break on node id.
pub fn candidate_nodes(
    order: &Order,
    network: &FulfillmentNetwork,
    config: &OptimizerConfig,
) -> Result<CandidateSet, SolveError> {
    let total_weight: f64 = order
        .lines
        .iter()
        .map(|l| {
            let w = network.item(&l.item_id).map(|it| it.weight).unwrap_or(0.0);
            l.quantity as f64 * w
        })
        .sum();

    let mut ranked: Vec<(u8, f64, &str)> = Vec::new();
    for node in &network.nodes {
        let stocks_any = order
            .lines
            .iter()
            .any(|l| network.units_on_hand(&l.item_id, &node.node_id) > 0);
        if !stocks_any {
            continue;
        }
        let full = order
            .lines
            .iter()
            .all(|l| network.units_on_hand(&l.item_id, &node.node_id) >= l.quantity);
        let score = if full {
            shipment_cost(node, order.destination, total_weight)
        } else {
            node.unit_rate * shipping_distance(node, order.destination)
        };
        ranked.push((if full { 0 } else { 1 }, score, &node.node_id));
    }

    if ranked.is_empty() {
        return Err(SolveError::Infeasible {
            order_id: order.order_id.clone(),
            reason: "no node stocks any ordered item".into(),
        });
    }

    ranked.sort_by(|a, b| {
        a.0.cmp(&b.0)
            .then(a.1.partial_cmp(&b.1).expect("finite rank score"))
            .then(a.2.cmp(b.2))
    });
    ranked.truncate(config.candidate_prefilter_k.max(1));

    Ok(CandidateSet {
        order_id: order.order_id.clone(),
        node_ids: ranked.into_iter().map(|(_, _, id)| id.to_string()).collect(),
    })
}

/// Indexed view of one (order, candidate set) solve instance. Candidates are
/// sorted by node id and items by item id so that cost sums accumulate in
/// exactly the order [`Assignment::compute`] uses.
struct Instance<'a> {
    order: &'a Order,
    network: &'a FulfillmentNetwork,
    w_clearance: f64,
    /// Candidate node ids, ascending.
    node_ids: Vec<&'a str>,
    fixed: Vec<f64>,
    /// Ordered item ids, ascending, with quantities.
    item_ids: Vec<&'a str>,
    qty: Vec<u32>,
    /// `[item][node]` units on hand.
    inv: Vec<Vec<u32>>,
    /// `[item][node]` variable shipping cost per unit (weight x rate x distance).
    unit_var: Vec<Vec<f64>>,
    /// `[item][node]` clearance saving per unit.
    unit_sav: Vec<Vec<f64>>,
    /// `[item][node]` scalarized marginal cost per unit (var - w x saving).
    unit_cost: Vec<Vec<f64>>,
}

impl<'a> Instance<'a> {
    fn build(
        order: &'a Order,
        network: &'a FulfillmentNetwork,
        candidates: &'a CandidateSet,
        w_clearance: f64,
    ) -> Instance<'a> {
        let mut node_ids: Vec<&str> = candidates.node_ids.iter().map(|s| s.as_str()).collect();
        node_ids.sort_unstable();
        let nodes: Vec<_> = node_ids
            .iter()
            .map(|id| network.node(id).expect("candidate references known node"))
            .collect();

        let mut item_ids: Vec<&str> = order.lines.iter().map(|l| l.item_id.as_str()).collect();
        item_ids.sort_unstable();
        let qty: Vec<u32> = item_ids
            .iter()
            .map(|id| {
                order
                    .lines
                    .iter()
                    .find(|l| l.item_id == *id)
                    .map(|l| l.quantity)
                    .unwrap_or(0)
            })
            .collect();

        let dist: Vec<f64> = nodes
            .iter()
            .map(|n| shipping_distance(n, order.destination))
            .collect();

        let mut inv = Vec::with_capacity(item_ids.len());
        let mut unit_var = Vec::with_capacity(item_ids.len());
        let mut unit_sav = Vec::with_capacity(item_ids.len());
        let mut unit_cost = Vec::with_capacity(item_ids.len());
        for item_id in &item_ids {
            let item = network.item(item_id).expect("order references known item");
            let mut inv_row = Vec::with_capacity(nodes.len());
            let mut var_row = Vec::with_capacity(nodes.len());
            let mut sav_row = Vec::with_capacity(nodes.len());
            let mut cost_row = Vec::with_capacity(nodes.len());
            for (j, node) in nodes.iter().enumerate() {
                inv_row.push(network.units_on_hand(item_id, &node.node_id));
                let var = item.weight * node.unit_rate * dist[j];
                let sav = network.clearance_saving(item_id, &node.node_id);
                var_row.push(var);
                sav_row.push(sav);
                cost_row.push(var - w_clearance * sav);
            }
            inv.push(inv_row);
            unit_var.push(var_row);
            unit_sav.push(sav_row);
            unit_cost.push(cost_row);
        }

        Instance {
            order,
            network,
            w_clearance,
            fixed: nodes.iter().map(|n| n.fixed_shipment_cost).collect(),
            node_ids,
            item_ids,
            qty,
            inv,
            unit_var,
            unit_sav,
            unit_cost,
        }
    }

    fn n_candidates(&self) -> usize {
        self.node_ids.len()
    }

    /// Greedy per-item allocation over the subset `chosen` (candidate
    /// indices, ascending). Exact for a fixed subset because marginal costs
    /// are additive. Returns `None` when some item cannot be covered or some
    /// chosen node ends up unused (that assignment belongs to the smaller
    /// subset), otherwise the objective accumulated in canonical order plus
    /// the per-item allocations.
    fn evaluate_subset(&self, chosen: &[usize]) -> Option<(f64, Vec<(usize, usize, u32)>)> {
        let mut allocs: Vec<(usize, usize, u32)> = Vec::new();
        let mut used = vec![false; chosen.len()];

        for (i, &q) in self.qty.iter().enumerate() {
            let mut ranked: Vec<usize> = (0..chosen.len()).collect();
            ranked.sort_by(|&a, &b| {
                let ca = self.unit_cost[i][chosen[a]];
                let cb = self.unit_cost[i][chosen[b]];
                ca.partial_cmp(&cb).expect("finite unit cost").then(a.cmp(&b))
            });
            let mut remaining = q;
            for pos in ranked {
                if remaining == 0 {
                    break;
                }
                let j = chosen[pos];
                let take = remaining.min(self.inv[i][j]);
                if take > 0 {
                    allocs.push((i, j, take));
                    used[pos] = true;
                    remaining -= take;
                }
            }
            if remaining > 0 {
                return None; // subset cannot cover this item
            }
        }

        if used.iter().any(|u| !u) {
            return None; // covered by a smaller subset
        }

        // Canonical accumulation order: fixed costs over used nodes
        // ascending, then variable costs and savings per (item, node)
        // allocation ascending. Matches Assignment::compute bit for bit.
        let mut shipping = 0.0;
        for &j in chosen {
            shipping += self.fixed[j];
        }
        let mut savings = 0.0;
        allocs.sort_unstable_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        for &(i, j, q) in &allocs {
            shipping += q as f64 * self.unit_var[i][j];
            savings += q as f64 * self.unit_sav[i][j];
        }
        Some((shipping - self.w_clearance * savings, allocs))
    }

    fn to_assignment(&self, allocs: &[(usize, usize, u32)]) -> Assignment {
        let allocations = allocs
            .iter()
            .map(|&(i, j, q)| Allocation {
                item_id: self.item_ids[i].to_string(),
                node_id: self.node_ids[j].to_string(),
                quantity: q,
            })
            .collect();
        Assignment::compute(self.order, self.network, allocations, self.w_clearance)
    }
}

/// `(objective, subset)` with the solver's tie-breaks: lower objective, then
/// fewer nodes, then lexicographically smaller sorted node-id sequence
/// (index order equals node-id order here).
fn better(obj: f64, chosen: &[usize], best_obj: f64, best_chosen: &[usize]) -> bool {
    if obj != best_obj {
        return obj < best_obj;
    }
    if chosen.len() != best_chosen.len() {
        return chosen.len() < best_chosen.len();
    }
    chosen < best_chosen
}

struct Search<'a, 'b> {
    inst: &'b Instance<'a>,
    max_nodes: usize,
    /// `suffix_min_cost[i][s]` = min unit cost of item i over candidates s..
    suffix_min_cost: Vec<Vec<f64>>,
    best: Option<(f64, Vec<usize>, Vec<(usize, usize, u32)>)>,
    evaluations: u64,
}

impl<'a, 'b> Search<'a, 'b> {
    fn new(inst: &'b Instance<'a>, max_nodes: usize) -> Self {
        let n = inst.n_candidates();
        let suffix_min_cost = inst
            .unit_cost
            .iter()
            .map(|row| {
                let mut suf = vec![f64::INFINITY; n + 1];
                for j in (0..n).rev() {
                    suf[j] = suf[j + 1].min(row[j]);
                }
                suf
            })
            .collect();
        Search { inst, max_nodes, suffix_min_cost, best: None, evaluations: 0 }
    }

    fn consider(&mut self, obj: f64, chosen: &[usize], allocs: Vec<(usize, usize, u32)>) {
        let take = match &self.best {
            None => true,
            Some((bo, bc, _)) => better(obj, chosen, *bo, bc),
        };
        if take {
            self.best = Some((obj, chosen.to_vec(), allocs));
        }
    }

    /// Lower bound on the objective of any assignment whose node set extends
    /// `chosen` with nodes from `start..`: exact fixed costs of the chosen
    /// nodes plus, per item, the cheapest capacity-relaxed unit cost.
    fn lower_bound(&self, chosen: &[usize], start: usize) -> f64 {
        let mut bound: f64 = chosen.iter().map(|&j| self.inst.fixed[j]).sum();
        for (i, &q) in self.inst.qty.iter().enumerate() {
            let mut unit = self.suffix_min_cost[i][start];
            for &j in chosen {
                unit = unit.min(self.inst.unit_cost[i][j]);
            }
            bound += q as f64 * unit;
        }
        bound
    }

    fn prune_margin(&self) -> f64 {
        match &self.best {
            Some((bo, _, _)) => bo + 1e-9 * (1.0 + bo.abs()),
            None => f64::INFINITY,
        }
    }

    fn run(&mut self) {
        // Singletons first: they seed the incumbent with the no-split cost,
        // which makes the fixed-cost bound bite early.
        for j in 0..self.inst.n_candidates() {
            self.evaluations += 1;
            if let Some((obj, allocs)) = self.inst.evaluate_subset(&[j]) {
                self.consider(obj, &[j], allocs);
            }
        }
        if self.max_nodes >= 2 {
            let mut chosen = Vec::with_capacity(self.max_nodes);
            self.descend(&mut chosen, 0);
        }
    }

    fn descend(&mut self, chosen: &mut Vec<usize>, start: usize) {
        for j in start..self.inst.n_candidates() {
            chosen.push(j);
            if chosen.len() >= 2 {
                self.evaluations += 1;
            }
            if self.lower_bound(chosen, j + 1) <= self.prune_margin() {
                if chosen.len() >= 2 {
                    if let Some((obj, allocs)) = self.inst.evaluate_subset(chosen) {
                        self.consider(obj, chosen, allocs);
                    }
                }
                if chosen.len() < self.max_nodes {
                    self.descend(chosen, j + 1);
                }
            }
            chosen.pop();
        }
    }
}

/// Solve the full assignment problem exactly over the candidate set and
/// report the work done.
pub fn solve_full_detailed(
    order: &Order,
    network: &FulfillmentNetwork,
    config: &OptimizerConfig,
) -> Result<(Assignment, SolveStats), SolveError> {
    let candidates = candidate_nodes(order, network, config)?;
    let inst = Instance::build(order, network, &candidates, config.w_clearance);

    for (i, &q) in inst.qty.iter().enumerate() {
        let available: u64 = inst.inv[i].iter().map(|&u| u as u64).sum();
        if available < q as u64 {
            return Err(SolveError::Infeasible {
                order_id: order.order_id.clone(),
                reason: format!(
                    "item '{}' needs {} units but candidates hold {}",
                    inst.item_ids[i], q, available
                ),
            });
        }
    }

    let cap = config
        .max_split_nodes
        .map(|m| m as usize)
        .unwrap_or_else(|| order.total_quantity() as usize)
        .clamp(1, inst.n_candidates());

    let mut search = Search::new(&inst, cap);
    search.run();
    let stats = SolveStats { cost_evaluations: search.evaluations };
    match search.best.take() {
        Some((_, _, allocs)) => Ok((inst.to_assignment(&allocs), stats)),
        None => Err(SolveError::Infeasible {
            order_id: order.order_id.clone(),
            reason: format!("no feasible assignment within {cap} nodes"),
        }),
    }
}

/// Solve the full assignment problem exactly over the candidate set.
pub fn solve_full(
    order: &Order,
    network: &FulfillmentNetwork,
    config: &OptimizerConfig,
) -> Result<Assignment, SolveError> {
    solve_full_detailed(order, network, config).map(|(a, _)| a)
}

/// Linear scan of the candidate nodes for the best single node able to
/// fulfill the whole order, and the number of cost evaluations spent.
/// Returns `None` when no single node is feasible.
pub fn solve_no_split_detailed(
    order: &Order,
    network: &FulfillmentNetwork,
    config: &OptimizerConfig,
) -> (Option<Assignment>, SolveStats) {
    let candidates = match candidate_nodes(order, network, config) {
        Ok(c) => c,
        Err(_) => return (None, SolveStats::default()),
    };
    let inst = Instance::build(order, network, &candidates, config.w_clearance);

    let mut evaluations = 0u64;
    let mut best: Option<(f64, usize, Vec<(usize, usize, u32)>)> = None;
    for j in 0..inst.n_candidates() {
        let full = (0..inst.qty.len()).all(|i| inst.inv[i][j] >= inst.qty[i]);
        if !full {
            continue;
        }
        evaluations += 1;
        if let Some((obj, allocs)) = inst.evaluate_subset(&[j]) {
            let take = match &best {
                None => true,
                Some((bo, bj, _)) => better(obj, &[j], *bo, &[*bj]),
            };
            if take {
                best = Some((obj, j, allocs));
            }
        }
    }

    let stats = SolveStats { cost_evaluations: evaluations };
    (best.map(|(_, _, allocs)| inst.to_assignment(&allocs)), stats)
}

/// Linear scan for the best feasible single node; `None` when the order
/// cannot be fulfilled from one node.
pub fn solve_no_split(
    order: &Order,
    network: &FulfillmentNetwork,
    config: &OptimizerConfig,
) -> Option<Assignment> {
    solve_no_split_detailed(order, network, config).0
}

/// Run the full solver over an order stream and emit one split label per
/// order, in input order. Orders are solved in parallel; the first failing
/// order (by input position) aborts the batch.
pub fn label_orders(
    orders: &[Order],
    network: &FulfillmentNetwork,
    config: &OptimizerConfig,
) -> Result<Vec<SplitLabel>, SolveError> {
    let results: Vec<Result<SplitLabel, SolveError>> = orders
        .par_iter()
        .map(|order| {
            crate::domain::validate_order(order, network)?;
            let assignment = solve_full(order, network, config)?;
            Ok(SplitLabel {
                order_id: order.order_id.clone(),
                split: assignment.nodes_used > 1,
                nodes_used: assignment.nodes_used,
                objective: assignment.objective,
            })
        })
        .collect();
    results.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ItemCatalogEntry, Node, NodeKind, OrderLine, Point};

    fn two_node_instance(saving_a_at_n1: f64) -> (FulfillmentNetwork, Order) {
        let mut net = FulfillmentNetwork {
            catalog: vec![
                ItemCatalogEntry { item_id: "a".into(), weight: 1.0, price: 1.0, sfs_eligible: true },
                ItemCatalogEntry { item_id: "b".into(), weight: 1.0, price: 1.0, sfs_eligible: true },
            ],
            nodes: vec![
                Node {
                    node_id: "n1".into(),
                    kind: NodeKind::Store,
                    location: Point::new(0.0, 1.0),
                    fixed_shipment_cost: 5.0,
                    unit_rate: 1.0,
                },
                Node {
                    node_id: "n2".into(),
                    kind: NodeKind::Store,
                    location: Point::new(0.0, 2.0),
                    fixed_shipment_cost: 5.0,
                    unit_rate: 1.0,
                },
            ],
            ..Default::default()
        };
        net.inventory.entry("a".into()).or_default().insert("n1".into(), 5);
        net.inventory.entry("a".into()).or_default().insert("n2".into(), 5);
        net.inventory.entry("b".into()).or_default().insert("n2".into(), 5);
        if saving_a_at_n1 > 0.0 {
            net.clearance_saving
                .entry("a".into())
                .or_default()
                .insert("n1".into(), saving_a_at_n1);
        }
        let order = Order {
            order_id: "o1".into(),
            destination: Point::new(0.0, 0.0),
            lines: vec![
                OrderLine { item_id: "a".into(), quantity: 1 },
                OrderLine { item_id: "b".into(), quantity: 1 },
            ],
        };
        (net, order)
    }

    #[test]
    fn candidate_set_only_feasible_node() {
        let (mut net, order) = two_node_instance(0.0);
        net.inventory.get_mut("a").unwrap().remove("n2");
        net.inventory.get_mut("b").unwrap().remove("n2");
        let order = Order { lines: vec![order.lines[0].clone()], ..order };
        let cs = candidate_nodes(&order, &net, &OptimizerConfig::default()).unwrap();
        assert_eq!(cs.node_ids, vec!["n1"]);
    }

    #[test]
    fn candidate_set_truncates_to_k() {
        let (net, order) = two_node_instance(0.0);
        let config = OptimizerConfig { candidate_prefilter_k: 1, ..Default::default() };
        let cs = candidate_nodes(&order, &net, &config).unwrap();
        assert_eq!(cs.node_ids.len(), 1);
    }

    #[test]
    fn candidate_tie_breaks_on_node_id() {
        // Two identical nodes stocking the same single item.
        let mut net = FulfillmentNetwork {
            catalog: vec![ItemCatalogEntry {
                item_id: "a".into(),
                weight: 1.0,
                price: 1.0,
                sfs_eligible: true,
            }],
            nodes: vec![
                Node {
                    node_id: "nb".into(),
                    kind: NodeKind::Store,
                    location: Point::new(0.0, 1.0),
                    fixed_shipment_cost: 5.0,
                    unit_rate: 1.0,
                },
                Node {
                    node_id: "na".into(),
                    kind: NodeKind::Store,
                    location: Point::new(0.0, 1.0),
                    fixed_shipment_cost: 5.0,
                    unit_rate: 1.0,
                },
            ],
            ..Default::default()
        };
        net.inventory.entry("a".into()).or_default().insert("na".into(), 1);
        net.inventory.entry("a".into()).or_default().insert("nb".into(), 1);
        let order = Order {
            order_id: "o1".into(),
            destination: Point::new(0.0, 0.0),
            lines: vec![OrderLine { item_id: "a".into(), quantity: 1 }],
        };
        let cs = candidate_nodes(&order, &net, &OptimizerConfig::default()).unwrap();
        assert_eq!(cs.node_ids, vec!["na", "nb"]);
    }

    #[test]
    fn no_stocking_node_is_infeasible() {
        let (net, _) = two_node_instance(0.0);
        let order = Order {
            order_id: "o2".into(),
            destination: Point::new(0.0, 0.0),
            lines: vec![OrderLine { item_id: "a".into(), quantity: 99 }],
        };
        // both nodes stock "a", so candidates exist but quantity is infeasible
        let err = solve_full(&order, &net, &OptimizerConfig::default()).unwrap_err();
        assert!(matches!(err, SolveError::Infeasible { .. }));
    }

    // Expected objectives below were first computed with the brute-force
    // enumerator in tests/common (see tests/solver_oracle.rs) and frozen.
    #[test]
    fn prefers_no_split_without_savings() {
        let (net, order) = two_node_instance(0.0);
        let asg = solve_full(&order, &net, &OptimizerConfig::default()).unwrap();
        assert_eq!(asg.nodes_used, 1);
        assert_eq!(asg.used_nodes(), vec!["n2"]);
        assert_eq!(asg.objective, 9.0);
    }

    #[test]
    fn splits_when_clearance_pays_for_it() {
        let (net, order) = two_node_instance(10.0);
        let asg = solve_full(&order, &net, &OptimizerConfig::default()).unwrap();
        assert_eq!(asg.nodes_used, 2);
        assert_eq!(asg.used_nodes(), vec!["n1", "n2"]);
        assert_eq!(asg.objective, 3.0);
        assert_eq!(asg.shipping_cost, 13.0);
        assert_eq!(asg.clearance_savings_total, 10.0);
    }

    #[test]
    fn single_unit_order_never_splits() {
        let (net, _) = two_node_instance(10.0);
        let order = Order {
            order_id: "o3".into(),
            destination: Point::new(0.0, 0.0),
            lines: vec![OrderLine { item_id: "a".into(), quantity: 1 }],
        };
        let asg = solve_full(&order, &net, &OptimizerConfig::default()).unwrap();
        assert_eq!(asg.nodes_used, 1);
    }

    #[test]
    fn no_split_scan_matches_full_solver_on_no_split_instance() {
        let (net, order) = two_node_instance(0.0);
        let config = OptimizerConfig::default();
        let scan = solve_no_split(&order, &net, &config).unwrap();
        assert_eq!(scan.used_nodes(), vec!["n2"]);
        assert_eq!(scan.objective, 9.0);
        let full = solve_full(&order, &net, &config).unwrap();
        assert_eq!(scan.objective, full.objective);
        assert_eq!(scan, full);
    }

    #[test]
    fn no_split_scan_reports_infeasible_as_none() {
        let (mut net, order) = two_node_instance(0.0);
        // nobody holds both items any more
        net.inventory.get_mut("b").unwrap().remove("n2");
        net.inventory.entry("b".into()).or_default().insert("n1".into(), 0);
        assert!(solve_no_split(&order, &net, &OptimizerConfig::default()).is_none());
    }

    #[test]
    fn no_split_scan_takes_sole_feasible_node_regardless_of_cost() {
        let (mut net, order) = two_node_instance(0.0);
        // make n2 (the only full-inventory node) expensive; it still wins
        net.nodes[1].fixed_shipment_cost = 500.0;
        let scan = solve_no_split(&order, &net, &OptimizerConfig::default()).unwrap();
        assert_eq!(scan.used_nodes(), vec!["n2"]);
    }

    #[test]
    fn quantity_splits_across_nodes_when_no_node_has_full_stock() {
        let (mut net, _) = two_node_instance(0.0);
        net.inventory.get_mut("a").unwrap().insert("n1".into(), 1);
        net.inventory.get_mut("a").unwrap().insert("n2".into(), 1);
        let order = Order {
            order_id: "o4".into(),
            destination: Point::new(0.0, 0.0),
            lines: vec![OrderLine { item_id: "a".into(), quantity: 2 }],
        };
        let asg = solve_full(&order, &net, &OptimizerConfig::default()).unwrap();
        assert_eq!(asg.nodes_used, 2);
        assert_eq!(asg.allocations.len(), 2);
        assert!(crate::domain::verify_assignment(&order, &net, &asg, 1.0).is_empty());
    }

    #[test]
    fn label_orders_preserves_input_order_and_labels() {
        let (net, order) = two_node_instance(10.0);
        let single = Order {
            order_id: "o-single".into(),
            destination: Point::new(0.0, 0.0),
            lines: vec![OrderLine { item_id: "a".into(), quantity: 1 }],
        };
        let labels =
            label_orders(&[order.clone(), single], &net, &OptimizerConfig::default()).unwrap();
        assert_eq!(labels[0].order_id, "o1");
        assert!(labels[0].split);
        assert_eq!(labels[1].order_id, "o-single");
        assert!(!labels[1].split);
    }

    #[test]
    fn label_orders_names_failing_order() {
        let (net, order) = two_node_instance(0.0);
        let bad = Order {
            order_id: "o-bad".into(),
            destination: Point::new(0.0, 0.0),
            lines: vec![OrderLine { item_id: "ghost".into(), quantity: 1 }],
        };
        let err = label_orders(&[order, bad], &net, &OptimizerConfig::default()).unwrap_err();
        assert!(err.to_string().contains("o-bad"));
    }

    #[test]
    fn full_solver_counts_more_work_than_scan() {
        let (net, order) = two_node_instance(0.0);
        let config = OptimizerConfig::default();
        let (_, full_stats) = solve_full_detailed(&order, &net, &config).unwrap();
        let (_, scan_stats) = solve_no_split_detailed(&order, &net, &config);
        assert!(full_stats.cost_evaluations > scan_stats.cost_evaluations);
        assert!(scan_stats.cost_evaluations <= 2);
    }

    #[test]
    fn deterministic_reruns() {
        let (net, order) = two_node_instance(10.0);
        let config = OptimizerConfig::default();
        let a = solve_full(&order, &net, &config).unwrap();
        let b = solve_full(&order, &net, &config).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }
}
