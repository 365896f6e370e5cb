//! Shared domain types for fulfillment networks, orders, and assignments,
//! plus the cost primitives and validation every other module builds on.
//!
//! All types are immutable values after construction; nothing here holds
//! interior mutability, so everything is safe to share across threads.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

/// A point on the abstract fulfillment plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    /// Euclidean distance to another point.
    pub fn distance_to(&self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        (dx * dx + dy * dy).sqrt()
    }
}

/// One sellable item as known to the network catalog.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemCatalogEntry {
    pub item_id: String,
    /// Mass per unit quantity; must be strictly positive.
    pub weight: f64,
    /// Currency per unit; non-negative.
    pub price: f64,
    /// Whether the item may be shipped from stores as well as fulfillment centers.
    pub sfs_eligible: bool,
}

/// What kind of location a fulfillment node is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NodeKind {
    Store,
    FulfillmentCenter,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeKind::Store => write!(f, "store"),
            NodeKind::FulfillmentCenter => write!(f, "fc"),
        }
    }
}

/// A location that can ship items: a retail store or a fulfillment center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub node_id: String,
    pub kind: NodeKind,
    pub location: Point,
    /// Currency charged once per (order, node) shipment.
    pub fixed_shipment_cost: f64,
    /// Currency per unit mass per unit distance.
    pub unit_rate: f64,
}

/// The full fulfillment network: catalog, nodes, per-(item, node) inventory,
/// and per-(item, node) clearance savings.
///
/// Inventory and clearance savings are nested `item_id -> node_id -> value`
/// maps; a clearance entry is only meaningful where an inventory entry
/// exists, and an absent entry means zero savings.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FulfillmentNetwork {
    pub catalog: Vec<ItemCatalogEntry>,
    pub nodes: Vec<Node>,
    pub inventory: BTreeMap<String, BTreeMap<String, u32>>,
    pub clearance_saving: BTreeMap<String, BTreeMap<String, f64>>,
}

impl FulfillmentNetwork {
    pub fn item(&self, item_id: &str) -> Option<&ItemCatalogEntry> {
        self.catalog.iter().find(|it| it.item_id == item_id)
    }

    pub fn node(&self, node_id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.node_id == node_id)
    }

    /// Units of `item_id` on hand at `node_id`; absent entries are zero.
    pub fn units_on_hand(&self, item_id: &str, node_id: &str) -> u32 {
        self.inventory
            .get(item_id)
            .and_then(|m| m.get(node_id))
            .copied()
            .unwrap_or(0)
    }

    /// Per-unit clearance saving for fulfilling `item_id` from `node_id`;
    /// absent entries are zero.
    pub fn clearance_saving(&self, item_id: &str, node_id: &str) -> f64 {
        self.clearance_saving
            .get(item_id)
            .and_then(|m| m.get(node_id))
            .copied()
            .unwrap_or(0.0)
    }

    /// Total units of `item_id` across all nodes.
    pub fn total_units(&self, item_id: &str) -> u64 {
        self.inventory
            .get(item_id)
            .map(|m| m.values().map(|&u| u as u64).sum())
            .unwrap_or(0)
    }
}

/// One (item, quantity) entry of an order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OrderLine {
    pub item_id: String,
    pub quantity: u32,
}

/// A customer order: destination plus one line per distinct item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Order {
    pub order_id: String,
    pub destination: Point,
    pub lines: Vec<OrderLine>,
}

impl Order {
    /// Total ordered units across all lines.
    pub fn total_quantity(&self) -> u32 {
        self.lines.iter().map(|l| l.quantity).sum()
    }

    /// True when the order is one line of quantity one, i.e. a single unit
    /// that cannot be split no matter what the optimizer decides.
    pub fn is_single_unit(&self) -> bool {
        self.lines.len() == 1 && self.lines[0].quantity == 1
    }
}

/// One (item, node, quantity) piece of an assignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Allocation {
    pub item_id: String,
    pub node_id: String,
    pub quantity: u32,
}

/// A complete fulfillment decision for one order.
///
/// Always construct through [`Assignment::compute`] so that the cost sums
/// are accumulated in one canonical order; equality of allocation sets then
/// implies bit-for-bit equality of the derived cost fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub allocations: Vec<Allocation>,
    /// shipping_cost - w_clearance * clearance_savings_total.
    pub objective: f64,
    pub shipping_cost: f64,
    pub clearance_savings_total: f64,
    /// Number of distinct nodes with a positive allocation.
    pub nodes_used: u32,
}

impl Assignment {
    /// Build an assignment from raw allocations, computing all cost fields
    /// canonically: allocations are sorted by (item, node), the fixed cost
    /// is charged once per distinct node in ascending node-id order, and the
    /// variable cost and savings are summed in allocation order.
    pub fn compute(
        order: &Order,
        network: &FulfillmentNetwork,
        mut allocations: Vec<Allocation>,
        w_clearance: f64,
    ) -> Assignment {
        allocations.sort_by(|a, b| {
            (a.item_id.as_str(), a.node_id.as_str()).cmp(&(b.item_id.as_str(), b.node_id.as_str()))
        });

        let mut used: Vec<String> = allocations
            .iter()
            .filter(|a| a.quantity > 0)
            .map(|a| a.node_id.clone())
            .collect();
        used.sort_unstable();
        used.dedup();

        let mut shipping = 0.0;
        for node_id in &used {
            let node = network.node(node_id).expect("allocation references known node");
            shipping += node.fixed_shipment_cost;
        }
        let mut savings = 0.0;
        for alloc in &allocations {
            if alloc.quantity == 0 {
                continue;
            }
            let node = network.node(&alloc.node_id).expect("allocation references known node");
            let item = network.item(&alloc.item_id).expect("allocation references known item");
            let dist = shipping_distance(node, order.destination);
            let unit_var = item.weight * node.unit_rate * dist;
            shipping += alloc.quantity as f64 * unit_var;
            savings += alloc.quantity as f64 * network.clearance_saving(&alloc.item_id, &alloc.node_id);
        }

        Assignment {
            allocations,
            objective: shipping - w_clearance * savings,
            shipping_cost: shipping,
            clearance_savings_total: savings,
            nodes_used: used.len() as u32,
        }
    }

    /// Distinct node ids with a positive allocation, ascending.
    pub fn used_nodes(&self) -> Vec<&str> {
        let mut used: Vec<&str> = self
            .allocations
            .iter()
            .filter(|a| a.quantity > 0)
            .map(|a| a.node_id.as_str())
            .collect();
        used.sort_unstable();
        used.dedup();
        used
    }
}

/// The optimizer's verdict for one order: split or not, and at what cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitLabel {
    pub order_id: String,
    /// True iff the optimal assignment uses more than one node.
    pub split: bool,
    pub nodes_used: u32,
    pub objective: f64,
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Machine-readable code for one network or assignment invariant violation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationCode {
    DuplicateItemId,
    DuplicateNodeId,
    NonPositiveItemWeight,
    NegativeItemPrice,
    NegativeFixedCost,
    NegativeUnitRate,
    DanglingInventoryRef,
    DanglingClearanceRef,
    ClearanceWithoutInventory,
    NegativeClearanceSaving,
    StoreStocksNonSfs,
    AllocationQuantityMismatch,
    AllocationExceedsInventory,
    AllocationUnknownRef,
    ObjectiveMismatch,
    NodesUsedMismatch,
}

impl ViolationCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViolationCode::DuplicateItemId => "DUPLICATE_ITEM_ID",
            ViolationCode::DuplicateNodeId => "DUPLICATE_NODE_ID",
            ViolationCode::NonPositiveItemWeight => "NON_POSITIVE_ITEM_WEIGHT",
            ViolationCode::NegativeItemPrice => "NEGATIVE_ITEM_PRICE",
            ViolationCode::NegativeFixedCost => "NEGATIVE_FIXED_COST",
            ViolationCode::NegativeUnitRate => "NEGATIVE_UNIT_RATE",
            ViolationCode::DanglingInventoryRef => "DANGLING_INVENTORY_REF",
            ViolationCode::DanglingClearanceRef => "DANGLING_CLEARANCE_REF",
            ViolationCode::ClearanceWithoutInventory => "CLEARANCE_WITHOUT_INVENTORY",
            ViolationCode::NegativeClearanceSaving => "NEGATIVE_CLEARANCE_SAVING",
            ViolationCode::StoreStocksNonSfs => "STORE_STOCKS_NON_SFS",
            ViolationCode::AllocationQuantityMismatch => "ALLOCATION_QUANTITY_MISMATCH",
            ViolationCode::AllocationExceedsInventory => "ALLOCATION_EXCEEDS_INVENTORY",
            ViolationCode::AllocationUnknownRef => "ALLOCATION_UNKNOWN_REF",
            ViolationCode::ObjectiveMismatch => "OBJECTIVE_MISMATCH",
            ViolationCode::NodesUsedMismatch => "NODES_USED_MISMATCH",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One invariant violation; violations are data, not errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub code: ViolationCode,
    pub detail: String,
}

impl Violation {
    fn new(code: ViolationCode, detail: impl Into<String>) -> Self {
        Violation { code, detail: detail.into() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.detail)
    }
}

/// Check every network invariant and return one violation per breach.
/// An empty report means the network is valid. Pure: same input, same report.
pub fn validate_network(network: &FulfillmentNetwork) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut items: HashMap<&str, &ItemCatalogEntry> = HashMap::new();
    for item in &network.catalog {
        if items.insert(&item.item_id, item).is_some() {
            out.push(Violation::new(
                ViolationCode::DuplicateItemId,
                format!("item '{}' appears more than once in the catalog", item.item_id),
            ));
        }
        if !(item.weight > 0.0) {
            out.push(Violation::new(
                ViolationCode::NonPositiveItemWeight,
                format!("item '{}' has weight {}", item.item_id, item.weight),
            ));
        }
        if !(item.price >= 0.0) {
            out.push(Violation::new(
                ViolationCode::NegativeItemPrice,
                format!("item '{}' has price {}", item.item_id, item.price),
            ));
        }
    }

    let mut nodes: HashMap<&str, &Node> = HashMap::new();
    for node in &network.nodes {
        if nodes.insert(&node.node_id, node).is_some() {
            out.push(Violation::new(
                ViolationCode::DuplicateNodeId,
                format!("node '{}' appears more than once", node.node_id),
            ));
        }
        if !(node.fixed_shipment_cost >= 0.0) {
            out.push(Violation::new(
                ViolationCode::NegativeFixedCost,
                format!("node '{}' has fixed cost {}", node.node_id, node.fixed_shipment_cost),
            ));
        }
        if !(node.unit_rate >= 0.0) {
            out.push(Violation::new(
                ViolationCode::NegativeUnitRate,
                format!("node '{}' has unit rate {}", node.node_id, node.unit_rate),
            ));
        }
    }

    for (item_id, per_node) in &network.inventory {
        for (node_id, &units) in per_node {
            let item = items.get(item_id.as_str());
            let node = nodes.get(node_id.as_str());
            if item.is_none() || node.is_none() {
                out.push(Violation::new(
                    ViolationCode::DanglingInventoryRef,
                    format!("inventory entry ({item_id}, {node_id}) references an unknown item or node"),
                ));
                continue;
            }
            let (item, node) = (item.unwrap(), node.unwrap());
            if node.kind == NodeKind::Store && units > 0 && !item.sfs_eligible {
                out.push(Violation::new(
                    ViolationCode::StoreStocksNonSfs,
                    format!("store '{node_id}' stocks non-SFS-eligible item '{item_id}'"),
                ));
            }
        }
    }

    for (item_id, per_node) in &network.clearance_saving {
        for (node_id, &saving) in per_node {
            if !items.contains_key(item_id.as_str()) || !nodes.contains_key(node_id.as_str()) {
                out.push(Violation::new(
                    ViolationCode::DanglingClearanceRef,
                    format!("clearance entry ({item_id}, {node_id}) references an unknown item or node"),
                ));
                continue;
            }
            let has_inventory = network
                .inventory
                .get(item_id)
                .map_or(false, |m| m.contains_key(node_id));
            if !has_inventory {
                out.push(Violation::new(
                    ViolationCode::ClearanceWithoutInventory,
                    format!("clearance entry ({item_id}, {node_id}) has no matching inventory entry"),
                ));
            }
            if !(saving >= 0.0) {
                out.push(Violation::new(
                    ViolationCode::NegativeClearanceSaving,
                    format!("clearance entry ({item_id}, {node_id}) has saving {saving}"),
                ));
            }
        }
    }

    out
}

/// Errors raised when an order cannot even be interpreted against a network.
#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum OrderError {
    #[error("order '{order_id}' has no lines")]
    Empty { order_id: String },
    #[error("order '{order_id}' repeats item '{item_id}' across lines")]
    DuplicateItem { order_id: String, item_id: String },
    #[error("order '{order_id}' line for item '{item_id}' has quantity 0")]
    ZeroQuantity { order_id: String, item_id: String },
    #[error("order '{order_id}' references unknown item '{item_id}'")]
    UnknownItem { order_id: String, item_id: String },
}

/// Check the order invariants (non-empty, distinct items, positive
/// quantities) and that every line references a catalog item.
pub fn validate_order(order: &Order, network: &FulfillmentNetwork) -> Result<(), OrderError> {
    if order.lines.is_empty() {
        return Err(OrderError::Empty { order_id: order.order_id.clone() });
    }
    let mut seen = HashSet::new();
    for line in &order.lines {
        if !seen.insert(line.item_id.as_str()) {
            return Err(OrderError::DuplicateItem {
                order_id: order.order_id.clone(),
                item_id: line.item_id.clone(),
            });
        }
        if line.quantity == 0 {
            return Err(OrderError::ZeroQuantity {
                order_id: order.order_id.clone(),
                item_id: line.item_id.clone(),
            });
        }
        if network.item(&line.item_id).is_none() {
            return Err(OrderError::UnknownItem {
                order_id: order.order_id.clone(),
                item_id: line.item_id.clone(),
            });
        }
    }
    Ok(())
}

/// Re-verify the assignment invariants independently of whatever solver
/// produced the assignment: per-item quantities, inventory limits, the
/// objective identity, and the nodes_used count.
pub fn verify_assignment(
    order: &Order,
    network: &FulfillmentNetwork,
    assignment: &Assignment,
    w_clearance: f64,
) -> Vec<Violation> {
    let mut out = Vec::new();

    let mut allocated: HashMap<&str, u64> = HashMap::new();
    let mut per_pair: HashMap<(&str, &str), u64> = HashMap::new();
    for alloc in &assignment.allocations {
        if network.item(&alloc.item_id).is_none() || network.node(&alloc.node_id).is_none() {
            out.push(Violation::new(
                ViolationCode::AllocationUnknownRef,
                format!("allocation ({}, {}) references an unknown item or node", alloc.item_id, alloc.node_id),
            ));
            continue;
        }
        *allocated.entry(&alloc.item_id).or_insert(0) += alloc.quantity as u64;
        *per_pair.entry((&alloc.item_id, &alloc.node_id)).or_insert(0) += alloc.quantity as u64;
    }

    for line in &order.lines {
        let got = allocated.get(line.item_id.as_str()).copied().unwrap_or(0);
        if got != line.quantity as u64 {
            out.push(Violation::new(
                ViolationCode::AllocationQuantityMismatch,
                format!("item '{}': ordered {}, allocated {}", line.item_id, line.quantity, got),
            ));
        }
    }

    for ((item_id, node_id), &qty) in &per_pair {
        let on_hand = network.units_on_hand(item_id, node_id) as u64;
        if qty > on_hand {
            out.push(Violation::new(
                ViolationCode::AllocationExceedsInventory,
                format!("({item_id}, {node_id}): allocated {qty}, on hand {on_hand}"),
            ));
        }
    }

    if out.iter().any(|v| v.code == ViolationCode::AllocationUnknownRef) {
        return out;
    }

    let recomputed = Assignment::compute(order, network, assignment.allocations.clone(), w_clearance);
    let tol = 1e-9 * (1.0 + assignment.objective.abs());
    if (recomputed.objective - assignment.objective).abs() > tol
        || (recomputed.shipping_cost - assignment.shipping_cost).abs() > tol
        || (recomputed.clearance_savings_total - assignment.clearance_savings_total).abs() > tol
    {
        out.push(Violation::new(
            ViolationCode::ObjectiveMismatch,
            format!(
                "stored objective {} differs from recomputed {}",
                assignment.objective, recomputed.objective
            ),
        ));
    }
    if recomputed.nodes_used != assignment.nodes_used {
        out.push(Violation::new(
            ViolationCode::NodesUsedMismatch,
            format!("stored nodes_used {} vs recomputed {}", assignment.nodes_used, recomputed.nodes_used),
        ));
    }

    out
}

// ---------------------------------------------------------------------------
// Cost primitives
// ---------------------------------------------------------------------------

/// Euclidean distance from a node to a destination on the plane.
pub fn shipping_distance(node: &Node, destination: Point) -> f64 {
    node.location.distance_to(destination)
}

/// Cost of one shipment of `total_weight` from `node` to `destination`:
/// the node's fixed cost plus rate x weight x distance. All units a node
/// fulfills for one order share a single fixed cost.
pub fn shipment_cost(node: &Node, destination: Point, total_weight: f64) -> f64 {
    node.fixed_shipment_cost + node.unit_rate * total_weight * shipping_distance(node, destination)
}
