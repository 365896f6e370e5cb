//! Seed-driven generator of fulfillment networks and order streams.
//!
//! Everything is a pure function of the configuration: the network draws
//! from one RNG stream and the order stream from another, both derived from
//! the configured seed, so regenerating with the same inputs reproduces the
//! outputs byte for byte.

use rand::seq::index::sample as sample_indices;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    FulfillmentNetwork, ItemCatalogEntry, Node, NodeKind, Order, OrderLine, Point,
};

/// Orders never exceed this many lines; the line-count distribution is a
/// shifted geometric truncated here.
pub const MAX_LINES_PER_ORDER: u32 = 8;

/// Item weights and prices are drawn from these fixed ranges; the cost
/// tension that matters for splitting is configurable through the node cost
/// and clearance ranges instead.
const ITEM_WEIGHT_RANGE: (f64, f64) = (0.2, 5.0);
const ITEM_PRICE_RANGE: (f64, f64) = (5.0, 120.0);

/// All the knobs of the synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub seed: u64,
    pub n_nodes: usize,
    /// Fraction of nodes that are stores (the rest are fulfillment centers).
    pub store_fraction: f64,
    pub n_items: usize,
    /// Fraction of catalog items eligible for ship-from-store.
    pub sfs_eligible_fraction: f64,
    pub n_orders: usize,
    /// Target mean number of lines per order, single-item orders included.
    pub items_per_order_mean: f64,
    /// Target share of orders that are one line of quantity one.
    pub single_item_order_fraction: f64,
    /// Probability that an (item, node) pair is stocked at all.
    pub inventory_density: f64,
    pub inventory_level_range: (u32, u32),
    /// Probability that a stocked (item, store) pair carries clearance savings.
    pub clearance_probability: f64,
    pub clearance_saving_range: (f64, f64),
    pub fixed_cost_range: (f64, f64),
    pub unit_rate_range: (f64, f64),
    /// Side length of the square region nodes and destinations live in.
    pub plane_size: f64,
    /// Line quantity distribution as (quantity, probability mass) pairs.
    pub quantity_distribution: Vec<(u32, f64)>,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            seed: 42,
            n_nodes: 30,
            store_fraction: 0.8,
            n_items: 150,
            sfs_eligible_fraction: 0.6,
            n_orders: 10_000,
            items_per_order_mean: 3.1,
            single_item_order_fraction: 0.301,
            inventory_density: 0.55,
            inventory_level_range: (1, 8),
            clearance_probability: 0.25,
            clearance_saving_range: (0.5, 5.0),
            fixed_cost_range: (4.0, 9.0),
            unit_rate_range: (0.01, 0.04),
            plane_size: 100.0,
            quantity_distribution: vec![(1, 0.72), (2, 0.20), (3, 0.08)],
        }
    }
}

#[derive(Debug, Clone, thiserror::Error, PartialEq)]
pub enum GenerateError {
    #[error("invalid generator config: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },
    #[error("order {index}: no feasible draw after {attempts} attempts; inventory too thin for the configured quantities")]
    InfeasibleDraw { index: usize, attempts: u32 },
}

fn invalid(field: &'static str, reason: impl Into<String>) -> GenerateError {
    GenerateError::InvalidConfig { field, reason: reason.into() }
}

impl GeneratorConfig {
    pub fn validate(&self) -> Result<(), GenerateError> {
        fn fraction(field: &'static str, v: f64) -> Result<(), GenerateError> {
            if !(0.0..=1.0).contains(&v) {
                return Err(invalid(field, format!("{v} is not in [0, 1]")));
            }
            Ok(())
        }
        fn range(field: &'static str, lo: f64, hi: f64) -> Result<(), GenerateError> {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(invalid(field, format!("[{lo}, {hi}] is not a valid range")));
            }
            Ok(())
        }

        if self.n_nodes < 1 {
            return Err(invalid("n_nodes", "must be at least 1"));
        }
        if self.n_items < 1 {
            return Err(invalid("n_items", "must be at least 1"));
        }
        if self.n_orders < 1 {
            return Err(invalid("n_orders", "must be at least 1"));
        }
        fraction("store_fraction", self.store_fraction)?;
        fraction("sfs_eligible_fraction", self.sfs_eligible_fraction)?;
        fraction("single_item_order_fraction", self.single_item_order_fraction)?;
        fraction("inventory_density", self.inventory_density)?;
        fraction("clearance_probability", self.clearance_probability)?;
        if !(self.items_per_order_mean > 0.0) {
            return Err(invalid("items_per_order_mean", "must be positive"));
        }
        if self.inventory_level_range.0 > self.inventory_level_range.1 {
            return Err(invalid("inventory_level_range", "min exceeds max"));
        }
        range("clearance_saving_range", self.clearance_saving_range.0, self.clearance_saving_range.1)?;
        if self.clearance_saving_range.0 < 0.0 {
            return Err(invalid("clearance_saving_range", "savings must be non-negative"));
        }
        range("fixed_cost_range", self.fixed_cost_range.0, self.fixed_cost_range.1)?;
        if self.fixed_cost_range.0 < 0.0 {
            return Err(invalid("fixed_cost_range", "costs must be non-negative"));
        }
        range("unit_rate_range", self.unit_rate_range.0, self.unit_rate_range.1)?;
        if self.unit_rate_range.0 < 0.0 {
            return Err(invalid("unit_rate_range", "rates must be non-negative"));
        }
        if !(self.plane_size > 0.0) {
            return Err(invalid("plane_size", "must be positive"));
        }
        if self.quantity_distribution.is_empty() {
            return Err(invalid("quantity_distribution", "must not be empty"));
        }
        let mut seen = std::collections::HashSet::new();
        let mut mass = 0.0;
        for &(q, m) in &self.quantity_distribution {
            if q < 1 {
                return Err(invalid("quantity_distribution", "quantities must be at least 1"));
            }
            if !seen.insert(q) {
                return Err(invalid("quantity_distribution", format!("quantity {q} repeated")));
            }
            if !(m >= 0.0) {
                return Err(invalid("quantity_distribution", "masses must be non-negative"));
            }
            mass += m;
        }
        if !(mass > 0.0) {
            return Err(invalid("quantity_distribution", "total mass must be positive"));
        }
        Ok(())
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

fn uniform_in(rng: &mut impl Rng, range: (f64, f64)) -> f64 {
    if range.0 == range.1 {
        range.0
    } else {
        rng.gen_range(range.0..range.1)
    }
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generate a fulfillment network from the config. The result always passes
/// `validate_network` with zero violations.
pub fn generate_network(config: &GeneratorConfig) -> Result<FulfillmentNetwork, GenerateError> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, 0);

    let n_eligible = round_half_up(config.n_items as f64 * config.sfs_eligible_fraction)
        .min(config.n_items);
    let catalog: Vec<ItemCatalogEntry> = (0..config.n_items)
        .map(|i| ItemCatalogEntry {
            item_id: format!("item-{i:04}"),
            weight: uniform_in(&mut rng, ITEM_WEIGHT_RANGE),
            price: uniform_in(&mut rng, ITEM_PRICE_RANGE),
            sfs_eligible: i < n_eligible,
        })
        .collect();

    let n_stores = round_half_up(config.n_nodes as f64 * config.store_fraction).min(config.n_nodes);
    let nodes: Vec<Node> = (0..config.n_nodes)
        .map(|i| {
            let kind = if i < n_stores { NodeKind::Store } else { NodeKind::FulfillmentCenter };
            Node {
                node_id: match kind {
                    NodeKind::Store => format!("store-{i:04}"),
                    NodeKind::FulfillmentCenter => format!("fc-{i:04}"),
                },
                kind,
                location: Point::new(
                    uniform_in(&mut rng, (0.0, config.plane_size)),
                    uniform_in(&mut rng, (0.0, config.plane_size)),
                ),
                fixed_shipment_cost: uniform_in(&mut rng, config.fixed_cost_range),
                unit_rate: uniform_in(&mut rng, config.unit_rate_range),
            }
        })
        .collect();

    let mut network = FulfillmentNetwork { catalog, nodes, ..Default::default() };

    for item_idx in 0..config.n_items {
        let sfs = network.catalog[item_idx].sfs_eligible;
        for node_idx in 0..config.n_nodes {
            let is_store = network.nodes[node_idx].kind == NodeKind::Store;
            if is_store && !sfs {
                continue; // stores may only stock SFS-eligible items
            }
            if rng.gen::<f64>() >= config.inventory_density {
                continue;
            }
            let units =
                rng.gen_range(config.inventory_level_range.0..=config.inventory_level_range.1);
            let item_id = network.catalog[item_idx].item_id.clone();
            let node_id = network.nodes[node_idx].node_id.clone();
            network.inventory.entry(item_id.clone()).or_default().insert(node_id.clone(), units);
            if is_store && units > 0 && rng.gen::<f64>() < config.clearance_probability {
                let saving = uniform_in(&mut rng, config.clearance_saving_range);
                network.clearance_saving.entry(item_id).or_default().insert(node_id, saving);
            }
        }
    }

    debug_assert!(crate::domain::validate_network(&network).is_empty());
    Ok(network)
}

/// Probability masses for line counts 1..=MAX_LINES of the multi-item
/// branch: a shifted geometric truncated at MAX_LINES, with its success
/// probability solved by bisection so that the overall stream mean (single
/// branch included) hits `items_per_order_mean`.
fn line_count_pmf(target_mean: f64) -> Vec<f64> {
    let max = MAX_LINES_PER_ORDER as usize;
    let pmf_for = |p: f64| -> Vec<f64> {
        let mut pmf: Vec<f64> = (0..max).map(|k| p * (1.0 - p).powi(k as i32)).collect();
        let total: f64 = pmf.iter().sum();
        pmf.iter_mut().for_each(|v| *v /= total);
        pmf
    };
    let mean_of = |pmf: &[f64]| -> f64 {
        pmf.iter().enumerate().map(|(k, &m)| (k + 1) as f64 * m).sum()
    };

    let max_mean = (1.0 + max as f64) / 2.0;
    if target_mean <= 1.0 + 1e-9 {
        let mut pmf = vec![0.0; max];
        pmf[0] = 1.0;
        return pmf;
    }
    let target = target_mean.min(max_mean - 1e-6);

    // mean is decreasing in p
    let (mut lo, mut hi) = (1e-9, 1.0 - 1e-9);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if mean_of(&pmf_for(mid)) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    pmf_for(0.5 * (lo + hi))
}

fn sample_discrete(rng: &mut impl Rng, pmf: &[f64]) -> usize {
    let total: f64 = pmf.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (k, &m) in pmf.iter().enumerate() {
        u -= m;
        if u < 0.0 {
            return k;
        }
    }
    pmf.len() - 1
}

/// Generate exactly `n_orders` orders against the network. Infeasible draws
/// (an item whose network-wide stock cannot cover the drawn quantity) are
/// rejected and redrawn up to 100 times before erroring out.
pub fn generate_orders(
    config: &GeneratorConfig,
    network: &FulfillmentNetwork,
) -> Result<Vec<Order>, GenerateError> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, 1);

    let fulfillable: Vec<usize> = (0..network.catalog.len())
        .filter(|&i| network.total_units(&network.catalog[i].item_id) >= 1)
        .collect();
    if fulfillable.is_empty() {
        return Err(GenerateError::InfeasibleDraw { index: 0, attempts: 0 });
    }

    let single_frac = config.single_item_order_fraction;
    let multi_mean = if single_frac >= 1.0 - 1e-12 {
        1.0
    } else {
        (config.items_per_order_mean - single_frac) / (1.0 - single_frac)
    };
    let line_pmf = line_count_pmf(multi_mean);

    let qty_levels: Vec<u32> = config.quantity_distribution.iter().map(|&(q, _)| q).collect();
    let qty_pmf: Vec<f64> = config.quantity_distribution.iter().map(|&(_, m)| m).collect();
    // quantity distribution conditioned on >= 2, for one-line multi-item
    // draws; falls back to the unconditioned one when there is no mass there
    let qty_pmf_multi: Vec<f64> = {
        let masked: Vec<f64> = config
            .quantity_distribution
            .iter()
            .map(|&(q, m)| if q >= 2 { m } else { 0.0 })
            .collect();
        if masked.iter().sum::<f64>() > 0.0 {
            masked
        } else {
            qty_pmf.clone()
        }
    };

    const MAX_ATTEMPTS: u32 = 100;
    let mut orders = Vec::with_capacity(config.n_orders);
    for index in 0..config.n_orders {
        let mut accepted = None;
        for _attempt in 0..MAX_ATTEMPTS {
            let destination = Point::new(
                uniform_in(&mut rng, (0.0, config.plane_size)),
                uniform_in(&mut rng, (0.0, config.plane_size)),
            );
            let single = rng.gen::<f64>() < single_frac;
            let lines: Vec<OrderLine> = if single {
                let idx = fulfillable[rng.gen_range(0..fulfillable.len())];
                vec![OrderLine { item_id: network.catalog[idx].item_id.clone(), quantity: 1 }]
            } else {
                let n_lines = (sample_discrete(&mut rng, &line_pmf) + 1).min(fulfillable.len());
                let mut picks: Vec<usize> =
                    sample_indices(&mut rng, fulfillable.len(), n_lines).into_iter().collect();
                picks.sort_unstable();
                picks
                    .into_iter()
                    .map(|p| {
                        let pmf = if n_lines == 1 { &qty_pmf_multi } else { &qty_pmf };
                        let quantity = qty_levels[sample_discrete(&mut rng, pmf)];
                        OrderLine {
                            item_id: network.catalog[fulfillable[p]].item_id.clone(),
                            quantity,
                        }
                    })
                    .collect()
            };

            let feasible = lines
                .iter()
                .all(|l| network.total_units(&l.item_id) >= l.quantity as u64);
            if feasible {
                accepted = Some(Order { order_id: format!("ord-{index:06}"), destination, lines });
                break;
            }
        }
        match accepted {
            Some(order) => orders.push(order),
            None => return Err(GenerateError::InfeasibleDraw { index, attempts: MAX_ATTEMPTS }),
        }
    }
    Ok(orders)
}
