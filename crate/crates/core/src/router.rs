//! The live deciding pipeline: per order, either shortcut immediately
//! (single-unit orders), shortcut on a confident no-split prediction (linear
//! node scan instead of the full solver), or fall through to the full
//! optimizer. The stream simulator measures work saved in solver cost
//! evaluations and, against ground truth, the cost regret of shortcutting.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Assignment, FulfillmentNetwork, Order};
use crate::features::extract_features;
use crate::model::{ModelError, SplitPredictor};
use crate::optimizer::{
    candidate_nodes, solve_full_detailed, solve_no_split_detailed, OptimizerConfig, SolveError,
};

/// Router knobs: the confidence threshold for shortcutting (an order is
/// shortcut when the predicted no-split confidence `1 - p_split` reaches
/// it) and whether single-unit orders bypass the model entirely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouterConfig {
    pub threshold: f64,
    pub trivial_bypass: bool,
}

impl Default for RouterConfig {
    fn default() -> Self {
        RouterConfig { threshold: 0.97, trivial_bypass: true }
    }
}

/// Which path an order took through the router.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Route {
    /// Single-unit order: no split is possible, scan without predicting.
    TrivialNoSplit,
    /// Confident no-split prediction, single-node scan succeeded.
    ShortcutNoSplit,
    /// Confident no-split prediction but no single node was feasible;
    /// escalated to the full optimizer. Tallied as a model miss.
    ShortcutFallback,
    /// Prediction was not confident enough; full optimizer ran.
    FullOptimizer,
}

impl Route {
    pub fn as_str(&self) -> &'static str {
        match self {
            Route::TrivialNoSplit => "trivial_no_split",
            Route::ShortcutNoSplit => "shortcut_no_split",
            Route::ShortcutFallback => "shortcut_fallback",
            Route::FullOptimizer => "full_optimizer",
        }
    }

    pub fn from_str(s: &str) -> Option<Route> {
        match s {
            "trivial_no_split" => Some(Route::TrivialNoSplit),
            "shortcut_no_split" => Some(Route::ShortcutNoSplit),
            "shortcut_fallback" => Some(Route::ShortcutFallback),
            "full_optimizer" => Some(Route::FullOptimizer),
            _ => None,
        }
    }
}

/// The routing decision and decision cost for one order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingOutcome {
    pub order_id: String,
    pub route: Route,
    pub assignment: Assignment,
    /// Absent when the model was never consulted (trivial bypass).
    pub predicted_p_split: Option<f64>,
    /// Candidate-node cost evaluations spent deciding this order.
    pub decide_cost_units: u64,
    /// `objective(assignment) - objective(solve_full)`; present only when
    /// the simulator computed ground truth.
    pub regret: Option<f64>,
}

#[derive(Debug, thiserror::Error)]
pub enum RouterError {
    #[error("router threshold {value} is outside [0.5, 1]")]
    BadThreshold { value: f64 },
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Route one order: trivial bypass, confident-no-split shortcut, or full
/// optimization. Pure given an immutable predictor and network.
pub fn route_order<P: SplitPredictor>(
    order: &Order,
    network: &FulfillmentNetwork,
    predictor: &P,
    config: &RouterConfig,
    opt_config: &OptimizerConfig,
) -> Result<RoutingOutcome, RouterError> {
    if !(0.5..=1.0).contains(&config.threshold) {
        return Err(RouterError::BadThreshold { value: config.threshold });
    }

    if config.trivial_bypass && order.is_single_unit() {
        let (scan, stats) = solve_no_split_detailed(order, network, opt_config);
        if let Some(assignment) = scan {
            return Ok(RoutingOutcome {
                order_id: order.order_id.clone(),
                route: Route::TrivialNoSplit,
                assignment,
                predicted_p_split: None,
                decide_cost_units: stats.cost_evaluations,
                regret: None,
            });
        }
        // a single unit with no feasible node: let the full solver raise
        // the infeasibility error with the order attached
        let (assignment, full_stats) = solve_full_detailed(order, network, opt_config)?;
        return Ok(RoutingOutcome {
            order_id: order.order_id.clone(),
            route: Route::TrivialNoSplit,
            assignment,
            predicted_p_split: None,
            decide_cost_units: stats.cost_evaluations + full_stats.cost_evaluations,
            regret: None,
        });
    }

    let candidates = candidate_nodes(order, network, opt_config)?;
    let fv = extract_features(order, network, &candidates);
    let p_split = predictor.predict_proba(&fv)?;

    if 1.0 - p_split >= config.threshold {
        let (scan, scan_stats) = solve_no_split_detailed(order, network, opt_config);
        match scan {
            Some(assignment) => {
                return Ok(RoutingOutcome {
                    order_id: order.order_id.clone(),
                    route: Route::ShortcutNoSplit,
                    assignment,
                    predicted_p_split: Some(p_split),
                    decide_cost_units: scan_stats.cost_evaluations,
                    regret: None,
                });
            }
            None => {
                let (assignment, full_stats) = solve_full_detailed(order, network, opt_config)?;
                return Ok(RoutingOutcome {
                    order_id: order.order_id.clone(),
                    route: Route::ShortcutFallback,
                    assignment,
                    predicted_p_split: Some(p_split),
                    decide_cost_units: scan_stats.cost_evaluations + full_stats.cost_evaluations,
                    regret: None,
                });
            }
        }
    }

    let (assignment, full_stats) = solve_full_detailed(order, network, opt_config)?;
    Ok(RoutingOutcome {
        order_id: order.order_id.clone(),
        route: Route::FullOptimizer,
        assignment,
        predicted_p_split: Some(p_split),
        decide_cost_units: full_stats.cost_evaluations,
        regret: None,
    })
}

/// Aggregates over one simulated stream. Wall time covers the routing pass
/// only (the ground-truth pass is measurement overhead, not decision work)
/// and is deliberately excluded from serialization so output files stay
/// byte-identical across runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamSummary {
    pub total_orders: usize,
    pub routed_orders: usize,
    pub error_count: usize,
    /// First few per-order errors, order id first.
    pub errors: Vec<String>,
    pub trivial_count: usize,
    pub shortcut_count: usize,
    pub fallback_count: usize,
    pub full_count: usize,
    pub fraction_trivial: f64,
    pub fraction_shortcut: f64,
    pub fraction_fallback: f64,
    pub fraction_full: f64,
    /// Orders that are not single-unit, the population shortcutting aims at.
    pub multi_item_orders: usize,
    /// Share of multi-item orders that took the shortcut scan.
    pub shortcut_coverage_multi: Option<f64>,
    /// Routes that skipped the full optimizer entirely.
    pub optimizer_invocations_avoided: usize,
    pub decide_cost_units: u64,
    /// Cost of deciding every order with the full optimizer; present only
    /// when ground truth was computed.
    pub counterfactual_cost_units: Option<u64>,
    /// Among shortcut (model-predicted) orders, how many truly split.
    pub shortcut_errors: Option<usize>,
    pub shortcut_error_rate: Option<f64>,
    pub total_regret: Option<f64>,
    pub mean_regret: Option<f64>,
    #[serde(skip)]
    pub routing_seconds: f64,
}

/// Route every order in sequence (internally parallel, outcomes in input
/// order). Per-order errors are tallied in the summary and the stream
/// continues. With `with_ground_truth`, a side pass runs the full optimizer
/// on every routed order to fill in regret, shortcut error rate, and the
/// all-full-optimizer counterfactual cost.
pub fn simulate_stream<P: SplitPredictor + Sync>(
    orders: &[Order],
    network: &FulfillmentNetwork,
    predictor: &P,
    config: &RouterConfig,
    opt_config: &OptimizerConfig,
    with_ground_truth: bool,
) -> (Vec<RoutingOutcome>, StreamSummary) {
    let started = Instant::now();
    let results: Vec<Result<RoutingOutcome, RouterError>> = orders
        .par_iter()
        .map(|order| route_order(order, network, predictor, config, opt_config))
        .collect();
    let routing_seconds = started.elapsed().as_secs_f64();

    let mut outcomes = Vec::with_capacity(orders.len());
    let mut errors = Vec::new();
    let mut error_count = 0usize;
    for (order, result) in orders.iter().zip(results) {
        match result {
            Ok(outcome) => outcomes.push(outcome),
            Err(e) => {
                error_count += 1;
                if errors.len() < 20 {
                    errors.push(format!("{}: {e}", order.order_id));
                }
            }
        }
    }

    if with_ground_truth {
        let truths: Vec<Option<(f64, u64, u32)>> = outcomes
            .par_iter()
            .map(|o| {
                let order = orders.iter().find(|ord| ord.order_id == o.order_id)?;
                let (assignment, stats) = solve_full_detailed(order, network, opt_config).ok()?;
                Some((assignment.objective, stats.cost_evaluations, assignment.nodes_used))
            })
            .collect();
        for (outcome, truth) in outcomes.iter_mut().zip(&truths) {
            if let Some((optimum, _, _)) = truth {
                outcome.regret = Some(outcome.assignment.objective - optimum);
            }
        }
        let counterfactual: u64 = truths.iter().flatten().map(|(_, units, _)| units).sum();
        let shortcut_errors = outcomes
            .iter()
            .zip(&truths)
            .filter(|(o, t)| {
                o.route == Route::ShortcutNoSplit
                    && t.map_or(false, |(_, _, nodes_used)| nodes_used > 1)
            })
            .count();
        let summary = build_summary(
            orders,
            &outcomes,
            error_count,
            errors,
            routing_seconds,
            Some(counterfactual),
            Some(shortcut_errors),
        );
        return (outcomes, summary);
    }

    let summary =
        build_summary(orders, &outcomes, error_count, errors, routing_seconds, None, None);
    (outcomes, summary)
}

fn build_summary(
    orders: &[Order],
    outcomes: &[RoutingOutcome],
    error_count: usize,
    errors: Vec<String>,
    routing_seconds: f64,
    counterfactual_cost_units: Option<u64>,
    shortcut_errors: Option<usize>,
) -> StreamSummary {
    let count = |route: Route| outcomes.iter().filter(|o| o.route == route).count();
    let trivial_count = count(Route::TrivialNoSplit);
    let shortcut_count = count(Route::ShortcutNoSplit);
    let fallback_count = count(Route::ShortcutFallback);
    let full_count = count(Route::FullOptimizer);
    let routed = outcomes.len();
    let denom = routed.max(1) as f64;
    let multi_item_orders = orders.iter().filter(|o| !o.is_single_unit()).count();

    let regrets: Vec<f64> = outcomes
        .iter()
        .filter(|o| matches!(o.route, Route::TrivialNoSplit | Route::ShortcutNoSplit))
        .filter_map(|o| o.regret)
        .collect();
    let total_regret = counterfactual_cost_units.map(|_| regrets.iter().sum::<f64>());
    let mean_regret = total_regret
        .map(|t| if regrets.is_empty() { 0.0 } else { t / regrets.len() as f64 });

    StreamSummary {
        total_orders: orders.len(),
        routed_orders: routed,
        error_count,
        errors,
        trivial_count,
        shortcut_count,
        fallback_count,
        full_count,
        fraction_trivial: trivial_count as f64 / denom,
        fraction_shortcut: shortcut_count as f64 / denom,
        fraction_fallback: fallback_count as f64 / denom,
        fraction_full: full_count as f64 / denom,
        multi_item_orders,
        shortcut_coverage_multi: if multi_item_orders > 0 {
            Some(shortcut_count as f64 / multi_item_orders as f64)
        } else {
            None
        },
        optimizer_invocations_avoided: trivial_count + shortcut_count,
        decide_cost_units: outcomes.iter().map(|o| o.decide_cost_units).sum(),
        counterfactual_cost_units,
        shortcut_errors,
        shortcut_error_rate: shortcut_errors.map(|e| {
            if shortcut_count > 0 { e as f64 / shortcut_count as f64 } else { 0.0 }
        }),
        total_regret,
        mean_regret,
        routing_seconds,
    }
}
